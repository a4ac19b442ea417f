"""Conic program IR, interior-point solver, eigen-solver and CBF export."""
from .cbf import read_cbf, write_cbf
from .cones import NonNeg, Psd, SecondOrder, Zero, smat, svec
from .ipm import solve
from .program import ConicProgram, ConicSolution, Status

__all__ = ["ConicProgram", "ConicSolution", "NonNeg", "Psd", "SecondOrder", "Status", "Zero",
           "read_cbf", "smat", "solve", "svec", "write_cbf"]
