"""Standard-form conic program and solver result types."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .cones import Cone, validate_cones


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    NEAR_OPTIMAL = "NearOptimal"  # stalled with every residual within NEAR_FACTOR * tol
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    DUAL_INFEASIBLE = "DualInfeasible"
    ITER_LIMIT = "IterLimit"
    NUMERICAL = "Numerical"

    def __str__(self) -> str:
        return self.value

    @property
    def solved(self) -> bool:
        return self in (Status.OPTIMAL, Status.NEAR_OPTIMAL)


@dataclass
class ConicProgram:
    """``min c'y + offset  s.t.  A y + s = b,  s in K``.

    ``A`` may be dense or a scipy sparse matrix; its rows follow the order of
    ``cones``.
    """

    c: np.ndarray
    A: np.ndarray | sp.spmatrix
    b: np.ndarray
    cones: list[Cone]
    offset: float = 0.0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.b = np.asarray(self.b, dtype=float).ravel()
        if not sp.issparse(self.A):
            self.A = np.asarray(self.A, dtype=float).reshape(-1, self.c.size)
        if self.c.size == 0:
            raise ValueError("conic program has no variables")
        m = validate_cones(self.cones)
        if self.A.shape != (m, self.c.size) or self.b.size != m:
            raise ValueError(f"inconsistent dimensions: A is {self.A.shape}, b has {self.b.size} rows, "
                             f"cones total {m}, c has {self.c.size} entries")

    @property
    def num_vars(self) -> int:
        return self.c.size

    @property
    def num_rows(self) -> int:
        return self.b.size

    def dense_A(self) -> np.ndarray:
        return self.A.toarray() if sp.issparse(self.A) else np.asarray(self.A, dtype=float)


@dataclass
class ConicSolution:
    status: Status
    y: np.ndarray
    s: np.ndarray
    z: np.ndarray
    obj: float
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    dual_obj: float = float("nan")
    history: list = field(default_factory=list)

    @property
    def residuals(self) -> tuple[float, float, float]:
        return self.primal_residual, self.dual_residual, self.gap
