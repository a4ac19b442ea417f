"""RLT relaxations of polynomial problems, strengthened by conic constraints."""
__version__ = "0.1.0"

from .bnb import BnbConfig, BnbResult, BnbStatus, solve_problem
from .poly import PolynomialProblem, parse_problem, read_problem
from .strengthen import ALL_VARIANTS, Variant

__all__ = ["ALL_VARIANTS", "BnbConfig", "BnbResult", "BnbStatus", "PolynomialProblem", "Variant",
           "__version__", "parse_problem", "read_problem", "solve_problem"]
