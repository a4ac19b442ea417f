"""Random test instances and a brute-force reference optimiser.

The generator mimics the flavour of the classic dense/sparse polynomial
benchmark families: random monomials up to a target degree, two-decimal
coefficients in [-1, 1], boxes ``[0, u]`` and inequality constraints that are
feasible by construction (each is built around a random interior point).
"""
from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np
from scipy.optimize import minimize

from .poly import Constraint, Polynomial, PolynomialProblem, Sense, check_feasible, evaluate


def _coefficient(rng: np.random.Generator) -> float:
    while True:
        c = round(float(rng.uniform(-1.0, 1.0)), 2)
        if c != 0.0:
            return c


def _random_key(rng: np.random.Generator, n: int, degree: int) -> tuple[int, ...]:
    return tuple(sorted(int(v) for v in rng.integers(0, n, size=degree)))


def random_polynomial(rng: np.random.Generator, n: int, degree: int, terms: int,
                      constant: bool = False) -> Polynomial:
    """Polynomial with ``terms`` distinct monomials, at least one of full degree."""
    keys = {_random_key(rng, n, degree)}
    tries = 0
    while len(keys) < terms and tries < 50 * terms:
        keys.add(_random_key(rng, n, int(rng.integers(1, degree + 1))))
        tries += 1
    coeffs = {k: _coefficient(rng) for k in sorted(keys)}
    if constant:
        coeffs[()] = _coefficient(rng)
    return Polynomial(coeffs)


def random_problem(rng: np.random.Generator | int, n: int = 3, degree: int = 2, terms: int | None = None,
                   constraints: int = 1, constraint_terms: int = 3, max_upper: int = 3,
                   name_prefix: str = "x") -> PolynomialProblem:
    """Random box-constrained polynomial problem with feasible inequality constraints."""
    rng = np.random.default_rng(rng)
    if n < 1 or degree < 1:
        raise ValueError("need n >= 1 and degree >= 1")
    terms = terms if terms is not None else n + 2
    upper = tuple(float(u) for u in rng.integers(1, max_upper + 1, size=n))
    lower = tuple(0.0 for _ in range(n))
    objective = random_polynomial(rng, n, degree, terms)
    anchor = rng.uniform(0.2, 0.8, size=n) * np.asarray(upper)
    cons = []
    for k in range(constraints):
        g = random_polynomial(rng, n, degree, constraint_terms)
        rhs = np.floor(100 * (evaluate(g, anchor) - rng.uniform(0.0, 0.5))) / 100
        cons.append(Constraint(g, Sense.GE, float(rhs), f"c{k + 1}"))
    names = tuple(f"{name_prefix}{j + 1}" for j in range(n))
    return PolynomialProblem(names, lower, upper, objective, tuple(cons))


def ds_style_problem(rng: np.random.Generator | int, n: int = 4, degree: int = 3, density: float = 0.3,
                     constraints: int = 2, max_upper: int = 5) -> PolynomialProblem:
    """Random problem whose monomial count follows a fill ``density``.

    Every polynomial receives ``round(density * M)`` monomials (at least two),
    where ``M`` is the number of non-constant monomials of degree at most
    ``degree`` in ``n`` variables, in the manner of the dense/sparse random
    families used to benchmark RLT codes.
    """
    if not 0.0 < density <= 1.0:
        raise ValueError("density must lie in (0, 1]")
    rng = np.random.default_rng(rng)
    possible = math.comb(n + degree, degree) - 1
    terms = max(2, int(round(density * possible)))
    return random_problem(rng, n=n, degree=degree, terms=terms, constraints=constraints,
                          constraint_terms=terms, max_upper=max_upper)


def evaluate_many(p: Polynomial, X: np.ndarray) -> np.ndarray:
    """Evaluate ``p`` at every row of ``X``."""
    X = np.atleast_2d(X)
    out = np.zeros(X.shape[0])
    for t in p.terms:
        term = np.full(X.shape[0], t.coefficient)
        for v in t.vars:
            term = term * X[:, v]
        out += term
    return out


@dataclass
class OracleResult:
    value: float
    x: np.ndarray | None
    feasible: bool


def brute_force(prob: PolynomialProblem, max_points: int = 2_000_000, step: float = 0.01,
                polish_starts: int = 20, tol: float = 1e-7) -> OracleResult:
    """Global minimum by grid search plus local SLSQP polishing.

    The grid uses ``step`` where the point budget allows and is coarsened
    evenly otherwise.  The best grid points, feasible or nearly so, seed the
    polish; every reported point passes ``check_feasible`` at ``tol``.
    """
    n = prob.n
    lo, hi = np.asarray(prob.lower), np.asarray(prob.upper)
    per_dim = max(2, int(max_points ** (1.0 / n)))
    axes = []
    for j in range(n):
        k = int(round((hi[j] - lo[j]) / step)) + 1
        axes.append(np.linspace(lo[j], hi[j], max(1, min(k, per_dim))))
    X = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    f = evaluate_many(prob.objective, X)
    viol = np.zeros(X.shape[0])
    for c in prob.constraints:
        g = evaluate_many(c.poly, X) - c.rhs
        viol += np.maximum(-g, 0.0) if c.sense is Sense.GE else np.abs(g)
    best_val, best_x = np.inf, None
    feas = viol <= tol
    if np.any(feas):
        i = int(np.flatnonzero(feas)[np.argmin(f[feas])])
        best_val, best_x = float(f[i]), X[i].copy()
    scale = 1.0 + np.abs(f).max()
    order = np.argsort(f + 10.0 * scale * viol, kind="stable")[:polish_starts]

    cons = []
    for c in prob.constraints:
        fun = (lambda x, c=c: evaluate(c.poly, x) - c.rhs)
        cons.append({"type": "ineq" if c.sense is Sense.GE else "eq", "fun": fun})
    for i in order:
        res = minimize(lambda x: evaluate(prob.objective, x), X[i], method="SLSQP",
                       bounds=list(zip(lo, hi)), constraints=cons,
                       options={"ftol": 1e-12, "maxiter": 200})
        x = np.clip(res.x, lo, hi)
        if check_feasible(prob, x, tol):
            val = evaluate(prob.objective, x)
            if val < best_val:
                best_val, best_x = val, x
    return OracleResult(best_val, best_x, best_x is not None)
