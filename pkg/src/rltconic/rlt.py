"""RLT lifting: J-sets, bound-factor constraints and the lifted linear relaxation.

Linear forms are dictionaries over monomial keys (sorted variable-index
tuples).  The empty key ``()`` is the constant 1, ``(i,)`` is the original
variable ``x_i`` and longer keys are RLT variables ``X_J``.  Keeping forms
over keys rather than column numbers lets every generator stay independent
of the column layout; :class:`LiftTable` resolves keys to columns at the end.
"""
from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .poly import Key, PolynomialProblem, Sense

Form = dict  # dict[Key, float]


def is_submultiset(a: Key, b: Key) -> bool:
    ca, cb = Counter(a), Counter(b)
    return all(cb[v] >= k for v, k in ca.items())


def submultisets(J: Key, min_degree: int = 2) -> list[Key]:
    counts = sorted(Counter(J).items())
    out = []
    for picks in itertools.product(*[range(m + 1) for _, m in counts]):
        key = tuple(v for (v, _), k in zip(counts, picks) for _ in range(k))
        if len(key) >= min_degree:
            out.append(key)
    return sorted(out, key=lambda k: (len(k), k))


def compute_jsets(prob: PolynomialProblem) -> list[Key]:
    """Degree >= 2 monomials of ``prob`` not contained in any other one."""
    keys = sorted(prob.monomial_keys(min_degree=2))
    return [k for k in keys if not any(k != o and len(o) >= len(k) and is_submultiset(k, o) for o in keys)]


def key_name(key: Key, names: Sequence[str] | None = None) -> str:
    if not key:
        return "1"
    if len(key) == 1:
        return names[key[0]] if names else f"x_{key[0] + 1}"
    return "X_" + "_".join(str(v + 1) for v in key)


class LiftTable:
    """Bijection between monomial keys and relaxation columns.

    Columns ``0..n-1`` are the original variables; lifted keys follow in
    insertion order.
    """

    def __init__(self, n: int, keys: Iterable[Key] = ()):
        self.n = n
        self.keys: list[Key] = []
        self.index: dict[Key, int] = {}
        for k in keys:
            self.add(k)

    def add(self, key: Key) -> int:
        key = tuple(key)
        if len(key) < 2:
            raise ValueError("lifted keys have degree >= 2")
        if key not in self.index:
            self.index[key] = self.n + len(self.keys)
            self.keys.append(key)
        return self.index[key]

    def __contains__(self, key: Key) -> bool:
        return len(key) == 1 or key in self.index

    def column(self, key: Key) -> int:
        if len(key) == 1:
            return key[0]
        return self.index[key]

    @property
    def ncols(self) -> int:
        return self.n + len(self.keys)

    def column_keys(self) -> list[Key]:
        return [(j,) for j in range(self.n)] + list(self.keys)

    def copy(self) -> LiftTable:
        return LiftTable(self.n, self.keys)

    def lift_point(self, x: Sequence[float]) -> np.ndarray:
        """Exact lifting ``(x, prod_J x)`` of an original point."""
        x = np.asarray(x, dtype=float)
        vals = [float(np.prod(x[list(k)])) for k in self.keys]
        return np.concatenate([x, vals])


@dataclass
class Row:
    form: Form  # constant-free
    sense: Sense
    rhs: float
    kind: str = "constraint"

    def slack(self, point, lift: LiftTable | None = None) -> float:
        """``form(point) - rhs``: >= 0 for a satisfied GE row, 0 for EQ."""
        return eval_form(self.form, point, lift) - self.rhs


@dataclass
class SocBlock:
    """``entries[0] >= ||entries[1:]||_2`` with affine entries."""

    key: tuple
    entries: tuple


@dataclass
class PsdBlock:
    """Symmetric matrix of affine forms constrained to be PSD."""

    J: Key
    omega: str
    entries: list  # side x side list of forms

    @property
    def side(self) -> int:
        return len(self.entries)


@dataclass
class Relaxation:
    lift: LiftTable
    objective: Form
    rows: list[Row]
    lower: np.ndarray
    upper: np.ndarray
    soc_blocks: list[SocBlock] = field(default_factory=list)
    psd_blocks: list[PsdBlock] = field(default_factory=list)

    def rows_of(self, kind: str) -> list[Row]:
        return [r for r in self.rows if r.kind == kind]

    def keys_used(self) -> set[Key]:
        used: set[Key] = set(self.objective)
        for r in self.rows:
            used.update(r.form)
        for b in self.soc_blocks:
            for f in b.entries:
                used.update(f)
        for b in self.psd_blocks:
            for row in b.entries:
                for f in row:
                    used.update(f)
        used.discard(())
        return used


def eval_form(form: Form, point, lift: LiftTable | None = None) -> float:
    """Evaluate a form at a column vector (with ``lift``) or by exact products of ``x``."""
    total = 0.0
    for key, coef in form.items():
        if not key:
            total += coef
        elif lift is not None:
            total += coef * point[lift.column(key)]
        else:
            total += coef * float(np.prod([point[v] for v in key]))
    return total


def _mul(a: Form, b: Form) -> Form:
    out: Form = {}
    for ka, ca in a.items():
        for kb, cb in b.items():
            k = tuple(sorted(ka + kb))
            out[k] = out.get(k, 0.0) + ca * cb
    return out


def expand_product(factors: Iterable[Form]) -> Form:
    out: Form = {(): 1.0}
    for f in factors:
        out = _mul(out, f)
    return out


def bound_factors(J: Key, lower: Sequence[float], upper: Sequence[float]) -> list[Row]:
    """Linearised ``prod_{J1}(x-l) prod_{J2}(u-x) >= 0`` for every split of ``J``.

    Produces ``prod_i (m_i + 1)`` rows where ``m_i`` is the multiplicity of
    variable ``i`` in ``J``.
    """
    counts = sorted(Counter(J).items())
    rows = []
    for picks in itertools.product(*[range(m + 1) for _, m in counts]):
        factors = []
        for (v, m), k in zip(counts, picks):
            factors += [{(v,): 1.0, (): -float(lower[v])}] * k
            factors += [{(): float(upper[v]), (v,): -1.0}] * (m - k)
        poly = expand_product(factors)
        const = poly.pop((), 0.0)
        form = {k: c for k, c in poly.items() if c != 0.0}
        rows.append(Row(form, Sense.GE, 0.0 - const, "bound_factor"))
    return rows


def key_bounds(key: Key, lower, upper) -> tuple[float, float]:
    lo, hi = 1.0, 1.0
    for v in key:
        cands = (lo * lower[v], lo * upper[v], hi * lower[v], hi * upper[v])
        lo, hi = min(cands), max(cands)
    return lo, hi


class RltModel:
    """Box-independent part of a problem's RLT relaxation.

    The lift table, objective and linearised constraints are computed once;
    :meth:`relaxation` adds the bound-factor and box rows for a node's boxes.
    ``extra_keys`` are lifted keys outside the J-set closure (needed by conic
    strengthenings); each receives its own bound-factor rows.
    """

    def __init__(self, prob: PolynomialProblem, extra_keys: Iterable[Key] = ()):
        self.prob = prob
        self.jsets = compute_jsets(prob)
        keys = {k for J in self.jsets for k in submultisets(J)}
        self.extra_keys = sorted({tuple(sorted(k)) for k in extra_keys} - keys, key=lambda k: (len(k), k))
        self.lift = LiftTable(prob.n, sorted(keys, key=lambda k: (len(k), k)) + self.extra_keys)
        self.objective: Form = prob.objective.as_dict()
        self.constraint_rows = [Row(c.poly.without_constant().as_dict(), c.sense, c.rhs - c.poly.constant(),
                                    "constraint") for c in prob.constraints]

    def factor_sets(self) -> list[Key]:
        return list(self.jsets) + list(self.extra_keys)

    def relaxation(self, lower=None, upper=None, cuts: Iterable[Row] = (),
                   soc_blocks: Iterable[SocBlock] = (), psd_blocks: Iterable[PsdBlock] = ()) -> Relaxation:
        lower = np.asarray(self.prob.lower if lower is None else lower, dtype=float)
        upper = np.asarray(self.prob.upper if upper is None else upper, dtype=float)
        fixed = {j for j in range(self.prob.n) if lower[j] == upper[j]}
        rows = [Row(dict(r.form), r.sense, r.rhs, r.kind) for r in self.constraint_rows]
        for J in self.factor_sets():
            free = tuple(v for v in J if v not in fixed)
            if len(free) >= 2:
                rows += bound_factors(free, lower, upper)
        for key in self.lift.keys:
            if fixed.intersection(key):
                rest = tuple(v for v in key if v not in fixed)
                scale = float(np.prod([lower[v] for v in key if v in fixed]))
                form = {key: 1.0}
                if rest:
                    form[rest] = form.get(rest, 0.0) - scale
                    rows.append(Row(form, Sense.EQ, 0.0, "fixed"))
                else:
                    rows.append(Row(form, Sense.EQ, scale, "fixed"))
        for j in range(self.prob.n):
            if j in fixed:
                rows.append(Row({(j,): 1.0}, Sense.EQ, float(lower[j]), "box"))
            else:
                rows.append(Row({(j,): 1.0}, Sense.GE, float(lower[j]), "box"))
                rows.append(Row({(j,): -1.0}, Sense.GE, -float(upper[j]), "box"))
        for key in self.lift.keys:
            if fixed.intersection(key):
                continue
            lo, hi = key_bounds(key, lower, upper)
            rows.append(Row({key: 1.0}, Sense.GE, lo, "box"))
            rows.append(Row({key: -1.0}, Sense.GE, -hi, "box"))
        rows += list(cuts)
        return Relaxation(self.lift, dict(self.objective), rows, lower, upper,
                          list(soc_blocks), list(psd_blocks))


def build_relaxation(prob: PolynomialProblem, lower=None, upper=None) -> Relaxation:
    return RltModel(prob).relaxation(lower, upper)


def identity_violations(relax: Relaxation, point: Sequence[float]) -> tuple[dict[Key, float], np.ndarray]:
    """Per-key ``|X_J - prod x_j|`` and per-variable multiplicity-weighted sums."""
    point = np.asarray(point, dtype=float)
    lift = relax.lift
    if point.shape[0] < lift.ncols:
        raise ValueError("point does not cover all relaxation columns")
    per_key = {}
    theta = np.zeros(lift.n)
    for key in lift.keys:
        v = abs(point[lift.index[key]] - float(np.prod(point[list(key)])))
        per_key[key] = v
        for var in key:
            theta[var] += v
    return per_key, theta


def _format_form(form: Form, names) -> str:
    parts = []
    for key, coef in sorted(form.items(), key=lambda kv: (len(kv[0]), kv[0])):
        if not key:
            continue
        parts.append(f"{'+' if coef >= 0 else '-'} {abs(coef)!r} {key_name(key, names)}")
    return " ".join(parts) if parts else "0"


def dump_relaxation(relax: Relaxation, names: Sequence[str] | None = None) -> str:
    """LP-style text listing of a relaxation, for debugging."""
    out = ["\\ RLT relaxation", "minimize"]
    out.append(f" obj: {_format_form(relax.objective, names)} + {relax.objective.get((), 0.0)!r}")
    out.append("subject to")
    counters: Counter = Counter()
    for r in relax.rows:
        counters[r.kind] += 1
        op = ">=" if r.sense is Sense.GE else "="
        out.append(f" {r.kind}{counters[r.kind]}: {_format_form(r.form, names)} {op} {r.rhs!r}")
    if relax.soc_blocks:
        out.append("second-order cones")
        for i, b in enumerate(relax.soc_blocks, 1):
            ents = " , ".join(_format_form(f, names) + (f" + {f[()]!r}" if () in f else "") for f in b.entries)
            out.append(f" soc{i}: [ {ents} ]")
    if relax.psd_blocks:
        out.append("psd blocks")
        for i, b in enumerate(relax.psd_blocks, 1):
            out.append(f" psd{i} (J={[v + 1 for v in b.J]}, {b.omega}, side {b.side}):")
            for row in b.entries:
                out.append("   [ " + " | ".join(
                    "1" if f == {(): 1.0} else _format_form(f, names) for f in row) + " ]")
    out.append("bounds")
    for key in relax.lift.column_keys():
        out.append(f" {key_name(key, names)} free")
    out.append("end")
    return "\n".join(out) + "\n"
