"""Polynomials, box-constrained polynomial problems and the ``.pop`` text format.

A problem file looks like::

    # comment
    var x1 in [1, 10]
    var x2 in [0, 8]
    min: x1^2 + x2^2
    st c1: x1*x2 >= 1

Variables are indexed densely from 0 in declaration order.  ``max``
objectives are stored negated and ``<=`` constraints are flipped to ``>=``.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

Key = tuple[int, ...]


class ParseError(ValueError):
    """Syntax or semantic error in a problem file."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line = line
        self.col = col
        where = f"line {line}, column {col}: " if line else ""
        super().__init__(where + message)


@dataclass(frozen=True)
class Monomial:
    vars: Key
    coefficient: float

    @property
    def degree(self) -> int:
        return len(self.vars)


class Polynomial:
    """Sum of monomials in canonical form (one term per variable multiset)."""

    __slots__ = ("_terms",)

    def __init__(self, terms: Iterable[Monomial] | Mapping[Key, float] = ()):
        acc: dict[Key, float] = {}
        items = terms.items() if isinstance(terms, Mapping) else ((t.vars, t.coefficient) for t in terms)
        for key, coef in items:
            key = tuple(sorted(key))
            coef = float(coef)
            if not math.isfinite(coef):
                raise ValueError(f"non-finite coefficient {coef!r}")
            acc[key] = acc.get(key, 0.0) + coef
        self._terms = tuple(
            Monomial(k, c) for k, c in sorted(acc.items(), key=lambda kv: (len(kv[0]), kv[0])) if c != 0.0
        )

    @property
    def terms(self) -> tuple[Monomial, ...]:
        return self._terms

    def as_dict(self) -> dict[Key, float]:
        return {t.vars: t.coefficient for t in self._terms}

    @property
    def degree(self) -> int:
        return max((t.degree for t in self._terms), default=0)

    def constant(self) -> float:
        for t in self._terms:
            if not t.vars:
                return t.coefficient
        return 0.0

    def variables(self) -> set[int]:
        return {v for t in self._terms for v in t.vars}

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Polynomial) and self._terms == other._terms

    def __hash__(self) -> int:
        return hash(self._terms)

    def __add__(self, other: Polynomial) -> Polynomial:
        return Polynomial(list(self._terms) + list(other._terms))

    def __neg__(self) -> Polynomial:
        return self.scale(-1.0)

    def __sub__(self, other: Polynomial) -> Polynomial:
        return self + (-other)

    def scale(self, a: float) -> Polynomial:
        return Polynomial(Monomial(t.vars, a * t.coefficient) for t in self._terms)

    def without_constant(self) -> Polynomial:
        return Polynomial(t for t in self._terms if t.vars)

    def __repr__(self) -> str:
        return f"Polynomial({self.as_dict()!r})"


def evaluate(p: Polynomial, x: Sequence[float]) -> float:
    """Term-wise evaluation of ``p`` at ``x``."""
    x = np.asarray(x, dtype=float)
    total = 0.0
    for t in p.terms:
        if t.vars and t.vars[-1] >= x.shape[0]:
            raise ValueError(f"point has dimension {x.shape[0]} but polynomial uses x[{t.vars[-1]}]")
        prod = t.coefficient
        for v in t.vars:
            prod *= x[v]
        total += prod
    return float(total)


class Sense(enum.Enum):
    GE = ">="
    EQ = "="


@dataclass(frozen=True)
class Constraint:
    poly: Polynomial
    sense: Sense
    rhs: float
    name: str = ""


@dataclass(frozen=True)
class PolynomialProblem:
    names: tuple[str, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    objective: Polynomial
    constraints: tuple[Constraint, ...] = ()
    maximize: bool = False  # objective is stored negated when True

    def __post_init__(self):
        n = len(self.names)
        if len(self.lower) != n or len(self.upper) != n:
            raise ValueError("bounds and names must have the same length")
        for j, (lo, hi) in enumerate(zip(self.lower, self.upper)):
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError(f"variable {self.names[j]}: bounds must be finite")
            if lo > hi:
                raise ValueError(f"variable {self.names[j]}: bounds reversed")
            if lo < 0:
                raise ValueError(f"variable {self.names[j]}: negative lower bound {lo}")
        for p in [self.objective] + [c.poly for c in self.constraints]:
            if p.variables() and max(p.variables()) >= n:
                raise ValueError("polynomial references an undeclared variable")

    @property
    def n(self) -> int:
        return len(self.names)

    @property
    def degree(self) -> int:
        return max([self.objective.degree] + [c.poly.degree for c in self.constraints] + [1])

    def polynomials(self) -> list[Polynomial]:
        return [self.objective] + [c.poly for c in self.constraints]

    def monomial_keys(self, min_degree: int = 1) -> set[Key]:
        return {t.vars for p in self.polynomials() for t in p.terms if len(t.vars) >= min_degree}

    def objective_value(self, x: Sequence[float]) -> float:
        """Objective in the user's sense (re-negated for ``max`` problems)."""
        self._check_dim(x)
        v = evaluate(self.objective, x)
        return -v if self.maximize else v

    def _check_dim(self, x) -> None:
        if len(x) != self.n:
            raise ValueError(f"expected a point of dimension {self.n}, got {len(x)}")


def check_feasible(prob: PolynomialProblem, x: Sequence[float], tol: float = 1e-6) -> bool:
    if tol <= 0:
        raise ValueError("tol must be positive")
    prob._check_dim(x)
    x = np.asarray(x, dtype=float)
    if np.any(x < np.asarray(prob.lower) - tol) or np.any(x > np.asarray(prob.upper) + tol):
        return False
    for c in prob.constraints:
        val = evaluate(c.poly, x) - c.rhs
        if c.sense is Sense.GE and val < -tol:
            return False
        if c.sense is Sense.EQ and abs(val) > tol:
            return False
    return True


# --------------------------------------------------------------------------
# text format
# --------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_.]*)"
    r"|(?P<op>>=|<=|=|\^|\*|\+|-))"
)


class _Tokens:
    def __init__(self, text: str, line: int, col0: int):
        self.items: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                bad = len(text[pos:]) - len(text[pos:].lstrip()) + pos
                raise ParseError(f"unexpected character {text[bad]!r}", line, col0 + bad + 1)
            kind = m.lastgroup
            start = m.start(kind)
            self.items.append((kind, m.group(kind), col0 + start + 1))
            pos = m.end()
        self.i = 0
        self.line = line
        self.end_col = col0 + len(text) + 1

    def peek(self):
        return self.items[self.i] if self.i < len(self.items) else (None, None, self.end_col)

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok


def _parse_number(tok, line: int) -> float:
    kind, val, col = tok
    if kind != "num":
        raise ParseError(f"expected a number, got {val!r}" if val else "expected a number", line, col)
    return float(val)


def _parse_signed_number(toks: _Tokens) -> float:
    sign = 1.0
    while toks.peek()[0] == "op" and toks.peek()[1] in "+-":
        if toks.take()[1] == "-":
            sign = -sign
    return sign * _parse_number(toks.take(), toks.line)


def _parse_polyexpr(toks: _Tokens, index: Mapping[str, int]) -> Polynomial:
    terms: dict[Key, float] = {}
    first = True
    while True:
        kind, val, col = toks.peek()
        sign = 1.0
        if kind == "op" and val in "+-":
            toks.take()
            sign = -1.0 if val == "-" else 1.0
        elif not first:
            break
        first = False
        coef = sign
        factors: list[int] = []
        while True:
            kind, val, col = toks.take()
            if kind == "num":
                coef *= float(val)
            elif kind == "name":
                if val not in index:
                    raise ParseError(f"unknown variable {val!r}", toks.line, col)
                power = 1
                if toks.peek()[1] == "^":
                    toks.take()
                    pkind, pval, pcol = toks.take()
                    if pkind != "num" or not pval.isdigit() or int(pval) < 1:
                        raise ParseError("exponent must be a positive integer", toks.line, pcol)
                    power = int(pval)
                factors.extend([index[val]] * power)
            else:
                raise ParseError(f"expected a term, got {val!r}" if val else "expected a term", toks.line, col)
            if toks.peek()[1] == "*":
                toks.take()
                continue
            break
        key = tuple(sorted(factors))
        terms[key] = terms.get(key, 0.0) + coef
    return Polynomial(terms)


_VAR_RE = re.compile(r"var\s+([A-Za-z_][A-Za-z0-9_.]*)\s+in\s+\[(.*),(.*)\]\s*$")
_ST_RE = re.compile(r"st(?:\s+([A-Za-z_][A-Za-z0-9_.]*))?\s*:")


def parse_problem(text: str) -> PolynomialProblem:
    """Parse the ``.pop`` text format into a canonical problem."""
    names: list[str] = []
    lower: list[float] = []
    upper: list[float] = []
    index: dict[str, int] = {}
    objective: Polynomial | None = None
    maximize = False
    constraints: list[Constraint] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        stripped = line.lstrip()
        if not stripped:
            continue
        indent = len(line) - len(stripped)
        if stripped.startswith("var") and (len(stripped) == 3 or stripped[3].isspace()):
            m = _VAR_RE.match(stripped)
            if not m:
                raise ParseError("expected 'var <name> in [<lo>, <hi>]'", lineno, indent + 1)
            name = m.group(1)
            if name in index:
                raise ParseError(f"variable {name!r} declared twice", lineno, indent + 5)
            if objective is not None or constraints:
                raise ParseError("variables must be declared before the objective", lineno, indent + 1)
            bounds = []
            for g in (2, 3):
                toks = _Tokens(m.group(g), lineno, indent + m.start(g))
                bounds.append(_parse_signed_number(toks))
                if toks.peek()[0] is not None:
                    raise ParseError("trailing input in bound", lineno, toks.peek()[2])
            lo, hi = bounds
            if lo > hi:
                raise ParseError(f"bounds reversed for variable {name!r}", lineno, indent + 1)
            if lo < 0:
                raise ParseError(f"negative lower bound for variable {name!r} (lower bounds must be >= 0)",
                                 lineno, indent + 1)
            index[name] = len(names)
            names.append(name)
            lower.append(lo)
            upper.append(hi)
        elif stripped.startswith(("min:", "max:")) or re.match(r"(min|max)\s*:", stripped):
            if objective is not None:
                raise ParseError("objective given twice", lineno, indent + 1)
            colon = stripped.index(":")
            body = stripped[colon + 1:]
            toks = _Tokens(body, lineno, indent + colon + 1)
            if toks.peek()[0] is None:
                raise ParseError("empty objective", lineno, indent + colon + 2)
            poly = _parse_polyexpr(toks, index)
            if toks.peek()[0] is not None:
                raise ParseError(f"unexpected {toks.peek()[1]!r}", lineno, toks.peek()[2])
            if not poly.terms:
                raise ParseError("empty objective", lineno, indent + 1)
            maximize = stripped.startswith("max")
            objective = -poly if maximize else poly
        elif _ST_RE.match(stripped):
            m = _ST_RE.match(stripped)
            toks = _Tokens(stripped[m.end():], lineno, indent + m.end())
            poly = _parse_polyexpr(toks, index)
            kind, op, col = toks.take()
            if kind != "op" or op not in (">=", "<=", "="):
                raise ParseError("expected '>=', '<=' or '='", lineno, col)
            rhs = _parse_signed_number(toks)
            if toks.peek()[0] is not None:
                raise ParseError(f"unexpected {toks.peek()[1]!r}", lineno, toks.peek()[2])
            rhs -= poly.constant()
            poly = poly.without_constant()
            if op == "<=":
                poly, rhs = -poly, -rhs
            sense = Sense.EQ if op == "=" else Sense.GE
            constraints.append(Constraint(poly, sense, rhs, m.group(1) or f"c{len(constraints) + 1}"))
        else:
            raise ParseError(f"unrecognised statement {stripped.split()[0]!r}", lineno, indent + 1)

    if objective is None:
        raise ParseError("empty objective: no 'min:' or 'max:' line")
    return PolynomialProblem(tuple(names), tuple(lower), tuple(upper), objective, tuple(constraints), maximize)


def read_problem(path) -> PolynomialProblem:
    with open(path, encoding="utf-8") as fh:
        return parse_problem(fh.read())


def _format_poly(p: Polynomial, names: Sequence[str]) -> str:
    if not p.terms:
        return "0"
    parts = []
    for i, t in enumerate(p.terms):
        coef = t.coefficient
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        factors = []
        for v in sorted(set(t.vars)):
            k = t.vars.count(v)
            factors.append(names[v] if k == 1 else f"{names[v]}^{k}")
        if not factors:
            body = repr(mag)
        elif mag == 1.0:
            body = "*".join(factors)
        else:
            body = repr(mag) + "*" + "*".join(factors)
        if i == 0:
            parts.append(body if sign == "+" else "-" + body)
        else:
            parts.append(f"{sign} {body}")
    return " ".join(parts)


def write_problem(prob: PolynomialProblem) -> str:
    """Serialise ``prob`` so that ``parse_problem`` reproduces it exactly."""
    lines = []
    for name, lo, hi in zip(prob.names, prob.lower, prob.upper):
        lines.append(f"var {name} in [{lo!r}, {hi!r}]")
    obj = -prob.objective if prob.maximize else prob.objective
    lines.append(f"{'max' if prob.maximize else 'min'}: {_format_poly(obj, prob.names)}")
    for c in prob.constraints:
        lines.append(f"st {c.name}: {_format_poly(c.poly, prob.names)} {c.sense.value} {c.rhs!r}")
    return "\n".join(lines) + "\n"
