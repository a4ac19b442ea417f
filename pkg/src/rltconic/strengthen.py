"""Conic strengthenings of the RLT relaxation.

Every generator works on monomial keys (see :mod:`rltconic.rlt`), so the
products it needs may fall outside the J-set closure of the problem.  Such
keys are reported back as *lift extensions*; the caller registers them as
extra lifted columns, each with its own bound-factor rows.
"""
from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .conic.eig import sym_eig
from .poly import Key, Sense
from .rlt import Form, LiftTable, PsdBlock, Relaxation, Row, SocBlock, bound_factors, eval_form, key_bounds

TOL_EIG = 1e-6
TOL_BIND = 1e-7
WINDOW = 10
STRIDE = 5

OMEGA1 = "omega1"
OMEGA2 = "omega2"

MlMatrix = PsdBlock


class Variant(enum.Enum):
    RLT = "rlt"
    SDPCUTS = "sdpcuts"
    SOCP = "socp"
    SOCP_B = "socp-b"
    SDP1 = "sdp1"
    SDP1_B = "sdp1-b"
    SDP2 = "sdp2"
    SDP2_B = "sdp2-b"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, name: str) -> Variant:
        try:
            return cls(name.strip().lower())
        except ValueError:
            choices = ", ".join(v.value for v in cls)
            raise ValueError(f"unknown variant {name!r} (choose from {choices})") from None

    @property
    def binding(self) -> bool:
        return self.value.endswith("-b")

    @property
    def base(self) -> Variant:
        return Variant(self.value[:-2]) if self.binding else self


ALL_VARIANTS: tuple[Variant, ...] = tuple(Variant)


def _key(*vars_: int) -> Key:
    return tuple(sorted(vars_))


def _product(a: Key, b: Key) -> Form:
    """Affine form standing for the monomial ``a * b`` (keys of degree <= 1)."""
    return {_key(*a, *b): 1.0}


def _referenced(forms: Iterable[Form]) -> set[Key]:
    return {k for f in forms for k in f if len(k) >= 2}


def _missing(keys: Iterable[Key], lift: LiftTable | None) -> list[Key]:
    keys = sorted(set(keys), key=lambda k: (len(k), k))
    if lift is None:
        return keys
    return [k for k in keys if k not in lift]


def build_ml_matrix(J: Key, omega: str, lift: LiftTable | None = None) -> tuple[MlMatrix | None, list[Key]]:
    """``M_L`` for the J-set ``J`` and the monomial vector ``omega``.

    Returns the matrix and the degree-2 keys it references that ``lift``
    lacks.  With ``OMEGA1`` a J-set built on a single variable yields no
    matrix unless ``|J| = 2``, in which case ``(1, x_i)`` is used.
    """
    if omega not in (OMEGA1, OMEGA2):
        raise ValueError(f"unknown omega {omega!r}")
    J = tuple(sorted(J))
    vec: list[Key] = [(v,) for v in J]
    if omega == OMEGA2:
        vec = [()] + vec
    elif len(set(J)) == 1:
        if len(J) != 2:
            return None, []
        vec = [(), (J[0],)]
    entries = [[_product(a, b) for b in vec] for a in vec]
    block = PsdBlock(J, omega, entries)
    return block, _missing(_referenced(f for row in entries for f in row), lift)


def ml_matrices(jsets: Sequence[Key], omega: str, lift: LiftTable | None = None) -> tuple[list[MlMatrix], list[Key]]:
    blocks, missing = [], set()
    for J in jsets:
        block, keys = build_ml_matrix(J, omega, lift)
        if block is not None:
            blocks.append(block)
            missing.update(keys)
    return blocks, _missing(missing, None)


def socc_pair(i: int, j: int) -> SocBlock:
    """``(X_ii + X_jj)/2 >= ||(X_ij, (X_ii - X_jj)/2)||``."""
    ii, jj, ij = _key(i, i), _key(j, j), _key(i, j)
    return SocBlock(("pair", i, j), ({ii: 0.5, jj: 0.5}, {ij: 1.0}, {ii: 0.5, jj: -0.5}))


def socc_square(i: int) -> SocBlock:
    """``(1 + X_ii)/2 >= ||(x_i, (1 - X_ii)/2)||``."""
    ii = _key(i, i)
    return SocBlock(("square", i), ({(): 0.5, ii: 0.5}, {(i,): 1.0}, {(): 0.5, ii: -0.5}))


def socp_constraints(jsets: Sequence[Key], lift: LiftTable | None = None) -> tuple[list[SocBlock], list[Key]]:
    """Second-order cones for every J-set, deduplicated across J-sets."""
    if not jsets:
        raise ValueError("socp_constraints needs at least one J-set")
    seen, blocks = set(), []
    for J in jsets:
        counts = Counter(J)
        cand = [socc_square(v) for v in sorted(counts) if counts[v] >= 2]
        distinct = sorted(counts)
        cand += [socc_pair(a, b) for x, a in enumerate(distinct) for b in distinct[x + 1:]]
        for blk in cand:
            if blk.key not in seen:
                seen.add(blk.key)
                blocks.append(blk)
    return blocks, _missing(_referenced(f for b in blocks for f in b.entries), lift)


@dataclass
class LinearCut:
    """Eigenvector cut ``alpha' M_L(window) alpha >= 0`` as a linear row."""

    row: Row
    origin: tuple  # (J, window start, eigen index)
    node: int = 0
    violation: float = 0.0


def evaluate_matrix(block: MlMatrix, point, lift: LiftTable) -> np.ndarray:
    return np.array([[eval_form(f, point, lift) for f in row] for row in block.entries])


def _windows(side: int) -> list[range]:
    if side <= WINDOW:
        return [range(side)]
    out, start = [], 0
    while True:
        out.append(range(start, min(start + WINDOW, side)))
        if start + WINDOW >= side:
            return out
        start += STRIDE


def _quadratic_form(block: MlMatrix, idx: range, alpha: np.ndarray) -> Form:
    form: Form = {}
    for a, p in enumerate(idx):
        for b, q in enumerate(idx):
            w = alpha[a] * alpha[b]
            if w == 0.0:
                continue
            for key, coef in block.entries[p][q].items():
                form[key] = form.get(key, 0.0) + w * coef
    return form


def eigencuts(matrices: Sequence[MlMatrix], point, lift: LiftTable, tol_eig: float = TOL_EIG,
              node: int = 0, budget: int | None = None) -> list[LinearCut]:
    """Linear cuts from negative eigenpairs of the ``M_L`` matrices at ``point``.

    Each cut is scaled so its largest variable coefficient is 1 and kept only
    when the scaled violation at ``point`` is at least ``tol_eig``.  With a
    ``budget`` the most violated cuts are returned first.
    """
    point = np.asarray(point, dtype=float)
    cuts = []
    for block in matrices:
        M = evaluate_matrix(block, point, lift)
        for idx in _windows(block.side):
            sub = M[np.ix_(idx, idx)]
            w, V = sym_eig(sub)
            for e in np.flatnonzero(w < -tol_eig):
                form = _quadratic_form(block, idx, V[:, e])
                const = form.pop((), 0.0)
                form = {k: c for k, c in form.items() if c != 0.0}
                scale = max((abs(c) for c in form.values()), default=0.0)
                if scale == 0.0:
                    continue
                form = {k: c / scale for k, c in form.items()}
                row = Row(form, Sense.GE, -const / scale, "cut")
                violation = -row.slack(point, lift)
                if violation >= tol_eig:
                    cuts.append(LinearCut(row, (block.J, idx.start, int(e)), node, violation))
    cuts.sort(key=lambda c: -c.violation)
    return cuts if budget is None else cuts[:budget]


def soc_residual(block: SocBlock, point, lift: LiftTable) -> float:
    vals = np.array([eval_form(f, point, lift) for f in block.entries])
    return float(vals[0] - np.linalg.norm(vals[1:]))


def psd_residual(block: PsdBlock, point, lift: LiftTable) -> float:
    return float(sym_eig(evaluate_matrix(block, point, lift))[0][0])


def binding_filter(relax: Relaxation, point, tol_bind: float = TOL_BIND) -> tuple[list[SocBlock], list[PsdBlock]]:
    """Conic blocks of ``relax`` whose boundary residual at ``point`` is at most ``tol_bind``."""
    socs = [b for b in relax.soc_blocks if soc_residual(b, point, relax.lift) <= tol_bind]
    psds = [b for b in relax.psd_blocks if psd_residual(b, point, relax.lift) <= tol_bind]
    return socs, psds


@dataclass
class VariantStructure:
    """Conic blocks a variant adds and the lifted keys they need."""

    variant: Variant
    soc_blocks: list[SocBlock]
    psd_blocks: list[PsdBlock]
    cut_matrices: list[MlMatrix]
    extra_keys: list[Key]


def variant_structure(v: Variant, jsets: Sequence[Key], lift: LiftTable | None = None) -> VariantStructure:
    socs: list[SocBlock] = []
    psds: list[PsdBlock] = []
    cut_mats: list[MlMatrix] = []
    extra: list[Key] = []
    base = v.base
    if jsets:
        if base is Variant.SOCP:
            socs, extra = socp_constraints(jsets, lift)
        elif base is Variant.SDP1:
            psds, extra = ml_matrices(jsets, OMEGA1, lift)
        elif base is Variant.SDP2:
            psds, extra = ml_matrices(jsets, OMEGA2, lift)
        elif base is Variant.SDPCUTS:
            cut_mats, extra = ml_matrices(jsets, OMEGA2, lift)
    return VariantStructure(v, socs, psds, cut_mats, extra)


def extend_relaxation(relax: Relaxation, keys: Sequence[Key]) -> Relaxation:
    """Copy of ``relax`` with ``keys`` registered as lifted columns.

    Each new key gets its bound-factor rows and interval bounds for the
    relaxation's boxes.
    """
    lift = relax.lift.copy()
    rows = list(relax.rows)
    for key in keys:
        if key in lift:
            continue
        lift.add(key)
        rows += bound_factors(key, relax.lower, relax.upper)
        lo, hi = key_bounds(key, relax.lower, relax.upper)
        rows.append(Row({key: 1.0}, Sense.GE, lo, "box"))
        rows.append(Row({key: -1.0}, Sense.GE, -hi, "box"))
    return Relaxation(lift, dict(relax.objective), rows, relax.lower, relax.upper,
                      list(relax.soc_blocks), list(relax.psd_blocks))


def apply_variant(v: Variant, relax: Relaxation, jsets: Sequence[Key]) -> Relaxation:
    """Attach the conic blocks of ``v`` to a baseline RLT relaxation.

    ``SDPCUTS`` only registers the lifted keys its cut matrices need; its cuts
    are generated during the search.  Binding variants get the full set of
    blocks here and are filtered once at the root by the search driver.
    """
    st = variant_structure(v, jsets, relax.lift)
    out = extend_relaxation(relax, st.extra_keys)
    out.soc_blocks += st.soc_blocks
    out.psd_blocks += st.psd_blocks
    return out
