"""Compile an RLT :class:`~rltconic.rlt.Relaxation` into a standard-form conic program."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..poly import Sense
from ..rlt import Relaxation
from .cones import NonNeg, Psd, SecondOrder, Zero, svec
from .program import ConicProgram


@dataclass
class StandardForm:
    program: ConicProgram
    column_map: np.ndarray  # program variable for each relaxation column
    row_source: list = field(default_factory=list)  # ("row", i) / ("soc", k) / ("psd", k) per cone block
    block_offsets: list = field(default_factory=list)

    def column_values(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y)[self.column_map]


def _affine(form, lift, ncols):
    g = np.zeros(ncols)
    const = 0.0
    for key, coef in form.items():
        if not key:
            const += coef
            continue
        try:
            g[lift.column(key)] += coef
        except KeyError:
            raise ValueError(f"form references unknown lifted key {key}") from None
    return g, const


def to_standard_form(relax: Relaxation) -> StandardForm:
    lift = relax.lift
    ncols = lift.ncols
    c, offset = _affine(relax.objective, lift, ncols)
    A_parts, b_parts, cones, sources, offsets = [], [], [], [], []
    row = 0
    eq = [r for r in relax.rows if r.sense is Sense.EQ]
    ge = [r for r in relax.rows if r.sense is Sense.GE]
    for rows, cone in ((eq, Zero), (ge, NonNeg)):
        if not rows:
            continue
        A = np.zeros((len(rows), ncols))
        b = np.zeros(len(rows))
        for i, r in enumerate(rows):
            g, const = _affine(r.form, lift, ncols)
            A[i] = -g
            b[i] = const - r.rhs
        A_parts.append(A)
        b_parts.append(b)
        cones.append(cone(len(rows)))
        sources.append(cone.__name__)
        offsets.append(row)
        row += len(rows)
    for k, blk in enumerate(relax.soc_blocks):
        d = len(blk.entries)
        A = np.zeros((d, ncols))
        b = np.zeros(d)
        for i, f in enumerate(blk.entries):
            g, const = _affine(f, lift, ncols)
            A[i] = -g
            b[i] = const
        A_parts.append(A)
        b_parts.append(b)
        cones.append(SecondOrder(d))
        sources.append(("soc", k))
        offsets.append(row)
        row += d
    for k, blk in enumerate(relax.psd_blocks):
        side = blk.side
        G = np.zeros((side, side, ncols))
        C = np.zeros((side, side))
        for i in range(side):
            for j in range(side):
                G[i, j], C[i, j] = _affine(blk.entries[i][j], lift, ncols)
        if not (np.array_equal(G, G.transpose(1, 0, 2)) and np.array_equal(C, C.T)):
            raise ValueError("PSD block entries are not symmetric")
        A = -np.stack([svec(G[:, :, col]) for col in range(ncols)], axis=1)
        A_parts.append(A)
        b_parts.append(svec(C))
        cones.append(Psd(side))
        sources.append(("psd", k))
        offsets.append(row)
        row += side * (side + 1) // 2
    if A_parts:
        A = np.vstack(A_parts)
        b = np.concatenate(b_parts)
    else:
        A = np.zeros((0, ncols))
        b = np.zeros(0)
    prog = ConicProgram(c, A, b, cones, offset)
    return StandardForm(prog, np.arange(ncols), sources, offsets)
