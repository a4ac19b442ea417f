"""Conic Benchmark Format (CBF, version 3) export and import.

A :class:`ConicProgram` reads ``A y + s = b, s in K``; CBF writes affine
constraints ``F y + g in K``, so scalar cones are emitted with ``F = -A`` and
``g = b``.  PSD blocks go to ``PSDCON`` with lower-triangle matrix entries
(the svec sqrt(2) scaling is undone).  Scalar cone rows are written first, so
programs whose PSD blocks come last (as built by the relaxation compiler)
round-trip row for row.
"""
from __future__ import annotations

import numpy as np

from .cones import NonNeg, Psd, SecondOrder, Zero, _tri
from .program import ConicProgram

_CONE_NAMES = {Zero: "L=", NonNeg: "L+", SecondOrder: "Q"}
_NAME_CONES = {v: k for k, v in _CONE_NAMES.items()}


def write_cbf(cp: ConicProgram) -> str:
    A = cp.dense_A()
    n = cp.num_vars
    scalar_rows, psd = [], []
    cons = []
    off = 0
    for cone in cp.cones:
        rows = list(range(off, off + cone.dim))
        if isinstance(cone, Psd):
            psd.append((cone.side, rows))
        else:
            cons.append((_CONE_NAMES[type(cone)], cone.dim))
            scalar_rows += rows
        off += cone.dim

    out = ["VER", "3", "", "OBJSENSE", "MIN", "", "VAR", f"{n} 1", f"F {n}", ""]
    if psd:
        out += ["PSDCON", str(len(psd))] + [str(side) for side, _ in psd] + [""]
    if cons:
        out += ["CON", f"{len(scalar_rows)} {len(cons)}"] + [f"{name} {dim}" for name, dim in cons] + [""]

    obj = [(j, v) for j, v in enumerate(cp.c) if v != 0.0]
    if obj:
        out += ["OBJACOORD", str(len(obj))] + [f"{j} {float(v)!r}" for j, v in obj] + [""]
    if cp.offset != 0.0:
        out += ["OBJBCOORD", repr(float(cp.offset)), ""]

    acoord, bcoord = [], []
    for i, r in enumerate(scalar_rows):
        for j in np.flatnonzero(A[r]):
            acoord.append(f"{i} {j} {float(-A[r, j])!r}")
        if cp.b[r] != 0.0:
            bcoord.append(f"{i} {float(cp.b[r])!r}")
    if acoord:
        out += ["ACOORD", str(len(acoord))] + acoord + [""]
    if bcoord:
        out += ["BCOORD", str(len(bcoord))] + bcoord + [""]

    hcoord, dcoord = [], []
    for k, (side, rows) in enumerate(psd):
        ri, ci, scale = _tri(side)
        for t, r in enumerate(rows):
            for j in np.flatnonzero(A[r]):
                hcoord.append(f"{k} {j} {ri[t]} {ci[t]} {float(-A[r, j] / scale[t])!r}")
            if cp.b[r] != 0.0:
                dcoord.append(f"{k} {ri[t]} {ci[t]} {float(cp.b[r] / scale[t])!r}")
    if hcoord:
        out += ["HCOORD", str(len(hcoord))] + hcoord + [""]
    if dcoord:
        out += ["DCOORD", str(len(dcoord))] + dcoord + [""]
    return "\n".join(out)


def read_cbf(text: str) -> ConicProgram:
    """Parse the subset of CBF produced by :func:`write_cbf`."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    pos = 0

    def take() -> str:
        nonlocal pos
        if pos >= len(lines):
            raise ValueError("unexpected end of CBF input")
        pos += 1
        return lines[pos - 1]

    n = 0
    sense = "MIN"
    cons: list[tuple[str, int]] = []
    psd_sides: list[int] = []
    c = None
    offset = 0.0
    acoord, bcoord, hcoord, dcoord = [], [], [], []
    while pos < len(lines):
        head = take()
        if head == "VER":
            if int(take()) != 3:
                raise ValueError("only CBF version 3 is supported")
        elif head == "OBJSENSE":
            sense = take()
        elif head == "VAR":
            n, k = map(int, take().split())
            for _ in range(k):
                name, _dim = take().split()
                if name != "F":
                    raise ValueError(f"unsupported variable cone {name}")
            c = np.zeros(n)
        elif head == "CON":
            _, k = map(int, take().split())
            for _ in range(k):
                name, dim = take().split()
                if name not in _NAME_CONES:
                    raise ValueError(f"unsupported cone {name}")
                cons.append((name, int(dim)))
        elif head == "PSDCON":
            psd_sides = [int(take()) for _ in range(int(take()))]
        elif head == "OBJACOORD":
            for _ in range(int(take())):
                j, v = take().split()
                c[int(j)] += float(v)
        elif head == "OBJBCOORD":
            offset = float(take())
        elif head in ("ACOORD", "BCOORD", "HCOORD", "DCOORD"):
            target = {"ACOORD": acoord, "BCOORD": bcoord, "HCOORD": hcoord, "DCOORD": dcoord}[head]
            for _ in range(int(take())):
                target.append(take().split())
        else:
            raise ValueError(f"unsupported CBF section {head}")
    if c is None:
        raise ValueError("CBF input has no VAR section")
    if sense == "MAX":
        c, offset = -c, -offset

    m_scalar = sum(d for _, d in cons)
    psd_off = np.cumsum([0] + [s * (s + 1) // 2 for s in psd_sides])
    m = m_scalar + int(psd_off[-1])
    A = np.zeros((m, n))
    b = np.zeros(m)
    for i, j, v in acoord:
        A[int(i), int(j)] -= float(v)
    for i, v in bcoord:
        b[int(i)] += float(v)

    def psd_row(k, i, j):
        i, j = max(i, j), min(i, j)
        side = psd_sides[k]
        # lower triangle, column-major: column j starts after sum_{c<j} (side - c) entries
        t = j * side - j * (j - 1) // 2 + (i - j)
        return m_scalar + int(psd_off[k]) + t, (1.0 if i == j else np.sqrt(2.0))

    for k, j, r, col, v in hcoord:
        row, scale = psd_row(int(k), int(r), int(col))
        A[row, int(j)] -= float(v) * scale
    for k, r, col, v in dcoord:
        row, scale = psd_row(int(k), int(r), int(col))
        b[row] += float(v) * scale
    cones = [_NAME_CONES[name](dim) for name, dim in cons] + [Psd(s) for s in psd_sides]
    return ConicProgram(c, A, b, cones, offset)
