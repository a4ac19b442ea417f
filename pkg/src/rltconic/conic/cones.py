"""Cone blocks and svec helpers."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class Zero:
    dim: int


@dataclass(frozen=True)
class NonNeg:
    dim: int


@dataclass(frozen=True)
class SecondOrder:
    dim: int


@dataclass(frozen=True)
class Psd:
    side: int

    @property
    def dim(self) -> int:
        return self.side * (self.side + 1) // 2


Cone = Union[Zero, NonNeg, SecondOrder, Psd]


def validate_cones(cones: Sequence[Cone]) -> int:
    total = 0
    for c in cones:
        if isinstance(c, Psd):
            if c.side < 1:
                raise ValueError("PSD side must be >= 1")
        elif isinstance(c, SecondOrder):
            if c.dim < 2:
                raise ValueError("second-order cone needs dim >= 2")
        elif c.dim < 1:
            raise ValueError(f"{type(c).__name__} block needs dim >= 1")
        total += c.dim
    return total


def tri_indices(side: int) -> list[tuple[int, int]]:
    """svec ordering: lower triangle, column by column."""
    return [(i, j) for j in range(side) for i in range(j, side)]


_TRI_CACHE: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _tri(side: int):
    if side not in _TRI_CACHE:
        idx = tri_indices(side)
        rows = np.array([i for i, _ in idx], dtype=int)
        cols = np.array([j for _, j in idx], dtype=int)
        scale = np.where(rows == cols, 1.0, SQRT2)
        _TRI_CACHE[side] = (rows, cols, scale)
    return _TRI_CACHE[side]


def svec(M: np.ndarray) -> np.ndarray:
    """Symmetric matrix to vector; off-diagonals scaled by sqrt(2)."""
    rows, cols, scale = _tri(M.shape[0])
    return M[rows, cols] * scale


def smat(v: np.ndarray, side: int) -> np.ndarray:
    rows, cols, scale = _tri(side)
    M = np.zeros((side, side))
    vals = v / scale
    M[rows, cols] = vals
    M[cols, rows] = vals
    return M


def side_from_dim(dim: int) -> int:
    side = int(round((math.sqrt(8 * dim + 1) - 1) / 2))
    if side * (side + 1) // 2 != dim:
        raise ValueError(f"{dim} is not a triangular number")
    return side
