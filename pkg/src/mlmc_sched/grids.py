"""Nested structured grids on the unit cube and its sampling embedding.

Level l covers D = (0,1)^3 with n0 * 2^l cells per axis; the embedding
covers (-1,2)^3 with the same mesh width, i.e. 3 * n0 * 2^l cells. All
fields are vertex-based. Transfers are the P1 interpolation on the
six-tetrahedra (Kuhn) subdivision and its transpose: besides vertex copies
and edge midpoints, each face and cube center averages the two endpoints
of the diagonal the subdivision actually cuts along.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["GridHierarchy", "VertexField", "prolong", "restrict", "inject"]


@dataclass(frozen=True)
class VertexField:
    """Scalar vertex values on one grid level of one domain."""

    level: int
    domain: str  # "D" | "embedded"
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.domain not in ("D", "embedded"):
            raise ValueError(f"unknown domain tag {self.domain!r}")
        if self.values.ndim != 3:
            raise ValueError("vertex fields are 3D arrays")


class GridHierarchy:
    """Grid metadata for levels 0..max_level (geometry only, no fields).

    The default tops out at 65^3 vertices on the unit cube; the bundled
    scenarios use three refinement levels of it.
    """

    def __init__(self, max_level: int = 4, n0: int = 4):
        if n0 < 2 or n0 % 2:
            raise ValueError("n0 must be an even cell count >= 2")
        if max_level < 0:
            raise ValueError("max_level must be >= 0")
        self.max_level = max_level
        self.n0 = n0

    def cells(self, level: int, domain: str = "D") -> int:
        base = self.n0 if domain == "D" else 3 * self.n0
        return base * 2**level

    def vertices(self, level: int, domain: str = "D") -> int:
        return self.cells(level, domain) + 1

    def h(self, level: int) -> float:
        return 1.0 / (self.n0 * 2**level)

    def origin(self, domain: str) -> float:
        return 0.0 if domain == "D" else -1.0

    def coordinates(self, level: int, domain: str = "D") -> np.ndarray:
        n = self.vertices(level, domain)
        return self.origin(domain) + self.h(level) * np.arange(n)

    def ladder(self, level: int, domain: str = "D") -> list[int]:
        """Cell counts of the internal multigrid ladder, coarsest first.

        Coarsens below level 0 as long as the cell count stays even, so
        the direct solve always happens on a tiny grid.
        """
        cells = [self.cells(level, domain)]
        while cells[-1] % 2 == 0 and cells[-1] // 2 >= 2:
            cells.append(cells[-1] // 2)
        return cells[::-1]

    def embed_slice(self, level: int) -> tuple[slice, slice, slice]:
        """Index window of the D vertices inside the embedded grid."""
        n = self.cells(level, "D")
        s = slice(n, 2 * n + 1)
        return (s, s, s)

    def field(self, level: int, domain: str, values: np.ndarray) -> VertexField:
        n = self.vertices(level, domain)
        if values.shape != (n, n, n):
            raise ValueError(f"expected shape {(n, n, n)}, got {values.shape}")
        return VertexField(level, domain, values)


def prolong(coarse: np.ndarray) -> np.ndarray:
    """P1 interpolation from an (n+1)^3 grid to the (2n+1)^3 refinement."""
    n = coarse.shape[0] - 1
    f = np.zeros((2 * n + 1,) * 3, dtype=coarse.dtype)
    c = coarse
    f[0::2, 0::2, 0::2] = c
    f[1::2, 0::2, 0::2] = 0.5 * (c[:-1, :, :] + c[1:, :, :])
    f[0::2, 1::2, 0::2] = 0.5 * (c[:, :-1, :] + c[:, 1:, :])
    f[0::2, 0::2, 1::2] = 0.5 * (c[:, :, :-1] + c[:, :, 1:])
    f[1::2, 1::2, 0::2] = 0.5 * (c[:-1, :-1, :] + c[1:, 1:, :])
    f[0::2, 1::2, 1::2] = 0.5 * (c[:, :-1, :-1] + c[:, 1:, 1:])
    f[1::2, 0::2, 1::2] = 0.5 * (c[:-1, :, :-1] + c[1:, :, 1:])
    f[1::2, 1::2, 1::2] = 0.5 * (c[:-1, :-1, :-1] + c[1:, 1:, 1:])
    return f


def restrict(fine: np.ndarray) -> np.ndarray:
    """Transpose of :func:`prolong` (functional/residual transfer)."""
    n2 = fine.shape[0] - 1
    n = n2 // 2
    c = np.zeros((n + 1,) * 3, dtype=fine.dtype)
    c += fine[0::2, 0::2, 0::2]

    e = 0.5 * fine[1::2, 0::2, 0::2]
    c[:-1, :, :] += e
    c[1:, :, :] += e
    e = 0.5 * fine[0::2, 1::2, 0::2]
    c[:, :-1, :] += e
    c[:, 1:, :] += e
    e = 0.5 * fine[0::2, 0::2, 1::2]
    c[:, :, :-1] += e
    c[:, :, 1:] += e

    e = 0.5 * fine[1::2, 1::2, 0::2]
    c[:-1, :-1, :] += e
    c[1:, 1:, :] += e
    e = 0.5 * fine[0::2, 1::2, 1::2]
    c[:, :-1, :-1] += e
    c[:, 1:, 1:] += e
    e = 0.5 * fine[1::2, 0::2, 1::2]
    c[:-1, :, :-1] += e
    c[1:, :, 1:] += e

    e = 0.5 * fine[1::2, 1::2, 1::2]
    c[:-1, :-1, :-1] += e
    c[1:, 1:, 1:] += e
    return c


def inject(fine: np.ndarray) -> np.ndarray:
    """Vertex injection onto the coarser nested grid (for coefficients)."""
    return fine[0::2, 0::2, 0::2].copy()
