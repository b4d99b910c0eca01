"""Annular log-radial x Fourier-mode grids and functions on them.

Radial nodes are uniform in xi = log r, so r d/dr = d/dxi and centered
second-order differences in xi discretise radial derivatives with the
correct scale-free behaviour.  A GridFunction stores one coefficient row per
retained Fourier mode; multiplying by a rotationally symmetric field is
diagonal in the mode index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = ["AnnularGrid", "GridFunction"]


@dataclass(frozen=True)
class AnnularGrid:
    """Log-spaced radial nodes with retained Fourier modes and BC tags.

    ``inner_bc`` / ``outer_bc`` are consumed by the discretisation: one of
    'dirichlet', 'neumann', 'regularity' (mode 0 neumann, higher modes
    dirichlet) or 'decay' (alias of dirichlet at the outer edge).
    """

    radii: np.ndarray
    modes: tuple = (0,)
    inner_bc: str = "regularity"
    outer_bc: str = "decay"

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "modes", tuple(self.modes))
        if np.any(np.diff(r) <= 0):
            raise ValueError("radii must be strictly increasing")
        if 0 not in self.modes:
            raise ValueError("modes must include 0")
        xi = np.log(r)
        h = np.diff(xi)
        if r.size > 2 and not np.allclose(h, h[0], rtol=1e-8):
            raise ValueError("radii must be uniformly log-spaced")

    @property
    def xi(self) -> np.ndarray:
        return np.log(self.radii)

    @property
    def h(self) -> float:
        return float(np.log(self.radii[1] / self.radii[0]))

    @property
    def n(self) -> int:
        return self.radii.size

    @property
    def nodes_per_decade(self) -> float:
        return np.log(10.0) / self.h

    def index_slice(self, lo: float, hi: float) -> slice:
        """Indices of nodes with lo <= r <= hi (inclusive, tolerant at the edges)."""
        i0 = int(np.searchsorted(self.radii, lo * (1 - 1e-12)))
        i1 = int(np.searchsorted(self.radii, hi * (1 + 1e-12), side="right"))
        return slice(i0, i1)

    def mask(self, lo: float = 0.0, hi: float = np.inf) -> np.ndarray:
        return (self.radii >= lo * (1 - 1e-12)) & (self.radii <= hi * (1 + 1e-12))

    @staticmethod
    def between(lo: float, hi: float, nodes_per_decade: int = 64, **kw) -> "AnnularGrid":
        n = max(int(np.ceil(np.log10(hi / lo) * nodes_per_decade)) + 1, 4)
        return AnnularGrid(np.geomspace(lo, hi, n), **kw)


def _dxi(values: np.ndarray, h: float) -> np.ndarray:
    """First derivative in xi, centered interior, second-order one-sided ends."""
    d = np.empty_like(values)
    d[..., 1:-1] = (values[..., 2:] - values[..., :-2]) / (2 * h)
    d[..., 0] = (-3 * values[..., 0] + 4 * values[..., 1] - values[..., 2]) / (2 * h)
    d[..., -1] = (3 * values[..., -1] - 4 * values[..., -2] + values[..., -3]) / (2 * h)
    return d


def _dxixi(values: np.ndarray, h: float) -> np.ndarray:
    d = np.empty_like(values)
    d[..., 1:-1] = (values[..., 2:] - 2 * values[..., 1:-1] + values[..., :-2]) / h**2
    d[..., 0] = (2 * values[..., 0] - 5 * values[..., 1] + 4 * values[..., 2] - values[..., 3]) / h**2
    d[..., -1] = (2 * values[..., -1] - 5 * values[..., -2] + 4 * values[..., -3] - values[..., -4]) / h**2
    return d


@dataclass
class GridFunction:
    """Coefficients per (mode, radial node); mode rows follow grid.modes."""

    grid: AnnularGrid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim == 1:
            c = c[None, :]
        if c.shape != (len(self.grid.modes), self.grid.n):
            raise ValueError(f"coeffs shape {c.shape} does not match grid "
                             f"({len(self.grid.modes)}, {self.grid.n})")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        self.coeffs = c

    @staticmethod
    def zeros(grid: AnnularGrid) -> "GridFunction":
        return GridFunction(grid, np.zeros((len(grid.modes), grid.n)))

    @staticmethod
    def radial(grid: AnnularGrid, values) -> "GridFunction":
        c = np.zeros((len(grid.modes), grid.n))
        c[grid.modes.index(0)] = np.asarray(values, dtype=float)
        return GridFunction(grid, c)

    @property
    def mode0(self) -> np.ndarray:
        return self.coeffs[self.grid.modes.index(0)]

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.coeffs.copy())

    def __add__(self, other):
        self._check(other)
        return GridFunction(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return GridFunction(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, s):
        if isinstance(s, GridFunction):
            raise TypeError("use scale_radial to multiply by a radial field")
        return GridFunction(self.grid, self.coeffs * float(s))

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.coeffs)

    def _check(self, other):
        if other.grid is not self.grid and not np.array_equal(other.grid.radii, self.grid.radii):
            raise ValueError("grid mismatch")

    def scale_radial(self, values) -> "GridFunction":
        """Multiply by a rotationally symmetric field sampled on the radii."""
        return GridFunction(self.grid, self.coeffs * np.asarray(values, dtype=float)[None, :])

    def dr(self) -> np.ndarray:
        """Radial derivative per mode, f_r = f_xi / r."""
        return _dxi(self.coeffs, self.grid.h) / self.grid.radii[None, :]

    def drr(self) -> np.ndarray:
        """Second radial derivative per mode, f_rr = (f_xixi - f_xi) / r^2."""
        h = self.grid.h
        return (_dxixi(self.coeffs, h) - _dxi(self.coeffs, h)) / self.grid.radii[None, :] ** 2

    def sup(self) -> float:
        return float(np.max(np.abs(self.coeffs)))
