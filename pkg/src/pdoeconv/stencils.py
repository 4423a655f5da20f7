"""Second-order finite-difference masks for every derivative u^a v^b with a + b <= 4.

Masks are stored h-free; applying one divides by h^(a+b).  Array layout:
column index grows with x, row index grows downward, i.e. with *decreasing* y,
so the d/dy mask carries +1/2 in its top row.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction as F

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BORDER = 2


class NoStencilError(KeyError):
    pass


class StencilSizeError(ValueError):
    pass


def _q(rows):
    return tuple(tuple(F(x) for x in row) for row in rows)


h = F(1, 2)
q = F(1, 4)

_TABLE = {
    (0, 0): _q([[0, 0, 0], [0, 1, 0], [0, 0, 0]]),
    (1, 0): _q([[0, 0, 0], [-h, 0, h], [0, 0, 0]]),
    (0, 1): _q([[0, h, 0], [0, 0, 0], [0, -h, 0]]),
    (2, 0): _q([[0, 0, 0], [1, -2, 1], [0, 0, 0]]),
    (1, 1): _q([[-q, 0, q], [0, 0, 0], [q, 0, -q]]),
    (0, 2): _q([[0, 1, 0], [0, -2, 0], [0, 1, 0]]),
    (2, 1): _q([[h, -1, h], [0, 0, 0], [-h, 1, -h]]),
    (1, 2): _q([[-h, 0, h], [1, 0, -1], [-h, 0, h]]),
    (2, 2): _q([[1, -2, 1], [-2, 4, -2], [1, -2, 1]]),
    (3, 0): _q([[0] * 5, [0] * 5, [-h, 1, 0, -1, h], [0] * 5, [0] * 5]),
    (0, 3): _q([[0, 0, h, 0, 0], [0, 0, -1, 0, 0], [0] * 5, [0, 0, 1, 0, 0], [0, 0, -h, 0, 0]]),
    (4, 0): _q([[0] * 5, [0] * 5, [1, -4, 6, -4, 1], [0] * 5, [0] * 5]),
    (3, 1): _q([[0] * 5, [-q, h, 0, -h, q], [0] * 5, [q, -h, 0, h, -q], [0] * 5]),
    (1, 3): _q([[0, -q, 0, q, 0], [0, h, 0, -h, 0], [0] * 5, [0, -h, 0, h, 0], [0, q, 0, -q, 0]]),
    (0, 4): _q([[0, 0, 1, 0, 0], [0, 0, -4, 0, 0], [0, 0, 6, 0, 0], [0, 0, -4, 0, 0], [0, 0, 1, 0, 0]]),
}
del h, q

NAMES = {
    (0, 0): "u0", (1, 0): "ux", (0, 1): "uy", (2, 0): "uxx", (1, 1): "uxy",
    (0, 2): "uyy", (2, 1): "uxxy", (1, 2): "uxyy", (2, 2): "uxxyy",
    (3, 0): "uxxx", (0, 3): "uyyy", (4, 0): "uxxxx", (3, 1): "uxxxy",
    (1, 3): "uxyyy", (0, 4): "uyyyy",
}


@dataclass(frozen=True)
class Stencil:
    deriv: tuple[int, int]
    exact: tuple[tuple[F, ...], ...]

    @property
    def size(self) -> int:
        return len(self.exact)

    @property
    def mesh_power(self) -> int:
        return self.deriv[0] + self.deriv[1]

    @property
    def name(self) -> str:
        return NAMES[self.deriv]

    @property
    def mask(self) -> np.ndarray:
        return np.array([[float(x) for x in row] for row in self.exact])

    def embedded(self, size: int = 5) -> np.ndarray:
        """Mask zero-padded symmetrically to ``size`` x ``size``."""
        pad = (size - self.size) // 2
        if pad < 0:
            raise StencilSizeError(f"cannot embed a {self.size}x{self.size} mask in {size}x{size}")
        return np.pad(self.mask, pad)

    def format(self) -> str:
        width = max(len(str(x)) for row in self.exact for x in row)
        lines = [f"{self.name} (d^{self.mesh_power} / dx^{self.deriv[0]} dy^{self.deriv[1]}), "
                 f"scale 1/h^{self.mesh_power}"]
        for row in self.exact:
            lines.append("  " + " ".join(str(x).rjust(width) for x in row))
        return "\n".join(lines)


def stencil_for(a: int, b: int) -> Stencil:
    try:
        return Stencil((a, b), _TABLE[(a, b)])
    except KeyError:
        raise NoStencilError(f"no stencil for d^{a}/dx^{a} d^{b}/dy^{b}") from None


def all_stencils() -> list[Stencil]:
    from .pdo import MONOMIALS
    return [stencil_for(a, b) for a, b in MONOMIALS]


def correlate2d(grid: np.ndarray, mask: np.ndarray, padding: str = "zero") -> np.ndarray:
    """out[r, c] = sum_pq mask[p, q] grid[r + p - m, c + q - m] (no kernel flip).

    Works on the last two axes of ``grid``.
    """
    grid = np.asarray(grid, dtype=float)
    k = mask.shape[0]
    m = (k - 1) // 2
    if padding == "zero":
        pad = [(0, 0)] * (grid.ndim - 2) + [(m, m), (m, m)]
        grid = np.pad(grid, pad)
    elif padding != "valid":
        raise ValueError(f"unknown padding {padding!r}")
    if grid.shape[-1] < k or grid.shape[-2] < k:
        raise StencilSizeError(f"grid {grid.shape[-2:]} smaller than {k}x{k} mask")
    windows = sliding_window_view(grid, (k, k), axis=(-2, -1))
    return np.einsum("...ij,ij->...", windows, mask)


def apply_stencil(s: Stencil, grid: np.ndarray, h: float = 1.0, padding: str = "zero") -> np.ndarray:
    if h <= 0:
        raise ValueError("mesh size must be positive")
    return correlate2d(grid, s.mask, padding) / h**s.mesh_power


def cell_centers(n: int) -> np.ndarray:
    """Coordinates (x, y) of the n x n cell centers on the unit square, shape (n, n, 2).

    Row r sits at y = 1 - (r + 1/2)/n, column c at x = (c + 1/2)/n.
    """
    hh = 1.0 / n
    t = (np.arange(n) + 0.5) * hh
    x = np.broadcast_to(t[None, :], (n, n))
    y = np.broadcast_to(t[::-1, None], (n, n))
    return np.stack([x, y], axis=-1)


def crop(a: np.ndarray, width: int = BORDER) -> np.ndarray:
    return a[..., width:-width, width:-width] if width else a


def interior_error(s: Stencil, f, n: int) -> float:
    """Max interior |stencil(samples of f) - exact derivative| on an n x n grid."""
    pts = cell_centers(n)
    grid = f(pts)
    approx = apply_stencil(s, grid, 1.0 / n, "zero")
    exact = f.derivative(*s.deriv, pts)
    return float(np.max(np.abs(crop(approx - exact))))


def fit_order(hs, errors, floor: float = 1e-13) -> float:
    """Least-squares slope of log(error) against log(h); inf when errors vanish."""
    errors = np.asarray(errors, dtype=float)
    if np.all(errors < floor):
        return float("inf")
    slope, _ = np.polyfit(np.log(hs), np.log(np.maximum(errors, floor)), 1)
    return float(slope)


def estimate_order(s: Stencil, f, resolutions=(32, 64, 128, 256)) -> float:
    resolutions = list(resolutions)
    if len(resolutions) < 3:
        raise ValueError("need at least three resolutions")
    if any(b != 2 * a for a, b in zip(resolutions, resolutions[1:])):
        raise ValueError("resolutions must double")
    errors = [interior_error(s, f, n) for n in resolutions]
    return fit_order([1.0 / n for n in resolutions], errors)
