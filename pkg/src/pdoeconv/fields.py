"""Gaussian-mixture test fields with closed-form partial derivatives of any order."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _derivative_poly(P: np.ndarray, a: int, b: int) -> np.ndarray:
    """Coefficients Q[i, j] such that d^a_x d^b_y exp(-d.P.d/2) = Q(d) exp(...).

    Built by repeated application of d_k (Q g) = (d_k Q - (P d)_k Q) g.
    """
    size = a + b + 1
    Q = np.zeros((size, size))
    Q[0, 0] = 1.0
    for axis in [0] * a + [1] * b:
        dQ = np.zeros_like(Q)
        if axis == 0:
            dQ[:-1, :] = Q[1:, :] * np.arange(1, size)[:, None]
        else:
            dQ[:, :-1] = Q[:, 1:] * np.arange(1, size)[None, :]
        # (P d)_axis = P[axis, 0] dx + P[axis, 1] dy
        dQ[1:, :] -= P[axis, 0] * Q[:-1, :]
        dQ[:, 1:] -= P[axis, 1] * Q[:, :-1]
        Q = dQ
    return Q


@dataclass(frozen=True)
class Bump:
    weight: float
    center: np.ndarray
    precision: np.ndarray  # inverse covariance, 2x2 SPD
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(2))
        P = np.asarray(self.precision, dtype=float).reshape(2, 2)
        if not np.allclose(P, P.T, atol=1e-12) or np.any(np.linalg.eigvalsh(P) <= 0):
            raise ValueError("precision must be symmetric positive definite")
        object.__setattr__(self, "precision", 0.5 * (P + P.T))

    def derivative(self, a: int, b: int, x: np.ndarray) -> np.ndarray:
        Q = self._cache.get((a, b))
        if Q is None:
            Q = self._cache[(a, b)] = _derivative_poly(self.precision, a, b)
        d = x - self.center
        dx, dy = d[..., 0], d[..., 1]
        P = self.precision
        g = self.weight * np.exp(-0.5 * (P[0, 0] * dx * dx + 2 * P[0, 1] * dx * dy + P[1, 1] * dy * dy))
        # Horner in dx over rows Q[i, :] evaluated in dy
        powers = np.empty((len(Q),) + dy.shape)
        powers[0] = 1.0
        for j in range(1, len(Q)):
            np.multiply(powers[j - 1], dy, out=powers[j, ...])
        rows = np.tensordot(Q, powers, axes=1)
        poly = rows[-1]
        for i in range(len(Q) - 2, -1, -1):
            poly = poly * dx + rows[i]
        return poly * g


@dataclass(frozen=True)
class AnalyticField:
    """Sum of weighted anisotropic Gaussian bumps; smooth to every order."""

    components: tuple[Bump, ...]

    def __call__(self, x) -> np.ndarray:
        return self.derivative(0, 0, x)

    def derivative(self, a: int, b: int, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for comp in self.components:
            out += comp.derivative(a, b, x)
        return out

    def rotate(self, R: np.ndarray, about=(0.0, 0.0)) -> "AnalyticField":
        """Exact pushforward x -> about + R (x - about) of the field."""
        R = np.asarray(R, dtype=float)
        about = np.asarray(about, dtype=float)
        return AnalyticField(tuple(
            Bump(c.weight, about + R @ (c.center - about), R @ c.precision @ R.T)
            for c in self.components
        ))


def gaussian(center, sigma: float = 1.0, weight: float = 1.0) -> AnalyticField:
    """Single isotropic bump."""
    return AnalyticField((Bump(weight, center, np.eye(2) / sigma**2),))


def constant_field(value: float) -> AnalyticField:
    # a bump so wide it is flat to double precision on the unit square
    return AnalyticField((Bump(value, (0.5, 0.5), np.eye(2) * 1e-300),))


def random_field(rng: np.random.Generator, n_components: int = 3,
                 sigma_range=(0.15, 0.25), box=(0.25, 0.75)) -> AnalyticField:
    """Random anisotropic mixture with centers inside ``box``^2."""
    comps = []
    for _ in range(n_components):
        center = rng.uniform(box[0], box[1], size=2)
        s1, s2 = rng.uniform(*sigma_range, size=2)
        phi = rng.uniform(0.0, np.pi)
        R = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
        precision = R @ np.diag([1.0 / s1**2, 1.0 / s2**2]) @ R.T
        weight = rng.uniform(0.5, 1.5) * rng.choice([-1.0, 1.0])
        comps.append(Bump(weight, center, precision))
    return AnalyticField(tuple(comps))


@dataclass(frozen=True)
class PolynomialField:
    """Polynomial sum c[i, j] x^i y^j; handy for exactness checks."""

    coeffs: dict

    def __call__(self, x) -> np.ndarray:
        return self.derivative(0, 0, x)

    def derivative(self, a: int, b: int, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for (i, j), c in self.coeffs.items():
            if i < a or j < b:
                continue
            k = c * _falling(i, a) * _falling(j, b)
            out = out + k * x[..., 0] ** (i - a) * x[..., 1] ** (j - b)
        return out


def _falling(n: int, k: int) -> int:
    out = 1
    for t in range(k):
        out *= n - t
    return out
