"""Polynomials in the derivative symbols (u, v) = (d/dx, d/dy).

A polynomial ``sum c[a, b] u^a v^b`` stands for the operator
``sum c[a, b] d^(a+b) / dx^a dy^b``.  Only total degree <= 4 is representable;
rotating the nine-term canonical operator never leaves that basis because the
substitution (u, v) -> A^-1 (u, v) is linear.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .group2d import GroupElement

MAX_DEGREE = 4
PRUNE_TOL = 1e-14

# graded lexicographic, u before v
MONOMIALS: tuple[tuple[int, int], ...] = tuple(
    (d - b, b) for d in range(MAX_DEGREE + 1) for b in range(d + 1)
)
MONOMIAL_INDEX = {m: i for i, m in enumerate(MONOMIALS)}

# beta_1..beta_9 multiply 1, u, v, u^2, uv, v^2, u^2 v, u v^2, u^2 v^2
CANONICAL_MONOMIALS: tuple[tuple[int, int], ...] = (
    (0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (2, 1), (1, 2), (2, 2),
)

_SUPERSCRIPT = str.maketrans("0123456789", "⁰¹²³⁴⁵⁶⁷⁸⁹")


class BasisOverflowError(ValueError):
    pass


@dataclass(frozen=True)
class PdoPolynomial:
    """Immutable polynomial; ``coeffs`` maps (a, b) to the coefficient of u^a v^b."""

    coeffs: Mapping[tuple[int, int], float]

    def __post_init__(self):
        clean = {}
        for (a, b), c in dict(self.coeffs).items():
            if a < 0 or b < 0:
                raise ValueError(f"negative exponent {(a, b)}")
            if a + b > MAX_DEGREE:
                raise BasisOverflowError(f"monomial u^{a} v^{b} exceeds degree {MAX_DEGREE}")
            c = float(c)
            if not np.isfinite(c):
                raise ValueError(f"non-finite coefficient for {(a, b)}")
            if abs(c) > PRUNE_TOL:
                clean[(a, b)] = c
        object.__setattr__(self, "coeffs", dict(sorted(clean.items(), key=lambda kv: MONOMIAL_INDEX[kv[0]])))

    @classmethod
    def from_vector(cls, vec: Sequence[float]) -> "PdoPolynomial":
        """Build from a 15-vector in ``MONOMIALS`` order."""
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (len(MONOMIALS),):
            raise ValueError(f"expected a {len(MONOMIALS)}-vector, got shape {vec.shape}")
        return cls({m: c for m, c in zip(MONOMIALS, vec)})

    def to_vector(self) -> np.ndarray:
        out = np.zeros(len(MONOMIALS))
        for m, c in self.coeffs.items():
            out[MONOMIAL_INDEX[m]] = c
        return out

    def to_array(self, size: int = MAX_DEGREE + 1) -> np.ndarray:
        out = np.zeros((size, size))
        for (a, b), c in self.coeffs.items():
            out[a, b] = c
        return out

    @property
    def degree(self) -> int:
        return max((a + b for a, b in self.coeffs), default=0)

    @property
    def is_canonical(self) -> bool:
        return all(m in CANONICAL_MONOMIALS for m in self.coeffs)

    def evaluate(self, u, v):
        """Evaluate the polynomial at numeric (u, v); broadcasts over arrays."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        total = np.zeros(np.broadcast(u, v).shape)
        for (a, b), c in self.coeffs.items():
            total = total + c * u**a * v**b
        return total

    def __add__(self, other: "PdoPolynomial") -> "PdoPolynomial":
        out = dict(self.coeffs)
        for m, c in other.coeffs.items():
            out[m] = out.get(m, 0.0) + c
        return PdoPolynomial(out)

    def __mul__(self, scalar: float) -> "PdoPolynomial":
        return PdoPolynomial({m: scalar * c for m, c in self.coeffs.items()})

    __rmul__ = __mul__

    def __str__(self):
        if not self.coeffs:
            return "0"
        parts = []
        for (a, b), c in self.coeffs.items():
            mono = ""
            if a:
                mono += "u" + (str(a).translate(_SUPERSCRIPT) if a > 1 else "")
            if b:
                mono += "v" + (str(b).translate(_SUPERSCRIPT) if b > 1 else "")
            mag = format(abs(c), ".6g")
            term = mag if not mono else (mono if mag == "1" else f"{mag}·{mono}")
            parts.append(("−" if c < 0 else "+", term))
        sign0, first = parts[0]
        text = ("−" if sign0 == "−" else "") + first
        for sign, term in parts[1:]:
            text += f" {sign} {term}"
        return text


def canonical_poly(beta: Sequence[float]) -> PdoPolynomial:
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (9,):
        raise ValueError(f"beta must have 9 entries, got shape {beta.shape}")
    return PdoPolynomial(dict(zip(CANONICAL_MONOMIALS, beta)))


def _linear_power(coef_u: float, coef_v: float, power: int) -> np.ndarray:
    """Coefficient array of (coef_u*u + coef_v*v)**power, indexed [a, b]."""
    out = np.zeros((power + 1, power + 1))
    out[0, 0] = 1.0
    for _ in range(power):
        nxt = np.zeros_like(out)
        nxt[1:, :] += coef_u * out[:-1, :]
        nxt[:, 1:] += coef_v * out[:, :-1]
        out = nxt
    return out


def substitute(p: PdoPolynomial, m: np.ndarray) -> PdoPolynomial:
    """Expand p with (u, v) -> m @ (u, v)."""
    size = MAX_DEGREE + 1
    acc = np.zeros((size, size))
    for (a, b), c in p.coeffs.items():
        pu = _linear_power(m[0, 0], m[0, 1], a)
        pv = _linear_power(m[1, 0], m[1, 1], b)
        # product of two bivariate polynomials
        for i, j in zip(*np.nonzero(pu)):
            acc[i : i + b + 1, j : j + b + 1] += c * pu[i, j] * pv
    return PdoPolynomial({(i, j): acc[i, j] for i in range(size) for j in range(size) if i + j <= MAX_DEGREE and acc[i, j] != 0.0})


def transform_poly(p: PdoPolynomial, A: GroupElement) -> PdoPolynomial:
    """The operator with gradient replaced by A^-1 grad.

    Returned coefficients are the per-monomial weights used to assemble the
    rotated filter for group element A.
    """
    if p.degree > MAX_DEGREE:
        raise BasisOverflowError(f"degree {p.degree} exceeds {MAX_DEGREE}")
    # A is orthogonal, so A^-1 = A^T
    return substitute(p, A.matrix().T)


def analytic_apply(p: PdoPolynomial, f, x) -> np.ndarray:
    """Apply the operator to an analytic field ``f`` at points ``x``.

    ``f`` must provide ``derivative(a, b, x)``; ``x`` has shape (..., 2).
    """
    x = np.asarray(x, dtype=float)
    total = np.zeros(x.shape[:-1])
    for (a, b), c in p.coeffs.items():
        total = total + c * f.derivative(a, b, x)
    return total
