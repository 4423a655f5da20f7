"""Filter synthesis: one 5x5 mask per group element from a shared 9-vector beta.

The mask for element A is sum_i C_i^(A) u_i / h^order(i), where C^(A) are the
coefficients of the canonical operator after the substitution grad -> A^-1 grad
and u_i the finite-difference stencils.  Everything here is linear in beta, so
banks are built from a precomputed synthesis tensor of shape (|S|, 9, 5, 5).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .group2d import Group2D, GroupElement
from .pdo import CANONICAL_MONOMIALS, MONOMIALS, canonical_poly, transform_poly
from .stencils import stencil_for

KSIZE = 5


class InitializationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SynthesizedKernel:
    element: GroupElement
    mask: np.ndarray
    coeffs: np.ndarray  # 15 monomial weights C^(A) in MONOMIALS order


@lru_cache(maxsize=None)
def _embedded_stencils() -> np.ndarray:
    """(15, 5, 5) h-free stencils in MONOMIALS order."""
    return np.stack([stencil_for(a, b).embedded(KSIZE) for a, b in MONOMIALS])


_ORDERS = np.array([a + b for a, b in MONOMIALS])


def assemble_mask(coeffs: np.ndarray, h: float = 1.0) -> np.ndarray:
    scale = np.asarray(coeffs, dtype=float) / float(h) ** _ORDERS
    return np.tensordot(scale, _embedded_stencils(), axes=1)


def synthesize_kernel(beta, A: GroupElement, h: float = 1.0) -> SynthesizedKernel:
    if h <= 0:
        raise ValueError("mesh size must be positive")
    coeffs = transform_poly(canonical_poly(beta), A).to_vector()
    return SynthesizedKernel(A, assemble_mask(coeffs, h), coeffs)


def synthesis_tensor(group: Group2D, h: float = 1.0) -> np.ndarray:
    """T[a, j] = mask of element a for beta = e_j; shape (|S|, 9, 5, 5)."""
    return _synthesis_tensor(group.n, group.with_reflections, float(h)).copy()


@lru_cache(maxsize=64)
def _synthesis_tensor(n: int, refl: bool, h: float) -> np.ndarray:
    group = Group2D(n, refl)
    eye = np.eye(9)
    out = np.stack([
        np.stack([synthesize_kernel(eye[j], A, h).mask for j in range(9)])
        for A in group
    ])
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _basis_matrix() -> np.ndarray:
    m = np.stack([stencil_for(a, b).mask.ravel() for a, b in CANONICAL_MONOMIALS], axis=1)
    m.setflags(write=False)
    return m


def basis_matrix() -> np.ndarray:
    """9x9 matrix whose columns are the flattened 3x3 canonical stencils (h = 1)."""
    return _basis_matrix().copy()


def beta_from_filter(filt) -> np.ndarray:
    """Solve for the beta whose identity-element 3x3 filter equals ``filt``."""
    filt = np.asarray(filt, dtype=float)
    try:
        return np.linalg.solve(_basis_matrix(), filt.reshape(*filt.shape[:-2], 9)[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise InitializationError("stencil basis matrix is singular") from exc


def init_beta(out_ch: int, in_ch: int, group_channels: int = 1, rng_seed=0) -> np.ndarray:
    """He-style initialization of the canonical 3x3 filters, mapped to beta.

    Returns shape (out_ch, in_ch, group_channels, 9).  ``rng_seed`` may be an
    int or a ``numpy.random.Generator``.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    fan_in = in_ch * group_channels * 9
    filt = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(out_ch, in_ch, group_channels, 3, 3))
    return beta_from_filter(filt)


def lifting_weights(beta: np.ndarray, T: np.ndarray) -> np.ndarray:
    """beta (out, in, 9) -> weights (out*|S|, in, 5, 5), channel f*|S| + a."""
    out_ch, in_ch, _ = beta.shape
    w = np.einsum("oij,ajpq->oaipq", beta, T)
    return w.reshape(out_ch * T.shape[0], in_ch, KSIZE, KSIZE)


def lifting_weights_grad(grad_w: np.ndarray, T: np.ndarray, in_ch: int) -> np.ndarray:
    g = T.shape[0]
    gw = grad_w.reshape(-1, g, in_ch, KSIZE, KSIZE)
    return np.einsum("oaipq,ajpq->oij", gw, T)


def groupconv_weights(beta: np.ndarray, T: np.ndarray, group: Group2D) -> np.ndarray:
    """beta (out, in, |S|, 9) -> weights (out*|S|, in*|S|, 5, 5).

    Output (f, A) reads input (f', A k) through the kernel of summand k, so
    the weight block (a, b) uses summand k = a^-1 b.
    """
    out_ch, in_ch, g, _ = beta.shape
    kidx = summand_index(group)
    bg = beta[:, :, kidx]  # (out, in, a, b, 9)
    w = np.einsum("oiabj,ajpq->oaibpq", bg, T)
    return w.reshape(out_ch * g, in_ch * g, KSIZE, KSIZE)


def groupconv_weights_grad(grad_w: np.ndarray, T: np.ndarray, group: Group2D, in_ch: int) -> np.ndarray:
    g = len(group)
    out_ch = grad_w.shape[0] // g
    gw = grad_w.reshape(out_ch, g, in_ch, g, KSIZE, KSIZE)
    gb = np.einsum("oaibpq,ajpq->oiabj", gw, T)
    kidx = summand_index(group)
    out = np.zeros((out_ch, in_ch, g, 9))
    for a in range(g):
        # b -> k is a bijection for fixed a
        out[:, :, kidx[a]] += gb[:, :, a]
    return out


def summand_index(group: Group2D) -> np.ndarray:
    """kidx[a, b] = index of elements[a]^-1 * elements[b]."""
    table = group.product_table
    return table[group.inverse_table]


@dataclass(frozen=True)
class LiftingBank:
    group: Group2D
    beta: np.ndarray  # (out, in, 9)
    h: float = 1.0

    @property
    def out_channels(self) -> int:
        return self.beta.shape[0]

    @property
    def in_channels(self) -> int:
        return self.beta.shape[1]

    def weights(self) -> np.ndarray:
        return lifting_weights(np.asarray(self.beta, float), _synthesis_tensor(self.group.n, self.group.with_reflections, float(self.h)))

    def kernel(self, out: int, inp: int, A: GroupElement) -> SynthesizedKernel:
        return synthesize_kernel(self.beta[out, inp], A, self.h)


@dataclass(frozen=True)
class GroupConvBank:
    group: Group2D
    beta: np.ndarray  # (out, in, |S|, 9)
    h: float = 1.0

    @property
    def out_channels(self) -> int:
        return self.beta.shape[0]

    @property
    def in_channels(self) -> int:
        return self.beta.shape[1]

    def weights(self) -> np.ndarray:
        T = _synthesis_tensor(self.group.n, self.group.with_reflections, float(self.h))
        return groupconv_weights(np.asarray(self.beta, float), T, self.group)

    def kernel(self, out: int, inp: int, k: GroupElement, A: GroupElement) -> SynthesizedKernel:
        return synthesize_kernel(self.beta[out, inp, self.group.index(k)], A, self.h)
