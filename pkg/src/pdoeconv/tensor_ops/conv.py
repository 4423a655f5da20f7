"""Batched 2D cross-correlation (no kernel flip) with exact adjoints.

The input is copied once into a zero-padded, channels-last buffer whose rows
are flattened (batch, row, col) positions.  A kernel tap (p, q) is then just a
row offset p*Wp + q into that buffer, so each tap is one GEMM on a contiguous
slice and no patch matrix is ever built.  Outputs computed at wrap-around
positions are discarded.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    pass


@dataclass
class _Padded:
    buf: np.ndarray  # (n*hp*wp + tail, c)
    n: int
    hp: int
    wp: int
    pad: int
    k: int

    @property
    def length(self) -> int:
        return self.n * self.hp * self.wp

    @property
    def out_hw(self) -> tuple[int, int]:
        return self.hp - self.k + 1, self.wp - self.k + 1

    def offsets(self):
        for p in range(self.k):
            for q in range(self.k):
                yield p, q, p * self.wp + q


def _pad_channels_last(x: np.ndarray, k: int, pad: int) -> _Padded:
    n, c, hh, ww = x.shape
    hp, wp = hh + 2 * pad, ww + 2 * pad
    if hp < k or wp < k:
        raise ShapeError(f"input {x.shape[2:]} too small for {k}x{k} kernel")
    tail = (k - 1) * wp + (k - 1)
    buf = np.zeros((n * hp * wp + tail, c), dtype=x.dtype)
    grid = buf[: n * hp * wp].reshape(n, hp, wp, c)
    grid[:, pad : pad + hh, pad : pad + ww] = x.transpose(0, 2, 3, 1)
    return _Padded(buf, n, hp, wp, pad, k)


def _check(x, w):
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError("expected 4-d input and kernel")
    o, c, k, k2 = w.shape
    if k != k2:
        raise ShapeError("kernel must be square")
    if x.shape[1] != c:
        raise ShapeError(f"input has {x.shape[1]} channels, kernel expects {c}")
    return o, c, k


def correlate2d(x: np.ndarray, w: np.ndarray, pad: int | None = None, return_cache: bool = False):
    """out[n, o] = sum_c w[o, c] (star) x[n, c].

    x: (N, C, H, W); w: (O, C, k, k).  ``pad`` defaults to (k-1)//2 ("same").
    """
    o, c, k = _check(x, w)
    if pad is None:
        pad = (k - 1) // 2
    xp = _pad_channels_last(x, k, pad)
    L = xp.length
    wt = np.ascontiguousarray(w.transpose(2, 3, 1, 0)).astype(x.dtype, copy=False)  # (k, k, c, o)
    acc = np.zeros((L, o), dtype=np.result_type(x.dtype, wt.dtype))
    tmp = np.empty_like(acc)
    for p, q, off in xp.offsets():
        np.matmul(xp.buf[off : off + L], wt[p, q], out=tmp)
        acc += tmp
    ho, wo = xp.out_hw
    out = acc.reshape(xp.n, xp.hp, xp.wp, o)[:, :ho, :wo].transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out)
    return (out, xp) if return_cache else out


def correlate2d_backward(grad_out: np.ndarray, x: np.ndarray, w: np.ndarray,
                         pad: int | None = None, cache: _Padded | None = None):
    """Adjoints of :func:`correlate2d`: returns (grad_input, grad_kernel)."""
    o, c, k = _check(x, w)
    if pad is None:
        pad = (k - 1) // 2
    xp = cache if cache is not None else _pad_channels_last(x, k, pad)
    ho, wo = xp.out_hw
    n = x.shape[0]
    if grad_out.shape != (n, o, ho, wo):
        raise ShapeError(f"grad_out shape {grad_out.shape} != {(n, o, ho, wo)}")
    L = xp.length
    dtype = np.result_type(grad_out.dtype, x.dtype)
    g = np.zeros((n, xp.hp, xp.wp, o), dtype=dtype)
    g[:, :ho, :wo] = grad_out.transpose(0, 2, 3, 1)
    g = g.reshape(L, o)
    wt = np.ascontiguousarray(w.transpose(2, 3, 0, 1)).astype(dtype, copy=False)  # (k, k, o, c)
    grad_w = np.empty((k, k, c, o), dtype=dtype)
    dbuf = np.zeros((xp.buf.shape[0], c), dtype=dtype)
    tmp = np.empty((L, c), dtype=dtype)
    for p, q, off in xp.offsets():
        np.matmul(xp.buf[off : off + L].T, g, out=grad_w[p, q])
        np.matmul(g, wt[p, q], out=tmp)
        dbuf[off : off + L] += tmp
    grid = dbuf[:L].reshape(n, xp.hp, xp.wp, c)
    hh, ww = x.shape[2:]
    grad_x = np.ascontiguousarray(grid[:, pad : pad + hh, pad : pad + ww].transpose(0, 3, 1, 2))
    return grad_x, grad_w.transpose(3, 2, 0, 1).astype(w.dtype, copy=False)
