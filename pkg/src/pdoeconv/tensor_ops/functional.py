"""Stateless layer semantics on :class:`FeatureMap` values."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..kernels import GroupConvBank, LiftingBank
from .conv import ShapeError, correlate2d


@dataclass(frozen=True)
class FeatureMap:
    """Dense (batch, channel, row, col) grid tensor.

    Channel ``f * orientation_arity + a`` holds feature f at orientation a.
    """

    data: np.ndarray
    orientation_arity: int = 1
    h: float = 1.0

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[None, None]
        elif data.ndim == 3:
            data = data[:, None]
        if data.ndim != 4:
            raise ShapeError(f"feature map must be 2-4 dimensional, got {data.ndim}")
        if data.shape[1] % self.orientation_arity:
            raise ShapeError(f"{data.shape[1]} channels not divisible by arity {self.orientation_arity}")
        object.__setattr__(self, "data", data)

    @property
    def features(self) -> int:
        return self.data.shape[1] // self.orientation_arity

    def orientation(self, f: int, a: int) -> np.ndarray:
        return self.data[:, f * self.orientation_arity + a]


def lifting_forward(images: FeatureMap, bank: LiftingBank) -> FeatureMap:
    if images.orientation_arity != 1:
        raise ShapeError("lifting expects planar input (orientation arity 1)")
    if images.data.shape[1] != bank.in_channels:
        raise ShapeError(f"bank expects {bank.in_channels} channels, got {images.data.shape[1]}")
    out = correlate2d(images.data.astype(float), bank.weights())
    return FeatureMap(out, len(bank.group), images.h)


def groupconv_forward(feat: FeatureMap, bank: GroupConvBank) -> FeatureMap:
    g = len(bank.group)
    if feat.orientation_arity != g:
        raise ShapeError(f"orientation arity {feat.orientation_arity} != |S| = {g}")
    if feat.features != bank.in_channels:
        raise ShapeError(f"bank expects {bank.in_channels} features, got {feat.features}")
    out = correlate2d(feat.data.astype(float), bank.weights())
    return FeatureMap(out, g, feat.h)


def relu(feat: FeatureMap) -> FeatureMap:
    return FeatureMap(np.maximum(feat.data, 0.0), feat.orientation_arity, feat.h)


def group_batchnorm(feat: FeatureMap, scale, bias, mode: str = "train",
                    running=None, momentum: float = 0.1, eps: float = 1e-5) -> FeatureMap:
    """Normalize each feature with statistics pooled over batch, space and orientations.

    ``running`` is a (mean, var) pair of arrays; in train mode it is updated
    in place, in eval mode it supplies the statistics.
    """
    n, c, hh, ww = feat.data.shape
    g = feat.orientation_arity
    xg = feat.data.reshape(n, c // g, g, hh, ww)
    scale = np.asarray(scale, dtype=float)
    bias = np.asarray(bias, dtype=float)
    if scale.shape != (c // g,) or bias.shape != (c // g,):
        raise ShapeError("need one scale and one bias per feature")
    if mode == "train":
        mean = xg.mean(axis=(0, 2, 3, 4))
        var = xg.var(axis=(0, 2, 3, 4))
        if running is not None:
            m = xg.size / (c // g)
            running[0][...] = (1 - momentum) * running[0] + momentum * mean
            running[1][...] = (1 - momentum) * running[1] + momentum * var * m / max(m - 1, 1)
    elif mode == "eval":
        if running is None:
            raise ValueError("eval mode needs running statistics")
        mean, var = running
    else:
        raise ValueError(f"unknown mode {mode!r}")
    shape = (1, -1, 1, 1, 1)
    out = (xg - mean.reshape(shape)) / np.sqrt(var.reshape(shape) + eps)
    out = out * scale.reshape(shape) + bias.reshape(shape)
    return FeatureMap(out.reshape(feat.data.shape), g, feat.h)


def orientation_pool(feat: FeatureMap) -> FeatureMap:
    n, c, hh, ww = feat.data.shape
    g = feat.orientation_arity
    out = feat.data.reshape(n, c // g, g, hh, ww).max(axis=2)
    return FeatureMap(out, 1, feat.h)


def act_on_features(data: np.ndarray, group, element, arity: int | None = None) -> np.ndarray:
    """Exact grid action of a 90-degree-multiple element (optionally with the
    y-flip) on planar or group feature maps.

    Spatially the map is flipped (if reflected) then rotated counterclockwise;
    for group features, output orientation b reads input orientation g^-1 b.
    """
    from ..group2d import inverse, is_grid_symmetry, product

    if not is_grid_symmetry(element):
        raise ValueError(f"{element.label} in {group.spec} is not a symmetry of the square grid")
    if data.shape[-1] != data.shape[-2]:
        raise ShapeError("grid action needs square maps")
    quarter = (4 * element.rotation_index) // element.n
    out = data[..., ::-1, :] if element.reflected else data
    out = np.rot90(out, quarter, axes=(-2, -1))
    if arity is None or arity == 1:
        return np.ascontiguousarray(out)
    n, c, hh, ww = out.shape
    gview = out.reshape(n, c // arity, arity, hh, ww)
    inv = inverse(element)
    src = [group.index(product(inv, b)) for b in group]
    return np.ascontiguousarray(gview[:, :, src].reshape(out.shape))
