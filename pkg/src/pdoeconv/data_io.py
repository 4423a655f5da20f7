"""Dataset readers (MNIST IDX, rotated-MNIST ``.amat``), rotation augmentation
and a synthetic rotated-glyph generator."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801
AMAT_WIDTH = 785


class DataFormatError(ValueError):
    pass


class BadMagicError(DataFormatError):
    pass


class TruncatedFileError(DataFormatError):
    pass


class MalformedRowError(DataFormatError):
    pass


@dataclass
class LabeledDataset:
    images: np.ndarray  # (count, H, W) floats in [0, 1]
    labels: np.ndarray  # (count,) ints
    split: str = "train"

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 3:
            raise DataFormatError(f"images must be (count, H, W), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise DataFormatError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self):
        return len(self.labels)

    def subset(self, idx, split=None) -> "LabeledDataset":
        return LabeledDataset(self.images[idx], self.labels[idx], split or self.split)

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0


def read_idx_array(path) -> tuple[int, np.ndarray]:
    """Parse a raw (uncompressed) IDX file of unsigned bytes; returns (magic, array)."""
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise TruncatedFileError(f"{path}: file too short for an IDX header")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic not in (IDX_IMAGES, IDX_LABELS):
        raise BadMagicError(f"{path}: bad IDX magic 0x{magic:08x}")
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise TruncatedFileError(f"{path}: truncated IDX dimensions")
    dims = struct.unpack(">" + "I" * ndim, raw[4:head])
    size = int(np.prod(dims, dtype=np.int64))
    if len(raw) - head < size:
        raise TruncatedFileError(f"{path}: expected {size} data bytes, found {len(raw) - head}")
    if len(raw) - head > size:
        raise DataFormatError(f"{path}: {len(raw) - head - size} bytes beyond declared dimensions {dims}")
    return magic, np.frombuffer(raw, dtype=np.uint8, offset=head).reshape(dims)


def read_idx(images_path, labels_path, split: str = "train") -> LabeledDataset:
    magic, images = read_idx_array(images_path)
    if magic != IDX_IMAGES:
        raise BadMagicError(f"{images_path}: expected image magic 0x{IDX_IMAGES:08x}, got 0x{magic:08x}")
    magic, labels = read_idx_array(labels_path)
    if magic != IDX_LABELS:
        raise BadMagicError(f"{labels_path}: expected label magic 0x{IDX_LABELS:08x}, got 0x{magic:08x}")
    if len(images) != len(labels):
        raise DataFormatError(f"{len(images)} images but {len(labels)} labels")
    return LabeledDataset(images.astype(float) / 255.0, labels.astype(np.int64), split)


def write_idx(path, array: np.ndarray):
    """Write a uint8 array as IDX (used for fixtures and exports)."""
    array = np.asarray(array, dtype=np.uint8)
    magic = 0x00000800 | array.ndim
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        f.write(struct.pack(">" + "I" * array.ndim, *array.shape))
        f.write(array.tobytes())


def read_amat(path, split: str = "train", side: int = 28) -> LabeledDataset:
    """Whitespace-separated rows of 784 pixels followed by the label."""
    images, labels = [], []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != side * side + 1:
                raise MalformedRowError(f"{path}:{lineno}: expected {side * side + 1} values, got {len(fields)}")
            row = np.array(fields, dtype=float)
            images.append(row[:-1].reshape(side, side))
            labels.append(int(round(row[-1])))
    if not images:
        return LabeledDataset(np.zeros((0, side, side)), np.zeros(0, dtype=np.int64), split)
    return LabeledDataset(np.stack(images), np.array(labels), split)


def rotate_bilinear(image: np.ndarray, theta: float) -> np.ndarray:
    """Rotate counterclockwise (as displayed) about the image center.

    Bilinear interpolation; samples outside the image read as zero.
    """
    image = np.asarray(image, dtype=float)
    hh, ww = image.shape[-2:]
    if hh != ww:
        raise ValueError("rotate_bilinear expects a square image")
    c = (hh - 1) / 2.0
    rows, cols = np.meshgrid(np.arange(hh), np.arange(ww), indexing="ij")
    x = cols - c
    y = c - rows  # y grows upward
    cs, sn = np.cos(theta), np.sin(theta)
    # inverse map: source = R(-theta) (x, y)
    xs = cs * x + sn * y
    ys = -sn * x + cs * y
    src_c = xs + c
    src_r = c - ys
    padded = np.pad(image, [(0, 0)] * (image.ndim - 2) + [(1, 1), (1, 1)])
    # shift by one for the zero border; clamp far-out samples onto the border
    pr = np.clip(src_r + 1, 0, hh + 1)
    pc = np.clip(src_c + 1, 0, ww + 1)
    r0 = np.clip(np.floor(pr).astype(int), 0, hh)
    c0 = np.clip(np.floor(pc).astype(int), 0, ww)
    fr = pr - r0
    fc = pc - c0
    out = (
        padded[..., r0, c0] * (1 - fr) * (1 - fc)
        + padded[..., r0 + 1, c0] * fr * (1 - fc)
        + padded[..., r0, c0 + 1] * (1 - fr) * fc
        + padded[..., r0 + 1, c0 + 1] * fr * fc
    )
    return out


# glyph strokes as segments in a unit frame centred on the origin
GLYPHS = {
    "bar": [((0.0, -1.0), (0.0, 1.0))],
    "L": [((-0.4, -0.9), (-0.4, 0.9)), ((-0.4, -0.9), (0.6, -0.9))],
    "T": [((-0.8, 0.9), (0.8, 0.9)), ((0.0, 0.9), (0.0, -0.9))],
    "plus": [((-0.8, 0.0), (0.8, 0.0)), ((0.0, -0.8), (0.0, 0.8))],
    "Z": [((-0.7, 0.8), (0.7, 0.8)), ((0.7, 0.8), (-0.7, -0.8)), ((-0.7, -0.8), (0.7, -0.8))],
    "V": [((-0.7, 0.9), (0.0, -0.9)), ((0.0, -0.9), (0.7, 0.9))],
}
GLYPH_ORDER = ("bar", "L", "T", "plus", "Z", "V")


def _segment_distance(px, py, a, b):
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    t = np.clip(((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy), 0.0, 1.0)
    return np.hypot(px - ax - t * dx, py - ay - t * dy)


def render_glyph(name: str, theta: float, size: int = 28, scale: float = 9.0,
                 width: float = 1.2, offset=(0.0, 0.0)) -> np.ndarray:
    """Anti-aliased stroke rendering of a glyph rotated by ``theta`` (CCW)."""
    c = (size - 1) / 2.0
    rows, cols = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    x = (cols - c - offset[0]) / scale
    y = (c - rows - offset[1]) / scale
    cs, sn = np.cos(theta), np.sin(theta)
    u = cs * x + sn * y
    v = -sn * x + cs * y
    dist = np.min([_segment_distance(u, v, a, b) for a, b in GLYPHS[name]], axis=0) * scale
    return np.clip(width + 0.5 - dist, 0.0, 1.0)


def synth_rotated_shapes(count: int, classes: int = 3, seed: int = 0, size: int = 28,
                         noise: float = 0.15, distractors: int = 2, split: str = "train") -> LabeledDataset:
    """Random-angle glyphs (bar, L, T, ...), one glyph kind per class.

    Each image also gets up to ``distractors`` short random strokes and
    additive Gaussian pixel noise of std ``noise``; stroke width, glyph scale
    and position jitter per sample.  Deterministic for a given seed.
    """
    if not 1 <= classes <= len(GLYPH_ORDER):
        raise ValueError(f"classes must be in [1, {len(GLYPH_ORDER)}]")
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, classes, size=count)
    images = np.empty((count, size, size))
    c = (size - 1) / 2.0
    for i in range(count):
        theta = rng.uniform(0.0, 2 * np.pi)
        scale = rng.uniform(6.0, 9.0)
        width = rng.uniform(0.7, 1.4)
        offset = rng.uniform(-2.5, 2.5, size=2)
        img = render_glyph(GLYPH_ORDER[labels[i]], theta, size, scale, width, offset)
        for _ in range(rng.integers(0, distractors + 1)):
            a = rng.uniform(-c + 2, c - 2, size=2)
            phi = rng.uniform(0.0, 2 * np.pi)
            length = rng.uniform(2.0, 4.0)
            b = a + length * np.array([np.cos(phi), np.sin(phi)])
            img = np.maximum(img, _render_segment(a, b, size, width))
        images[i] = img
    if noise:
        images = np.clip(images + noise * rng.normal(size=images.shape), 0.0, 1.0)
    return LabeledDataset(images, labels, split)


def _render_segment(a, b, size, width):
    c = (size - 1) / 2.0
    rows, cols = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    dist = _segment_distance(cols - c, c - rows, a, b)
    return np.clip(width + 0.5 - dist, 0.0, 1.0)


def rotate_dataset(ds: LabeledDataset, seed: int = 0) -> LabeledDataset:
    """Copy of ``ds`` with every image rotated by an independent uniform angle."""
    rng = np.random.default_rng(seed)
    thetas = rng.uniform(0.0, 2 * np.pi, size=len(ds))
    images = np.stack([np.clip(rotate_bilinear(im, t), 0.0, 1.0) for im, t in zip(ds.images, thetas)]) if len(ds) else ds.images
    return LabeledDataset(images, ds.labels.copy(), ds.split)
