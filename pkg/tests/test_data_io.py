import struct

import numpy as np
import pytest

from pdoeconv.data_io import (
    BadMagicError,
    DataFormatError,
    LabeledDataset,
    MalformedRowError,
    TruncatedFileError,
    read_amat,
    read_idx,
    read_idx_array,
    render_glyph,
    rotate_bilinear,
    rotate_dataset,
    synth_rotated_shapes,
    write_idx,
)


def hand_encoded_idx(tmp_path):
    """Four 2x3 images and their labels, bytes written out by hand."""
    images = bytes([0, 0, 8, 3, 0, 0, 0, 4, 0, 0, 0, 2, 0, 0, 0, 3,
                    0, 255, 0, 51, 102, 153,
                    255, 255, 255, 0, 0, 0,
                    1, 2, 3, 4, 5, 6,
                    0, 0, 0, 0, 0, 255])
    labels = bytes([0, 0, 8, 1, 0, 0, 0, 4, 7, 1, 0, 9])
    (tmp_path / "img").write_bytes(images)
    (tmp_path / "lbl").write_bytes(labels)
    return tmp_path / "img", tmp_path / "lbl"


def test_read_idx_fixture(tmp_path):
    ds = read_idx(*hand_encoded_idx(tmp_path), split="test")
    assert ds.images.shape == (4, 2, 3)
    assert ds.labels.tolist() == [7, 1, 0, 9]
    assert ds.images[0, 0].tolist() == [0.0, 1.0, 0.0]
    assert ds.images[0, 1].tolist() == pytest.approx([0.2, 0.4, 0.6])
    assert ds.images[2].ravel().tolist() == [v / 255 for v in range(1, 7)]
    assert ds.images[3, 1, 2] == 1.0
    assert ds.split == "test" and ds.num_classes == 10


def test_write_idx_round_trip(tmp_path):
    arr = np.random.default_rng(0).integers(0, 256, size=(3, 4, 5)).astype(np.uint8)
    write_idx(tmp_path / "x", arr)
    magic, back = read_idx_array(tmp_path / "x")
    assert magic == 0x803 and np.array_equal(arr, back)


def test_idx_errors(tmp_path):
    img, lbl = hand_encoded_idx(tmp_path)
    (tmp_path / "empty").write_bytes(b"")
    with pytest.raises(TruncatedFileError):
        read_idx_array(tmp_path / "empty")
    (tmp_path / "magic").write_bytes(struct.pack(">I", 0x0000_0D03) + img.read_bytes()[4:])
    with pytest.raises(BadMagicError):
        read_idx_array(tmp_path / "magic")
    (tmp_path / "short").write_bytes(img.read_bytes()[:-1])
    with pytest.raises(TruncatedFileError):
        read_idx_array(tmp_path / "short")
    (tmp_path / "long").write_bytes(img.read_bytes() + b"\x00")
    with pytest.raises(DataFormatError):
        read_idx_array(tmp_path / "long")
    with pytest.raises(BadMagicError):
        read_idx(lbl, img)  # swapped files


def test_read_amat(tmp_path):
    (tmp_path / "one.amat").write_text(" ".join(["0"] * 784 + ["7.0"]) + "\n")
    ds = read_amat(tmp_path / "one.amat")
    assert ds.images.shape == (1, 28, 28) and not ds.images.any() and ds.labels.tolist() == [7]
    rows = [" ".join([f"{0.1 * k}"] * 784 + [f"{label}.000000e+00"]) for k, label in enumerate((3, 9, 1))]
    (tmp_path / "three.amat").write_text("\n".join(rows) + "\n\n")
    ds = read_amat(tmp_path / "three.amat")
    assert ds.labels.tolist() == [3, 9, 1]
    assert ds.images[:, 5, 5].tolist() == pytest.approx([0.0, 0.1, 0.2])
    (tmp_path / "short.amat").write_text(" ".join(["0"] * 783) + "\n")
    with pytest.raises(MalformedRowError):
        read_amat(tmp_path / "short.amat")
    (tmp_path / "none.amat").write_text("")
    assert len(read_amat(tmp_path / "none.amat")) == 0


def test_dataset_validation():
    with pytest.raises(DataFormatError):
        LabeledDataset(np.zeros((2, 4, 4)), np.zeros(3))
    with pytest.raises(DataFormatError):
        LabeledDataset(np.zeros((2, 16)), np.zeros(2))
    ds = LabeledDataset(np.zeros((4, 2, 2)), [0, 1, 2, 1])
    assert ds.subset([1, 3]).labels.tolist() == [1, 1]


def test_rotate_bilinear_examples():
    img = np.random.default_rng(1).random((9, 9))
    assert np.allclose(rotate_bilinear(img, 0.0), img)
    # a quarter turn counterclockwise is exactly np.rot90 on a square image
    assert np.allclose(rotate_bilinear(img, np.pi / 2), np.rot90(img), atol=1e-12)
    assert np.allclose(rotate_bilinear(img, np.pi), np.rot90(img, 2), atol=1e-12)
    with pytest.raises(ValueError):
        rotate_bilinear(np.zeros((4, 5)), 0.3)


def smooth_fixture(n, theta=0.0):
    """Anisotropic Gaussian rotated by theta, sampled on pixel centres."""
    y, x = np.mgrid[:n, :n] - (n - 1) / 2
    y = -y
    c, s = np.cos(theta), np.sin(theta)
    u, v = c * x + s * y, -s * x + c * y
    return np.exp(-(u**2 + 2 * v**2) / 60.0)


def test_rotate_bilinear_round_trip_on_smooth_image():
    img = smooth_fixture(41)
    single = np.abs(rotate_bilinear(img, 0.4) - smooth_fixture(41, 0.4)).max()
    back = rotate_bilinear(rotate_bilinear(img, 0.4), -0.4)
    assert 0 < single < 0.02
    assert np.abs(back - img).max() <= 2 * single


def test_render_glyph_rotation_convention():
    upright = render_glyph("bar", 0.0, size=21, scale=8.0)
    assert upright[:, 10].sum() > 5 * upright[10, :].sum()  # vertical bar
    turned = render_glyph("bar", np.pi / 2, size=21, scale=8.0)
    assert np.allclose(turned, np.rot90(upright), atol=1e-9)


def test_synth_is_deterministic_and_balanced():
    a = synth_rotated_shapes(60, 3, seed=5)
    b = synth_rotated_shapes(60, 3, seed=5)
    assert np.array_equal(a.images, b.images) and np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.images, synth_rotated_shapes(60, 3, seed=6).images)
    assert a.images.shape == (60, 28, 28)
    assert a.images.min() >= 0.0 and a.images.max() <= 1.0
    assert set(a.labels.tolist()) == {0, 1, 2}
    with pytest.raises(ValueError):
        synth_rotated_shapes(5, classes=9)
    two = synth_rotated_shapes(100, classes=2, seed=0)
    assert len(two) == 100 and set(two.labels.tolist()) <= {0, 1}


def test_class_conditional_means_differ():
    ds = synth_rotated_shapes(600, 3, seed=3)
    means = [ds.images[ds.labels == k].mean() for k in range(3)]
    stderr = max(ds.images[ds.labels == k].mean(axis=(1, 2)).std() / np.sqrt((ds.labels == k).sum())
                 for k in range(3))
    # the glyphs carry different amounts of ink
    assert max(means) - min(means) > 5 * stderr


def moment_invariants(im):
    """Four rotation-invariant normalized central moments."""
    r, c = np.mgrid[: im.shape[0], : im.shape[1]]
    m = im.sum()
    dy, dx = r - (r * im).sum() / m, c - (c * im).sum() / m
    mu = lambda p, q: (dx**p * dy**q * im).sum() / m ** (1 + (p + q) / 2)
    n20, n02, n11 = mu(2, 0), mu(0, 2), mu(1, 1)
    n30, n03, n21, n12 = mu(3, 0), mu(0, 3), mu(2, 1), mu(1, 2)
    return np.log(np.abs([
        n20 + n02,
        (n20 - n02) ** 2 + 4 * n11**2,
        (n30 - 3 * n12) ** 2 + (3 * n21 - n03) ** 2,
        (n30 + n12) ** 2 + (n21 + n03) ** 2,
    ]) + 1e-12)


def test_synth_classes_are_learnable():
    """Nearest class centroid on rotation-invariant moments beats chance by far."""
    tr = synth_rotated_shapes(300, 3, seed=0, noise=0.0, distractors=0)
    te = synth_rotated_shapes(300, 3, seed=1, noise=0.0, distractors=0)
    F = np.array([moment_invariants(i) for i in tr.images])
    G = np.array([moment_invariants(i) for i in te.images])
    mu, sd = F.mean(0), F.std(0)
    F, G = (F - mu) / sd, (G - mu) / sd
    centroids = np.array([F[tr.labels == k].mean(0) for k in range(3)])
    pred = np.argmin(((G[:, None] - centroids[None]) ** 2).sum(-1), axis=1)
    assert np.mean(pred == te.labels) > 0.8  # chance is 1/3


def test_rotate_dataset():
    ds = synth_rotated_shapes(4, 3, seed=0)
    rot = rotate_dataset(ds, seed=1)
    assert rot.images.shape == ds.images.shape
    assert np.array_equal(rot.labels, ds.labels)
    assert np.array_equal(rot.images, rotate_dataset(ds, seed=1).images)
