import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdoeconv.group2d import make_group, product
from pdoeconv.kernels import (
    GroupConvBank,
    LiftingBank,
    assemble_mask,
    basis_matrix,
    beta_from_filter,
    groupconv_weights,
    groupconv_weights_grad,
    init_beta,
    lifting_weights,
    lifting_weights_grad,
    summand_index,
    synthesis_tensor,
    synthesize_kernel,
)
from pdoeconv.pdo import MONOMIALS
from pdoeconv.stencils import stencil_for

E = np.eye(9)


def test_identity_beta_gives_identity_mask():
    k = synthesize_kernel(E[0], make_group(4)[0], h=0.25)
    expected = np.zeros((5, 5))
    expected[2, 2] = 1.0
    assert np.array_equal(k.mask, expected)


def test_ux_kernel_scales_with_h():
    g = make_group(4)
    k = synthesize_kernel(E[1], g[0], h=0.1)
    assert np.allclose(k.mask, stencil_for(1, 0).embedded(5) / 0.1)
    # rotated by 90 degrees, u becomes v
    k1 = synthesize_kernel(E[1], g[1], h=0.1)
    assert np.allclose(k1.mask, stencil_for(0, 1).embedded(5) / 0.1)


def test_mask_is_linear_in_beta():
    rng = np.random.default_rng(0)
    A = make_group(8, True)[5]
    b1, b2 = rng.normal(size=(2, 9))
    m = lambda b: synthesize_kernel(b, A).mask
    assert np.allclose(m(2 * b1 - b2), 2 * m(b1) - m(b2), atol=1e-12)


def test_5x5_sufficiency_for_all_p8m_elements():
    """Transformed canonical operators stay within degree 4, so 5x5 suffices."""
    rng = np.random.default_rng(1)
    for A in make_group(8, True):
        k = synthesize_kernel(rng.normal(size=9), A)
        assert k.mask.shape == (5, 5)
        assert k.coeffs.shape == (15,)
        assert np.allclose(k.mask, assemble_mask(k.coeffs))


@pytest.mark.parametrize("refl", [False, True])
def test_ninety_degree_closure(refl):
    """Kernels for grid symmetries are exact rotations/flips of the canonical one."""
    g = make_group(8, refl)
    beta = np.random.default_rng(2).normal(size=9)
    base = synthesize_kernel(beta, g[0]).mask
    for A in g:
        if A.rotation_index % 2:
            continue
        expected = np.flipud(base) if A.reflected else base
        expected = np.rot90(expected, A.rotation_index // 2)
        assert np.abs(synthesize_kernel(beta, A).mask - expected).max() < 1e-12


def test_synthesis_tensor_matches_direct():
    g = make_group(4, True)
    T = synthesis_tensor(g, 0.5)
    assert T.shape == (8, 9, 5, 5)
    beta = np.random.default_rng(3).normal(size=9)
    for a, A in enumerate(g):
        assert np.allclose(np.tensordot(beta, T[a], axes=1), synthesize_kernel(beta, A, 0.5).mask)
    T[0, 0, 0, 0] = 99.0  # copies are writable and do not leak into the cache
    assert synthesis_tensor(g, 0.5)[0, 0, 0, 0] == 0.0


def test_basis_matrix():
    B = basis_matrix()
    assert B.shape == (9, 9)
    assert np.linalg.cond(B) < 1e3
    assert np.array_equal(B[:, 0], stencil_for(0, 0).mask.ravel())
    assert np.array_equal(B[:, 1], stencil_for(1, 0).mask.ravel())


def test_init_round_trip():
    beta = init_beta(4, 3, 2, rng_seed=7)
    assert beta.shape == (4, 3, 2, 9)
    filt = np.random.default_rng(7).normal(0.0, np.sqrt(2.0 / (3 * 2 * 9)), size=(4, 3, 2, 3, 3))
    canonical = np.einsum("oigj,pj->oigp", beta, basis_matrix()).reshape(filt.shape)
    assert np.abs(canonical - filt).max() < 1e-10
    assert np.allclose(init_beta(4, 3, 2, 7), beta)
    # identity-element synthesis reproduces the drawn 3x3 filter in the centre
    k = synthesize_kernel(beta[0, 0, 0], make_group(4)[0]).mask
    assert np.abs(k[1:4, 1:4] - filt[0, 0, 0]).max() < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=9, max_size=9))
def test_filter_beta_round_trip(values):
    filt = np.array(values).reshape(3, 3)
    beta = beta_from_filter(filt)
    assert np.allclose(synthesize_kernel(beta, make_group(4)[0]).mask[1:4, 1:4], filt, atol=1e-10)


def test_summand_index():
    g = make_group(4, True)
    kidx = summand_index(g)
    for a, A in enumerate(g):
        for b, B in enumerate(g):
            assert product(A, g[kidx[a, b]]) == B


def test_lifting_bank_layout():
    g = make_group(4)
    beta = np.random.default_rng(4).normal(size=(2, 3, 9))
    bank = LiftingBank(g, beta, 0.5)
    w = bank.weights()
    assert w.shape == (8, 3, 5, 5)
    assert np.allclose(w[1 * 4 + 3, 2], bank.kernel(1, 2, g[3]).mask)


def test_groupconv_bank_layout():
    g = make_group(4, True)
    beta = np.random.default_rng(5).normal(size=(2, 3, 8, 9))
    bank = GroupConvBank(g, beta)
    w = bank.weights()
    assert w.shape == (16, 24, 5, 5)
    kidx = summand_index(g)
    for a, b in [(0, 0), (1, 2), (5, 3), (7, 6)]:
        k = g[kidx[a, b]]
        assert np.allclose(w[1 * 8 + a, 2 * 8 + b], bank.kernel(1, 2, k, g[a]).mask)


def test_weight_gradients_are_adjoints():
    rng = np.random.default_rng(6)
    g = make_group(4, True)
    T = synthesis_tensor(g)
    beta = rng.normal(size=(2, 3, 9))
    gw = rng.normal(size=(16, 3, 5, 5))
    assert np.isclose(np.sum(lifting_weights(beta, T) * gw), np.sum(beta * lifting_weights_grad(gw, T, 3)))
    beta = rng.normal(size=(2, 3, 8, 9))
    gw = rng.normal(size=(16, 24, 5, 5))
    lhs = np.sum(groupconv_weights(beta, T, g) * gw)
    rhs = np.sum(beta * groupconv_weights_grad(gw, T, g, 3))
    assert np.isclose(lhs, rhs)


def test_bad_mesh_size():
    with pytest.raises(ValueError):
        synthesize_kernel(E[0], make_group(4)[0], h=0.0)


def test_monomial_coefficients_reported():
    k = synthesize_kernel(E[3], make_group(4)[1])  # u^2 rotated by 90 degrees
    assert k.coeffs[MONOMIALS.index((0, 2))] == pytest.approx(1.0)
