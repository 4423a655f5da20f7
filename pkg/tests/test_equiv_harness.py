import json

import numpy as np
import pytest

from pdoeconv.equiv_harness import (
    NotGridSymmetryError,
    continuous_identity_error,
    convergence_study,
    exact_grid_check,
    exact_p4_check,
    _default_lift_beta,
    groupconv_equivariance_error,
    lifted_features,
    lifting_equivariance_error,
    rotate_field,
    sample_field,
)
from pdoeconv.fields import constant_field, gaussian, random_field
from pdoeconv.group2d import make_group
from pdoeconv.kernels import GroupConvBank, LiftingBank
from pdoeconv.stencils import cell_centers
from pdoeconv.tensor_ops import correlate2d

P8 = make_group(8)


def test_sample_field_uses_cell_centres():
    f = gaussian((0.25, 0.75), 0.3)
    grid = sample_field(f, 4)
    # row 0 is the top (largest y); column 0 the left (smallest x)
    assert grid.shape == (4, 4)
    assert grid[0, 0] == pytest.approx(f(np.array([0.125, 0.875])))
    assert np.unravel_index(grid.argmax(), grid.shape) in {(0, 0), (0, 1), (1, 0), (1, 1)}
    assert np.allclose(sample_field(constant_field(2.0), 3), 2.0)


def test_sample_field_examples():
    pts = cell_centers(2).reshape(-1, 2)
    assert sorted(map(tuple, pts)) == [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)]
    f = gaussian((0.5, 0.5), 0.1)
    assert np.allclose(sample_field(f, 2), f(np.array([0.25, 0.25])), rtol=0, atol=1e-15)
    g = gaussian((0.3, 0.6), 0.2)
    grid = sample_field(g, 64)
    r, c = np.unravel_index(grid.argmax(), grid.shape)
    assert abs(grid[r, c] - g(np.array([(c + 0.5) / 64, 1 - (r + 0.5) / 64]))) < 1e-12


def test_rotate_field_spec_examples():
    iso = gaussian((0.0, 0.0), 0.3)
    x = np.random.default_rng(0).uniform(-1, 1, size=(10, 2))
    for el in make_group(8, True):
        assert np.allclose(rotate_field(iso, el)(x), iso(x), rtol=0, atol=1e-15)
    moved = rotate_field(gaussian((0.3, 0.0), 0.2), make_group(4)[1])
    assert np.allclose(moved.components[0].center, [0.0, 0.3], atol=1e-15)


def test_rotate_field_example():
    f = gaussian((1.0, 0.0), 0.5)
    g = rotate_field(f, make_group(4)[1])  # quarter turn about the origin
    assert g(np.array([0.0, 1.0])) == pytest.approx(1.0)
    h = rotate_field(f, make_group(4)[2], about=(0.5, 0.5))
    assert h(np.array([0.0, 1.0])) == pytest.approx(1.0)


def test_continuous_identity_random_draws():
    rng = np.random.default_rng(0)
    g = make_group(8, True)
    worst = 0.0
    for _ in range(20):
        f = random_field(rng)
        worst = max(worst, continuous_identity_error(rng.normal(size=9), g[rng.integers(16)],
                                                     g[rng.integers(16)], f, rng.uniform(0, 1, (3, 2))))
    assert worst < 1e-9


def test_identity_operator_is_exactly_equivariant():
    beta = np.eye(9)[0]
    f = random_field(np.random.default_rng(1))
    for n in (32, 64):
        assert lifting_equivariance_error(beta, P8, P8[1], f, n) < 1e-12


def test_lifting_error_quarters_under_refinement():
    rng = np.random.default_rng(2)
    f = random_field(rng)
    beta = rng.normal(size=9)
    errs = [lifting_equivariance_error(beta, P8, P8[1], f, n) for n in (32, 64, 128)]
    assert all(3.0 <= a / b <= 5.3 for a, b in zip(errs, errs[1:]))


def test_grid_rotation_has_no_discretization_gap():
    # for a quarter turn the rotated sampling grid coincides with the original one
    rng = np.random.default_rng(3)
    f = random_field(rng)
    beta = rng.normal(size=9)
    disc = lifting_equivariance_error(beta, P8, P8[2], f, 32)
    ident = lifting_equivariance_error(beta, P8, P8[0], f, 32)
    assert disc == pytest.approx(ident, rel=1e-9)


def test_groupconv_error_converges():
    rng = np.random.default_rng(4)
    f = random_field(rng)
    bank = GroupConvBank(P8, rng.normal(size=(1, 1, 8, 9)))
    errs = [groupconv_equivariance_error(bank, P8, P8[1], f, n) for n in (32, 64, 128)]
    assert all(3.0 <= a / b <= 5.3 for a, b in zip(errs, errs[1:]))


def test_groupconv_discrete_mode_on_grid_symmetry():
    p4 = make_group(4)
    rng = np.random.default_rng(5)
    bank = GroupConvBank(p4, rng.normal(size=(2, 2, 4, 9)))
    f = random_field(rng)
    err = groupconv_equivariance_error(bank, p4, p4[1], f, 32, mode="discrete")
    # outputs carry 1/h^4 factors (~1e8 here), so compare against their scale
    feats = lifted_features(_default_lift_beta(2), p4, f, cell_centers(32))[None]
    scale = np.abs(correlate2d(feats, GroupConvBank(p4, bank.beta, 1 / 32).weights())).max()
    assert err < 1e-12 * scale
    with pytest.raises(ValueError):
        groupconv_equivariance_error(bank, p4, p4[1], random_field(rng), 32, mode="bogus")


@pytest.mark.parametrize("reflect", [False, True])
def test_exact_checks(reflect):
    rng = np.random.default_rng(6)
    g = make_group(4, reflect)
    assert exact_p4_check(rng.normal(size=9), reflect=reflect) < 1e-10
    assert exact_grid_check(LiftingBank(g, rng.normal(size=(2, 2, 9)))) < 1e-10
    assert exact_grid_check(GroupConvBank(g, rng.normal(size=(2, 2, len(g), 9))), reflect=reflect) < 1e-10


def test_exact_check_on_p8_grid_elements():
    bank = GroupConvBank(P8, np.random.default_rng(7).normal(size=(1, 1, 8, 9)))
    assert exact_grid_check(bank, P8[2]) < 1e-10
    with pytest.raises(NotGridSymmetryError):
        exact_grid_check(bank, P8[1])


def test_exact_check_rejects_rectangles():
    with pytest.raises(ValueError):
        exact_p4_check(np.eye(9)[1], image=np.zeros((8, 10)))


def test_convergence_report():
    rep = convergence_study(P8, P8[1], (32, 64, 128), seed=0, draws=2)
    assert len(rep.errors) == 2 and len(rep.orders) == 2
    assert 1.7 <= rep.min_order <= 2.3
    assert all(3.0 <= r <= 5.3 for draw in rep.ratios for r in draw)
    assert "order" in rep.table()
    assert json.loads(json.dumps(rep.to_json()))["element"] == "r1"
    with pytest.raises(ValueError):
        convergence_study(P8, P8[1], (32, 64, 128), draws=1, kind="nope")
