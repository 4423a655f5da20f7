"""Equivariance measurements against closed-form references.

Test fields are Gaussian mixtures, so rotating the input never needs
resampling: the rotated field is again a mixture.  Rotations act about the
centre of the unit square, which maps the n x n cell-centre grid onto itself
for 90-degree multiples.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import AnalyticField, random_field
from .group2d import Group2D, GroupElement, inverse, is_grid_symmetry, product
from .kernels import GroupConvBank, LiftingBank, synthesize_kernel
from .pdo import PdoPolynomial, analytic_apply, canonical_poly, transform_poly
from .stencils import BORDER, cell_centers, correlate2d, crop, fit_order
from .tensor_ops.conv import correlate2d as batched_correlate
from .tensor_ops.functional import act_on_features

CENTER = np.array([0.5, 0.5])
DEFAULT_RESOLUTIONS = (32, 64, 128, 256)


class NotGridSymmetryError(ValueError):
    pass


def sample_field(f, n: int) -> np.ndarray:
    """Samples at the n x n cell centres of the unit square (h = 1/n)."""
    return f(cell_centers(n))


def rotate_field(f: AnalyticField, At: GroupElement, about=(0.0, 0.0)) -> AnalyticField:
    """The field x -> f(At^-1 (x - about) + about), exact."""
    return f.rotate(At.matrix(), about)


def _pullback_points(pts: np.ndarray, At: GroupElement, about=CENTER) -> np.ndarray:
    Ainv = At.matrix().T
    return (pts - about) @ Ainv.T + about


def continuous_identity_error(beta, A: GroupElement, At: GroupElement, f: AnalyticField, x) -> float:
    """|chi^(A)[f o At^-1](x) - chi^(At^-1 A)[f](At^-1 x)|, max over points x."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    p = canonical_poly(beta)
    lhs = analytic_apply(transform_poly(p, A), rotate_field(f, At), x)
    rhs = analytic_apply(transform_poly(p, product(inverse(At), A)), f, x @ At.matrix())
    return float(np.max(np.abs(lhs - rhs)))


def lifting_equivariance_error(beta, group: Group2D, At: GroupElement, f: AnalyticField, n: int,
                               border: int = BORDER) -> float:
    """Max interior gap between the discrete lifting layer on the rotated
    image and the exact rotated continuous response, over all A in the group."""
    if At not in group:
        raise ValueError(f"{At.label} is not in {group.spec}")
    h = 1.0 / n
    pts = cell_centers(n)
    image = sample_field(rotate_field(f, At, CENTER), n)
    back = _pullback_points(pts, At)
    p = canonical_poly(beta)
    At_inv = inverse(At)
    derivs = _Derivatives(f, back)
    err = 0.0
    for A in group:
        disc = correlate2d(image, synthesize_kernel(beta, A, h).mask, "zero")
        ref = derivs.apply(transform_poly(p, product(At_inv, A)).coeffs)
        err = max(err, float(np.max(np.abs(crop(disc - ref, border)))))
    return err


class _Derivatives:
    """Memoized partial derivatives of one field at fixed points."""

    def __init__(self, f, x):
        self.f, self.x, self.memo = f, x, {}

    def __call__(self, a: int, b: int) -> np.ndarray:
        if (a, b) not in self.memo:
            self.memo[(a, b)] = self.f.derivative(a, b, self.x)
        return self.memo[(a, b)]

    def apply(self, coeffs: dict) -> np.ndarray:
        total = np.zeros(self.x.shape[:-1])
        for (a, b), c in coeffs.items():
            total = total + c * self(a, b)
        return total


def _compose(p1: PdoPolynomial, p2: PdoPolynomial, into: dict | None = None) -> dict:
    """Coefficients of the operator p1 o p2 (degree up to 8), accumulated into ``into``."""
    out = {} if into is None else into
    for (a1, b1), c1 in p1.coeffs.items():
        for (a2, b2), c2 in p2.coeffs.items():
            key = (a1 + a2, b1 + b2)
            out[key] = out.get(key, 0.0) + c1 * c2
    return out


def _compose_apply(p1: PdoPolynomial, p2: PdoPolynomial, f: AnalyticField, x) -> np.ndarray:
    """Apply the operator p1 o p2 to f exactly."""
    return _Derivatives(f, np.asarray(x, dtype=float)).apply(_compose(p1, p2))


def lifted_features(lift_beta: np.ndarray, group: Group2D, f: AnalyticField, pts) -> np.ndarray:
    """Exact continuous features e(x, (f_in, B)) = chi_{f_in}^(B)[f](x), shape (in*|S|, ...)."""
    derivs = _Derivatives(f, np.asarray(pts, dtype=float))
    out = []
    for b in lift_beta:
        p = canonical_poly(b)
        for B in group:
            out.append(derivs.apply(transform_poly(p, B).coeffs))
    return np.stack(out)


def _default_lift_beta(in_ch: int) -> np.ndarray:
    return np.random.default_rng(12345).normal(size=(in_ch, 9))


def groupconv_equivariance_error(bank: GroupConvBank, group: Group2D, At: GroupElement, f: AnalyticField,
                                 n: int, lift_beta=None, mode: str = "analytic",
                                 border: int = BORDER) -> float:
    """Equivariance gap of a group-convolution layer at resolution n.

    The input features are the exact continuous responses of a lifting
    operator (``lift_beta``, one 9-vector per input feature) to ``f``.

    ``mode="analytic"``: left side is the discrete layer on exactly sampled
    rotated features; right side is the exact continuous output pulled back
    by At with channel index At^-1 A.  ``mode="discrete"``: both sides are
    discrete, with the grid action (At must be a 90-degree multiple).
    """
    if At not in group:
        raise ValueError(f"{At.label} is not in {group.spec}")
    g = len(group)
    lift_beta = _default_lift_beta(bank.in_channels) if lift_beta is None else np.atleast_2d(lift_beta)
    pts = cell_centers(n)
    h = 1.0 / n
    bank = GroupConvBank(group, np.asarray(bank.beta, float), h)
    w = bank.weights()
    if mode == "discrete":
        feats = lifted_features(lift_beta, group, f, pts)[None]
        out = batched_correlate(feats, w)
        rotated_in = act_on_features(feats, group, At, g)
        lhs = batched_correlate(rotated_in, w)
        rhs = act_on_features(out, group, At, g)
        return float(np.max(np.abs(crop(lhs - rhs, border))))
    if mode != "analytic":
        raise ValueError(f"unknown mode {mode!r}")
    rotated = rotate_field(f, At, CENTER)
    feats = lifted_features(lift_beta, group, rotated, pts)[None]
    lhs = batched_correlate(feats, w)[0]
    back = _pullback_points(pts, At)
    At_inv = inverse(At)
    derivs = _Derivatives(f, back)
    lift_polys = [canonical_poly(b) for b in lift_beta]
    err = 0.0
    for fo in range(bank.out_channels):
        for ai, A in enumerate(group):
            C = product(At_inv, A)
            coeffs = {}
            for fi, p0 in enumerate(lift_polys):
                for ki, k in enumerate(group):
                    pk = transform_poly(canonical_poly(bank.beta[fo, fi, ki]), C)
                    _compose(pk, transform_poly(p0, product(C, k)), coeffs)
            ref = derivs.apply(coeffs)
            err = max(err, float(np.max(np.abs(crop(lhs[fo * g + ai] - ref, border)))))
    return err


def exact_grid_check(bank, element: GroupElement | None = None, reflect: bool = False,
                     image=None, n: int = 32, seed: int = 0, border: int = BORDER) -> float:
    """Array-level equivariance error under exact grid symmetries.

    ``bank`` is a LiftingBank, GroupConvBank or a bare 9-vector (wrapped as a
    single-slot p4/p4m lifting bank).  With ``element`` omitted, every
    90-degree rotation (and flip when ``reflect``) in the group is checked.
    """
    if not isinstance(bank, (LiftingBank, GroupConvBank)):
        beta = np.asarray(bank, dtype=float).reshape(1, 1, 9)
        from .group2d import make_group
        bank = LiftingBank(make_group(4, reflect), beta)
    group = bank.group
    if element is not None:
        if not is_grid_symmetry(element):
            raise NotGridSymmetryError(f"{element.label} in {group.spec} is not a symmetry of the square grid")
        elements = [element]
    else:
        elements = [g for g in group if is_grid_symmetry(g) and (reflect or not g.reflected)]
    rng = np.random.default_rng(seed)
    lifting = isinstance(bank, LiftingBank)
    arity_in = 1 if lifting else len(group)
    if image is None:
        image = rng.normal(size=(1, bank.in_channels * arity_in, n, n))
    image = np.asarray(image, dtype=float)
    if image.ndim == 2:
        image = image[None, None]
    if image.shape[-1] != image.shape[-2]:
        raise ValueError("exact grid check needs a square image")
    w = bank.weights()
    base = batched_correlate(image, w)
    err = 0.0
    for el in elements:
        lhs = batched_correlate(act_on_features(image, group, el, arity_in), w)
        rhs = act_on_features(base, group, el, len(group))
        err = max(err, float(np.max(np.abs(crop(lhs - rhs, border)))))
    return err


def exact_p4_check(beta_or_bank, reflect: bool = False, element: GroupElement | None = None, **kw) -> float:
    return exact_grid_check(beta_or_bank, element, reflect, **kw)


@dataclass
class EquivarianceReport:
    group: str
    element: str
    kind: str
    resolutions: list
    errors: list  # one list per draw, aligned with resolutions
    orders: list = field(default_factory=list)
    residuals: list = field(default_factory=list)

    @property
    def max_errors(self) -> list:
        return [max(col) for col in zip(*self.errors)]

    @property
    def ratios(self) -> list:
        """error(n)/error(2n) per draw."""
        return [[e[i] / e[i + 1] if e[i + 1] > 0 else float("inf") for i in range(len(e) - 1)] for e in self.errors]

    @property
    def min_order(self) -> float:
        return min(self.orders) if self.orders else float("nan")

    def table(self) -> str:
        head = f"{self.kind} equivariance, group {self.group}, element {self.element}"
        lines = [head, "draw  " + "  ".join(f"n={n:<9d}" for n in self.resolutions) + "  order   fit-resid"]
        for d, (errs, order, res) in enumerate(zip(self.errors, self.orders, self.residuals)):
            lines.append(f"{d:<5d} " + "  ".join(f"{e:11.4e}" for e in errs) + f"  {order:6.3f}  {res:9.2e}")
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {
            "group": self.group, "element": self.element, "kind": self.kind,
            "resolutions": list(self.resolutions), "errors": self.errors,
            "ratios": self.ratios, "orders": self.orders, "fit_residuals": self.residuals,
        }


def _fit(resolutions, errors):
    hs = np.array([1.0 / n for n in resolutions])
    order = fit_order(hs, errors)
    if not np.isfinite(order):
        return order, 0.0
    coef = np.polyfit(np.log(hs), np.log(errors), 1)
    resid = float(np.sqrt(np.mean((np.polyval(coef, np.log(hs)) - np.log(errors)) ** 2)))
    return order, resid


def convergence_study(group: Group2D, element: GroupElement, resolutions=DEFAULT_RESOLUTIONS,
                      seed: int = 0, draws: int = 5, kind: str = "lifting",
                      in_ch: int = 1, out_ch: int = 1) -> EquivarianceReport:
    """Equivariance error against resolution for random (beta, field) draws."""
    rng = np.random.default_rng(seed)
    report = EquivarianceReport(group.spec, element.label, kind, list(resolutions), [])
    for _ in range(draws):
        f = random_field(rng)
        if kind == "lifting":
            beta = rng.normal(size=9)
            errs = [lifting_equivariance_error(beta, group, element, f, n) for n in resolutions]
        elif kind == "groupconv":
            bank = GroupConvBank(group, rng.normal(size=(out_ch, in_ch, len(group), 9)))
            lift = rng.normal(size=(in_ch, 9))
            errs = [groupconv_equivariance_error(bank, group, element, f, n, lift) for n in resolutions]
        else:
            raise ValueError(f"unknown kind {kind!r}")
        order, resid = _fit(resolutions, errs)
        report.errors.append(errs)
        report.orders.append(order)
        report.residuals.append(resid)
    return report
