"""Rotation/reflection-equivariant convolutions synthesized from partial differential operators."""
from .group2d import Group2D, GroupElement, inverse, make_group, parse_group, product
from .pdo import PdoPolynomial, analytic_apply, canonical_poly, transform_poly
from .stencils import Stencil, apply_stencil, estimate_order, stencil_for
from .kernels import GroupConvBank, LiftingBank, basis_matrix, init_beta, synthesize_kernel

__version__ = "0.1.0"
