"""Numerical verification of Pestov-type energy identities on frame bundles."""

from .errors import (
    ConfigError,
    DataError,
    DegenerateInputError,
    DomainError,
    PestovLabError,
    PreconditionError,
    UnsupportedModelError,
    UnsupportedOrderError,
)
from .frame_bundle import FramePoint, b_theta_flow, frame_flow, vertical_flow
from .jets import ScalarField, Standard, Vertical, derive
from .manifold import (
    MetricModel,
    ModelKind,
    flat_torus,
    hyperbolic_ball,
    make_model,
    perturbed_hyperbolic,
    round_sphere,
)
from .measure import integrate, sample_liouville
from .operators import StructuralKind, TestFunctionFamily, structural_residual
from .pestov import (
    IdentityCheck,
    InvarianceClass,
    associated_pestov_residual,
    global_pestov_residual,
    pointwise_pestov_residual,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DegenerateInputError",
    "DomainError",
    "PestovLabError",
    "PreconditionError",
    "UnsupportedModelError",
    "UnsupportedOrderError",
    "FramePoint",
    "b_theta_flow",
    "frame_flow",
    "vertical_flow",
    "ScalarField",
    "Standard",
    "Vertical",
    "derive",
    "MetricModel",
    "ModelKind",
    "flat_torus",
    "hyperbolic_ball",
    "make_model",
    "perturbed_hyperbolic",
    "round_sphere",
    "integrate",
    "sample_liouville",
    "StructuralKind",
    "TestFunctionFamily",
    "structural_residual",
    "IdentityCheck",
    "InvarianceClass",
    "associated_pestov_residual",
    "global_pestov_residual",
    "pointwise_pestov_residual",
]
