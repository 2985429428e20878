"""Numerical verification of gradient Ricci soliton geometry."""

from .bivector import (
    BivectorBasis,
    CurvatureOperator,
    curvature_operator,
    kulkarni_nomizu,
    random_algebraic_curvature,
    sharp_via_B,
    sharp_via_structure_constants,
    weyl_decompose,
)
from .chart import (
    Chart,
    MetricFamily,
    TensorField,
    christoffel,
    covariant_derivative,
    curvature_field,
    curvature_suite,
    f_laplacian,
    hessian_and_gradient,
    second_covariant_derivative,
)
from .diagnostics import (
    ClassificationResult,
    classify,
    constant_scal_diagnostics,
    k_quadratic_form,
    kernel_parallelism_check,
    phi_diagnostic,
    phi_from_eigenvalues,
    second_eigenvalue_check,
    spectral_diagnostics,
)
from .errors import *  # noqa: F401,F403
from .grid import ResidualReport, SampleGrid
from .labels import ModelClass
from .local import LocalGeometry
from .models import (
    CATALOG,
    SolitonInstance,
    WarpedProductSpec,
    build_model,
    build_warped_product,
    detect_warped_product,
    f_volume_estimate,
    list_models,
    perturb_potential,
    surface_soliton_residual,
)
from .verify import (
    verify_elliptic_equations,
    verify_pointwise_identities,
    verify_sharp_trace_consistency,
)

__all__ = [
    "BivectorBasis",
    "CATALOG",
    "Chart",
    "ClassificationResult",
    "ContractViolation",
    "CurvatureOperator",
    "DegenerateMetricError",
    "DomainError",
    "GeometryError",
    "HypothesisViolated",
    "InvalidWarpError",
    "LocalGeometry",
    "MetricFamily",
    "ModelClass",
    "NotApplicable",
    "ParameterError",
    "ResidualReport",
    "SampleGrid",
    "SolitonInstance",
    "SolitonResidualFailed",
    "TensorField",
    "UnknownModelError",
    "UnsupportedDimensionError",
    "WarpedProductSpec",
    "build_model",
    "build_warped_product",
    "christoffel",
    "classify",
    "constant_scal_diagnostics",
    "covariant_derivative",
    "curvature_field",
    "curvature_operator",
    "curvature_suite",
    "detect_warped_product",
    "f_laplacian",
    "f_volume_estimate",
    "hessian_and_gradient",
    "k_quadratic_form",
    "kernel_parallelism_check",
    "kulkarni_nomizu",
    "list_models",
    "perturb_potential",
    "phi_diagnostic",
    "phi_from_eigenvalues",
    "random_algebraic_curvature",
    "second_covariant_derivative",
    "second_eigenvalue_check",
    "sharp_via_B",
    "sharp_via_structure_constants",
    "spectral_diagnostics",
    "surface_soliton_residual",
    "verify_elliptic_equations",
    "verify_pointwise_identities",
    "verify_sharp_trace_consistency",
    "weyl_decompose",
]
