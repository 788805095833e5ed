"""Weighted least squares with samples drawn from inverse Christoffel functions."""

from .algorithms import (
    HierarchicalSampleState,
    LevelSchedule,
    OfflineResult,
    algorithm1_offline,
    algorithm2_multilevel,
    algorithm3_hierarchical,
    empirical_M,
    total_degree_dims,
)
from .bounds import (
    GAMMA,
    ball_boundary_k,
    bound_B,
    c_delta,
    comparison_framing,
    eta,
    hierarchical_budget,
    online_budget,
    pointwise_bound_2d,
    sufficient_M,
)
from .christoffel import (
    ChristoffelEvaluator,
    SamplingMeasure,
    estimate_alpha,
    estimate_sup,
    evaluate_k,
    integral_check,
    sample_measure,
)
from .geometry import Domain, builtin, custom_domain, distance_to_boundary_pieces, exact_moment, sample_uniform
from .least_squares import (
    FitResult,
    SyntheticTarget,
    WeightedSample,
    estimate_conditioned,
    estimate_truncated,
    exact_l2_error,
    fit,
    fit_with_redraw,
    gramian,
)
from .polyspace import (
    DiscreteInnerProduct,
    OrthonormalBasis,
    PolynomialSpace,
    evaluate_basis,
    evaluate_monomials,
    orthonormalize_discrete,
    orthonormalize_exact,
    space_dimension,
)

__version__ = "0.1.0"
