"""Planar Gaussian integrators on a grid.

A numerical library and CLI for processes of the form
``x(t) = ((A 1_[0,t], xi_1), (A 1_[0,t], xi_2))`` with A a linear operator on
the discretized L2([0,1]): Gram-determinant integrands and their
regularizations, smoothed self-intersection functionals with exact Gaussian
moments, kernel-induced singularity analysis, and mean-square convergence
diagnostics.
"""

__version__ = "0.1.0"

from .errors import (
    ConditionsViolated,
    ConfigError,
    DegenerateDifference,
    DegenerateInterval,
    DependentIncrements,
    EmptySimplex,
    FactorizationFailure,
    InvalidSpec,
    KernelIndicator,
    NonpositiveEps,
    NotAKernelIndicator,
    SingularGram,
    SingularOperator,
    SiltError,
    UnsupportedSpec,
)
from .grid import (
    GridContext,
    GridFunction,
    OrthonormalFrame,
    ProfileSpec,
    complement_gram_identity_residual,
    distance_to_span,
    gram_det,
    gram_lower_bound_margin,
    gram_matrix,
    make_indicator,
    orthonormalize,
    projection_norm_sq,
    subset_projection_terms,
)
from .operators import (
    KernelSplit,
    OperatorMatrix,
    OperatorSpec,
    build_operator,
    declared_kernel_split,
    kernel_indicators,
)
from .process import PathSample, covariance, increment_gram, sample_paths
from .silt import (
    MomentTable,
    SimplexPoint,
    approx_silt,
    cauchy_diagnostic,
    expected_silt,
    gaussian_kernel,
    rosen_center,
    second_moment,
)
from .fwt import (
    FwtProbe,
    QuadratureReport,
    fwt_integrand,
    lemma2_weak_convergence_scan,
    lemma3_ratio_scan,
    regularized_fwt_quadrature,
    regularized_integrand_thm1,
    theorem3_integral,
    thm2_integrand,
)
from .config import ExperimentConfig, load_config, save_config
