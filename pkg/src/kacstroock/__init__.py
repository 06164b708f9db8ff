"""Kac-Stroock approximations of Gaussian processes driven by one Poisson path.

The package builds the strong approximation

    Y_eps(t) = (2 / eps) * int_0^inf f(t, s) cos(theta * N(2 s / eps^2)) ds

(and its sine twin) for square-integrable Volterra kernels f, then layers
Monte Carlo machinery on top: deterministic kernel families (fractional
Brownian motion's Volterra kernel, the Lei-Nualart kernel, tabulated
kernels), closed-form covariance targets, an adaptive quadrature oracle
for independent cross-checks, and a reproducible ensemble engine with a
command-line front end.
"""

from .errors import (
    BudgetExceededError,
    DegenerateSampleError,
    InvalidArgumentError,
    InvalidCombinationError,
    KacStroockError,
    OracleConvergenceError,
    OutOfHorizonError,
    SingularPointError,
    UnsupportedParameterError,
)
from .kernels import (
    CovModel,
    Fbm,
    FbmVolterra,
    KernelSpec,
    LeiNualart,
    LeiNualartX,
    SubFbm,
    Tabulated,
    ThetaReport,
    cov,
    cov_matrix,
    d_H,
    decomposition_constant,
    fbm_kernel,
    kernel_domain_end,
    kernel_value,
    lei_nualart_kernel,
    tabulated_value,
    validate_theta,
)
from .poisson import (
    PoissonPath,
    count_at,
    jump_blocks,
    segment_iter,
    simulate,
    stream_segments,
)
from .transform import (
    ApproxParams,
    PathValues,
    subfbm_combine,
    transform,
    truncation_radius_for,
)
from .oracle import (
    QuadResult,
    cross_inner_product,
    increment_norm_sq,
    integrate,
    kernel_inner_product,
)
from .ensemble import (
    ConvergenceReport,
    ConvergenceRow,
    EnsembleConfig,
    EnsembleStats,
    convergence_study,
    normality_stat,
    raw_values,
    run,
)

__version__ = "0.1.0"

__all__ = [
    "KacStroockError",
    "InvalidArgumentError",
    "UnsupportedParameterError",
    "InvalidCombinationError",
    "OutOfHorizonError",
    "SingularPointError",
    "BudgetExceededError",
    "DegenerateSampleError",
    "OracleConvergenceError",
    "FbmVolterra",
    "LeiNualart",
    "Tabulated",
    "KernelSpec",
    "Fbm",
    "SubFbm",
    "LeiNualartX",
    "CovModel",
    "ThetaReport",
    "d_H",
    "decomposition_constant",
    "fbm_kernel",
    "lei_nualart_kernel",
    "tabulated_value",
    "kernel_value",
    "kernel_domain_end",
    "cov",
    "cov_matrix",
    "validate_theta",
    "PoissonPath",
    "simulate",
    "count_at",
    "segment_iter",
    "stream_segments",
    "jump_blocks",
    "ApproxParams",
    "PathValues",
    "transform",
    "subfbm_combine",
    "truncation_radius_for",
    "QuadResult",
    "integrate",
    "kernel_inner_product",
    "cross_inner_product",
    "increment_norm_sq",
    "EnsembleConfig",
    "EnsembleStats",
    "ConvergenceRow",
    "ConvergenceReport",
    "run",
    "raw_values",
    "normality_stat",
    "convergence_study",
    "__version__",
]
