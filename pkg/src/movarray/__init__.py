"""Performance analysis of movable antenna arrays over correlated Rayleigh channels."""

from .analytic import (
    BoundResult,
    LcrContext,
    SigmaEigen,
    build_lcr_context,
    ccdf_two_point_scalar,
    cdf_lower_bound_correlated,
    cdf_lower_bound_uncorrelated,
    cdf_snr_fixed_correlated,
    cdf_snr_fixed_uncorrelated,
    g_eigenvalues,
    joint_cf,
    lcr_correlated,
    lcr_uncorrelated,
    partial_fraction_coeffs,
    sigma_eigen,
)
from .correlation import (
    ArrayGeometry,
    ChannelParams,
    CorrelationSet,
    build_b_matrix,
    build_sigma,
    correlation_set,
    cross_covariance,
    grid_covariance,
    pair_distance,
    spatial_corr,
)
from .numerics import (
    ConvergenceError,
    DomainError,
    QuadratureSpec,
    bessel_j0,
    bessel_j1,
    general_complex_eig,
    hermitian_eig,
    integrate_real_line,
    psd_sqrt,
    regularized_lower_gamma,
)
from .simulate import (
    EmpiricalStats,
    FieldRealization,
    SimConfig,
    count_upcrossings,
    empirical_lcr,
    empirical_sup_cdf,
    factorize_grid,
    factorize_grid_covariance,
    mc_joint_cf,
    mc_sdot_variance,
    sample_field,
    simulate_stats,
)

__version__ = "0.1.0"
