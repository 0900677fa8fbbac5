"""Limiting spectra of random inner-product kernel matrices.

Theory side: the cubic Stieltjes-transform equation with parameters
(a, nu, gamma), its explicit real-axis density, and the semicircle and
Marcenko-Pastur degenerations.  Empirical side: reproducible seeded
ensembles of actual kernel matrices and quantitative comparison metrics.
"""

__version__ = "0.1.0"

from .kernels import (
    KernelDescriptor,
    KernelSpecError,
    LimitConstants,
    adapted_hermite_kernel,
    center,
    check_conditions,
    custom_kernel,
    hermite_unit_kernel,
    kernel_eval,
    limit_constants,
    linear_kernel,
    parse_kernel_spec,
    power_even_kernel,
    power_odd_kernel,
    rescaled_f,
    series_kernel,
    sign_kernel,
)
from .limitlaw import (
    CubicUniquenessError,
    CurveRejectionError,
    DegenerateDispatchError,
    DensityCurve,
    ModelParams,
    default_grid,
    density_curve,
    density_explicit,
    density_linear_kernel,
    density_mp,
    density_semicircle,
    solve_m,
    support_intervals,
)
from .ensemble import (
    EnsembleConfig,
    ResourceLimitError,
    SpectrumSample,
    build_kernel_matrix,
    eigenvalues,
    empirical_stieltjes,
    esd_histogram,
    sample_vectors,
    spectrum_sample,
)
from .polybasis import (
    DegenerateMomentsError,
    MomentSequence,
    PolynomialCoeffs,
    QuadratureConvergenceError,
    QuadratureRule,
    eval_poly,
    expansion_coefficients,
    gauss_hermite_rule,
    gaussian_inner_moments,
    hermite_orthonormal,
    jl_dimension,
    orthonormal_from_moments,
    sphere_inner_moments,
    unit_gaussian_moments,
)
from .verify import (
    ComparisonReport,
    cdf_sup_distance,
    compare,
    concentration_sweep,
    hist_l1,
    norm_growth_sweep,
    stieltjes_point_check,
)

__all__ = [name for name in dir() if not name.startswith("_")]
