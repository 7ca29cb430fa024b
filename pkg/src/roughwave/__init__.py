"""roughwave: simulation and verification workbench for a renormalized cubic
stochastic wave equation on the two-dimensional torus with rough spectral
forcing.

The package is organised around seven areas:

- ``lattice``:   truncated frequency lattices, dyadic scales, Littlewood-Paley
                 projectors (sharp shells and a smooth plateau family).
- ``noise``:     counter-based sampling of the driving complex Brownian family
                 and exact per-step convolution increments.
- ``fields``:    spectral fields and time series of them, dealiased products.
- ``symbols``:   the renormalization variance curve, the linear stochastic
                 field, Wick powers, the wave Duhamel integrator, and the
                 derived polynomial symbol library.
- ``norms``:     Sobolev / Besov / dispersive space-time norms, dyadic
                 profiles, regularity-slope fits, admissibility predicates,
                 trilinear ratio probes, and an operator-norm power iteration.
- ``solver``:    exact-linear-flow splitting integrator for the renormalized
                 equation and Picard iteration for remainder expansions.
- ``counting``:  exact lattice counting / weighted sums for a family of
                 phase-constrained frequency estimates, pairing enumeration,
                 oscillatory sum probes, and tensor unfolding norms.
- ``cli``:       a command line front end, binary field-series storage, CSV
                 report writers, and run manifests.
"""

from .lattice import (
    TruncatedLattice,
    DyadicScale,
    enumerate_ball,
    jbracket,
    lp_project,
    lp_weights,
    smooth_cutoff,
    j_max,
)
from .fields import SpectralField, FieldSeries, GridPlan, product_grid, five_smooth
from .noise import (
    TimeGrid,
    NoisePath,
    sample_noise_path,
    convolution_covariance,
    convolution_cholesky,
    exact_convolution_increment,
)
from .symbols import (
    ensemble_profile,
    sigma_curve,
    linear_variance,
    linear_evolution,
    wick_square,
    wick_cube,
    duhamel,
    build_symbol_set,
    WickSymbolSet,
    SYMBOL_NAMES,
)
from .norms import (
    hs_norm,
    besov_inf_norm,
    dyadic_profile,
    fit_profile,
    DyadicProfile,
    RegressionFit,
    regularity_slope,
    ensemble_slope,
    target_regularity,
    tilde_target_regularity,
    is_wave_admissible,
    XsbParams,
    xsb_norm,
    trilinear_ratio,
    operator_norm_J2,
)
from .solver import (
    SolverConfig,
    StateU,
    SolveResult,
    propagate_linear,
    step_renormalized,
    solve,
    solve_remainder,
    picard_report,
)
from .counting import (
    BoundVerification,
    BudgetExceededError,
    CaseSpec,
    CountingReport,
    Pairing,
    SineCancellationReport,
    phase_value,
    exact_count,
    weighted_sum,
    verify_bound,
    enumerate_pairings,
    sine_cancellation_sum,
    tensor_unfold_norms,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
