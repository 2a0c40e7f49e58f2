"""Pseudo-spectral periodic Navier-Stokes solver with Sobolev-Gevrey norm diagnostics."""

__version__ = "0.1.0"

from .spectral import (  # noqa: E402
    GridMismatchError,
    GridSpec,
    PhysicalField,
    SpectralField,
    dealias,
    divergence_max,
    leray_project,
    nonlinear_term,
    pointwise_product,
    random_field,
    single_mode,
    taylor_green,
    to_physical,
    to_spectral,
)
from .norms import (  # noqa: E402
    EmpiricalConstantReport,
    GevreyOverflowError,
    GevreyParams,
    ParameterDomainError,
    analyticity_radius,
    check_bilinear_estimate,
    check_product_law,
    gevrey_norm,
    gevrey_series,
    interpolation_check,
    run_sweep,
    sobolev_norm,
    sup_in_time_norm,
)
from .mild import (  # noqa: E402
    MildTrajectory,
    PicardReport,
    duhamel_integral,
    heat_propagate,
    local_existence_time,
    picard_solve,
)
from .integrator import (  # noqa: E402
    CFLViolation,
    IntegratorConfig,
    NonFiniteState,
    TrajectoryRecord,
    energy_balance_residual,
    simulate,
    step,
)
from .experiments import (  # noqa: E402
    BlowupMonitor,
    DecayFit,
    StabilityLedger,
    estimate_analyticity_radius,
    fit_power_law,
    run_blowup_monitor,
    run_decay_study,
    run_radius_study,
    run_stability_study,
)
