"""Simulation and post-processing of multi-branch optical fiber frequency links."""

__version__ = "0.1.0"

from .series import (  # noqa: E402
    FreqSeries,
    Histogram,
    ValidityMask,
    histogram,
    mask_and,
    rolling_mean,
    rolling_std,
    summary_stats,
)
from .stability import StabilityCurve, adev, mdev, sinusoid_fm_adev, tau_grid  # noqa: E402
from .noise import (  # noqa: E402
    NoiseSpec,
    ThermalModel,
    compose,
    gen_power_law,
    inject_cycle_slips,
    inject_gaps,
    realize,
    thermal_phase_series,
)
from .postproc import (  # noqa: E402
    SelectionConfig,
    UncertaintyBudget,
    apply_correction,
    coarse_filter,
    combine_budget,
    three_observable_select,
    uptime,
    uptime_product,
)
from .link import (  # noqa: E402
    FrequencyPlan,
    LinkTopology,
    RepeaterStation,
    Span,
    TwoWayMonitor,
    check_plan,
    desync_error,
    loss_budget,
    residual_floor,
    rf_reference_contribution,
    simulate_end_to_end,
    two_way_correction,
    uncompensated_thermal_limit,
)
