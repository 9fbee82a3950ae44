"""Multi-level transmit-power policies for a cognitive-radio secondary user.

The library optimizes how a secondary transmitter maps its sensed energy
to one of M transmit-power levels, subject to average transmit-power and
average interference budgets, and validates every analytic quantity with
an independent Monte Carlo simulator.
"""

__version__ = "0.1.0"

from .allocation import DualState, UnboundedError, closed_form_power, solve_dual, subgradient
from .montecarlo import SimConfig, SimResult, level_frequencies_check, simulate
from .optimizer import (
    PowerPolicy,
    SolveReport,
    baseline_binary,
    baseline_osa,
    baseline_underlay,
    evaluate_rate,
    lloyd_solve,
    solve,
    solve_strategy,
    sweep,
)
from .partition import (
    DistortionParams,
    Partition,
    crossing_point,
    design_partition,
    distortion,
    verify_farthest_neighbor,
)
from .scenario import (
    ConfigError,
    Scenario,
    SensingConfig,
    sample_count,
    scenario_from_config,
)
from .statistics import (
    EnergyDistribution,
    detection_threshold,
    interval_probs,
    log_likelihood_ratio,
    log_pdf,
    reg_lower_gamma,
)

__all__ = [
    "__version__",
    "ConfigError",
    "Scenario",
    "SensingConfig",
    "scenario_from_config",
    "sample_count",
    "EnergyDistribution",
    "log_pdf",
    "reg_lower_gamma",
    "interval_probs",
    "log_likelihood_ratio",
    "detection_threshold",
    "Partition",
    "DistortionParams",
    "distortion",
    "crossing_point",
    "design_partition",
    "verify_farthest_neighbor",
    "DualState",
    "UnboundedError",
    "closed_form_power",
    "subgradient",
    "solve_dual",
    "PowerPolicy",
    "SolveReport",
    "evaluate_rate",
    "lloyd_solve",
    "solve",
    "solve_strategy",
    "baseline_underlay",
    "baseline_osa",
    "baseline_binary",
    "sweep",
    "SimConfig",
    "SimResult",
    "simulate",
    "level_frequencies_check",
]
