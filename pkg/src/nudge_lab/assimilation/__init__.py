"""Nudging data assimilation: admissibility conditions, time steppers,
observation streams, and the twin/determining experiment drivers."""

from .conditions import (
    H0_VARIANTS,
    ConditionReport,
    MuInterval,
    check_condition,
    compute_Kh,
    compute_Mh,
    decay_rate_alpha,
    h0_variant,
    mu_range,
    mu_range_weakened,
    temperature_bound_Sp,
    weakened_Mh,
)
from .experiments import (
    DeterminingResult,
    NudgingConfig,
    PerturbationSpec,
    ReferenceResult,
    SyncResult,
    run_determining_experiment,
    run_reference,
    run_stream_assimilation,
    run_sync_experiment,
)
from .stepping import (
    NudgedState,
    NudgedStepper,
    ReferenceStepper,
    step_nudged,
    step_reference,
)
from .streams import ObservationStream

__all__ = [
    "H0_VARIANTS",
    "ConditionReport",
    "MuInterval",
    "check_condition",
    "compute_Kh",
    "compute_Mh",
    "decay_rate_alpha",
    "h0_variant",
    "mu_range",
    "mu_range_weakened",
    "temperature_bound_Sp",
    "weakened_Mh",
    "DeterminingResult",
    "NudgingConfig",
    "PerturbationSpec",
    "ReferenceResult",
    "SyncResult",
    "run_determining_experiment",
    "run_reference",
    "run_stream_assimilation",
    "run_sync_experiment",
    "NudgedState",
    "NudgedStepper",
    "ReferenceStepper",
    "step_nudged",
    "step_reference",
    "ObservationStream",
]
