"""Linear three-pendulum walking: gaits, step-to-step stabilization and push-recovery simulation."""

from .augment import (
    ActuatorModel,
    LiftConfig,
    SeaComp,
    actuator_step,
    adaptive_lift,
    fixed_lift,
    foot_pitch_comp,
    hip_blend,
    pelvis_roll,
    sea_knee_comp,
)
from .filters import (
    ErrorFilterBank,
    IirFilter,
    VelocityEstimator,
    calibrate_thresholds,
    dead_zone,
    iir_step,
    velocity_step,
)
from .gait import PeriodicGait, gait_residual, nominal, solve_periodic
from .model import (
    SEL,
    ContinuousDynamics,
    ModelParams,
    SelectorMatrices,
    Transition,
    build_continuous_dynamics,
    evolve,
    swap_support,
    transition,
)
from .sim import (
    Metrics,
    PushEvent,
    Scenario,
    SensorModel,
    Trace,
    detect_recovery,
    run_scenario,
    sweep,
)
from .stabilizer import (
    Controller,
    DlqrGain,
    ErrorDynamics,
    GainTable,
    build_error_dynamics,
    export_gain_table,
    footstep_adjustment,
    solve_constrained_dlqr,
    time_project,
)

__all__ = [
    "ActuatorModel",
    "LiftConfig",
    "SeaComp",
    "actuator_step",
    "adaptive_lift",
    "fixed_lift",
    "foot_pitch_comp",
    "hip_blend",
    "pelvis_roll",
    "sea_knee_comp",
    "ErrorFilterBank",
    "IirFilter",
    "VelocityEstimator",
    "calibrate_thresholds",
    "dead_zone",
    "iir_step",
    "velocity_step",
    "PeriodicGait",
    "gait_residual",
    "nominal",
    "solve_periodic",
    "SEL",
    "ContinuousDynamics",
    "ModelParams",
    "SelectorMatrices",
    "Transition",
    "build_continuous_dynamics",
    "evolve",
    "swap_support",
    "transition",
    "Metrics",
    "PushEvent",
    "Scenario",
    "SensorModel",
    "Trace",
    "detect_recovery",
    "run_scenario",
    "sweep",
    "Controller",
    "DlqrGain",
    "ErrorDynamics",
    "GainTable",
    "build_error_dynamics",
    "export_gain_table",
    "footstep_adjustment",
    "solve_constrained_dlqr",
    "time_project",
]
