"""Centered temporal-difference policy evaluation with linear features.

Learners that subtract a running estimate of the mean TD error (CTD, CTDC)
alongside their uncentered baselines (TD, TDC) and the tabular centering
rules (SRC, VRC); exact analytic fixpoints for finite MDPs; the three
standard benchmark chains; and a deterministic experiment harness.
"""

from .envs import (
    EnvironmentSpec,
    RngStream,
    baird_seven,
    boyan_chain,
    get_environment,
    sample_step,
    two_state,
    two_state_default,
)
from .errors import ConfigError, ModelError, StationaryDistributionError
from .harness import (
    AggregateCurve,
    ExperimentConfig,
    MetricTrace,
    SweepResult,
    aggregate,
    run_many,
    run_one,
    sweep,
)
from .learners import (
    LearnerState,
    StepSizes,
    TransitionSample,
    ctd_step,
    ctdc_step,
    linear_state,
    schedule_validate,
    src_step,
    tabular_state,
    td_step,
    tdc_step,
    vrc_step,
)
from .mdp import (
    AnalyticSystem,
    DistributionVector,
    FeatureMap,
    MdpModel,
    analytic_system,
    bellman_apply,
    center,
    centered_bellman_residual,
    fixpoint_solve,
    lemma_two_state,
    rmscbe,
    stationary_distribution,
)

__version__ = "0.1.0"

__all__ = [
    "AggregateCurve",
    "AnalyticSystem",
    "ConfigError",
    "DistributionVector",
    "EnvironmentSpec",
    "ExperimentConfig",
    "FeatureMap",
    "LearnerState",
    "MdpModel",
    "MetricTrace",
    "ModelError",
    "RngStream",
    "StationaryDistributionError",
    "StepSizes",
    "SweepResult",
    "TransitionSample",
    "aggregate",
    "analytic_system",
    "baird_seven",
    "bellman_apply",
    "boyan_chain",
    "center",
    "centered_bellman_residual",
    "ctd_step",
    "ctdc_step",
    "fixpoint_solve",
    "get_environment",
    "lemma_two_state",
    "linear_state",
    "rmscbe",
    "run_many",
    "run_one",
    "sample_step",
    "schedule_validate",
    "src_step",
    "stationary_distribution",
    "sweep",
    "tabular_state",
    "td_step",
    "tdc_step",
    "two_state",
    "two_state_default",
    "vrc_step",
]
