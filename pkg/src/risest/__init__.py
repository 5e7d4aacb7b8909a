"""Joint sparse estimation of sensing and communication channels behind a
grouped reconfigurable intelligent surface, with an LS baseline and a seeded
Monte Carlo NMSE benchmark harness."""

from .grouping import (
    GroupingMap,
    ReflectionPattern,
    build_grouping_matrix,
    build_reflection_pattern,
    despread,
    group_image,
)
from .channel_model import (
    ClusterParams,
    ChannelPair,
    MeasurementSet,
    raised_cosine,
    upa_steering,
    gen_geometric_channel,
    gen_sparse_isac_channels,
    qpsk_pilots,
    build_measurement_operators,
    synth_observation,
)
from .estimator import (
    EstimatorConfig,
    EstimatorState,
    EstimateResult,
    EstimatorError,
    soft_threshold,
    update_h,
    update_beta,
    update_gs_gmc,
    update_gamma,
    objective_value,
    estimate,
)
from .baselines_metrics import OpCounter, ls_estimate, nmse, count_report
from .cli import (
    FixedParams,
    SweepConfig,
    SweepConfigError,
    auto_blocks,
    run_sweep,
    emit_csv,
)

__version__ = "0.1.0"

__all__ = [
    "GroupingMap", "ReflectionPattern", "build_grouping_matrix",
    "build_reflection_pattern", "despread", "group_image",
    "ClusterParams", "ChannelPair", "MeasurementSet", "raised_cosine",
    "upa_steering", "gen_geometric_channel", "gen_sparse_isac_channels",
    "qpsk_pilots", "build_measurement_operators", "synth_observation",
    "EstimatorConfig", "EstimatorState", "EstimateResult", "EstimatorError",
    "soft_threshold", "update_h", "update_beta", "update_gs_gmc",
    "update_gamma", "objective_value", "estimate",
    "OpCounter", "ls_estimate", "nmse", "count_report",
    "FixedParams", "SweepConfig", "SweepConfigError", "auto_blocks",
    "run_sweep", "emit_csv",
]
