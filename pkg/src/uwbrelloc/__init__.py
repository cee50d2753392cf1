"""Relative localization for robot teams from UWB ranges and odometry."""

from .config import ScenarioConfig, load_config
from .io import emit_dataset, ingest_dataset
from .metrics import MetricsReport, compute_metrics
from .particle_filter import FilterParams, MultiRobotTracker
from .pipeline import ESTIMATORS, PipelineParams, PipelineResult, run_pipeline
from .ranging import NodeLayout, RangeNoiseModel, RangeSet, synthesize_range_set
from .se2 import IDENTITY, OdometryDelta, Pose2D, compose, inverse, normalize_angle, relative_pose
from .simulator import Dataset, Scenario, preset, run_scenario
from .solver import PoseEstimate, SolverConfig, solve_relative_pose
from .window import SlidingWindowOptimizer, WindowConfig

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "ESTIMATORS",
    "IDENTITY",
    "FilterParams",
    "MetricsReport",
    "MultiRobotTracker",
    "NodeLayout",
    "OdometryDelta",
    "PipelineParams",
    "PipelineResult",
    "Pose2D",
    "PoseEstimate",
    "RangeNoiseModel",
    "RangeSet",
    "Scenario",
    "ScenarioConfig",
    "SlidingWindowOptimizer",
    "SolverConfig",
    "WindowConfig",
    "compose",
    "compute_metrics",
    "emit_dataset",
    "ingest_dataset",
    "inverse",
    "load_config",
    "normalize_angle",
    "preset",
    "relative_pose",
    "run_pipeline",
    "run_scenario",
    "solve_relative_pose",
    "synthesize_range_set",
]
