"""axcgra: co-design toolkit for approximate CGRAs.

Models a heterogeneous reconfigurable fabric with DRUM-k approximate
multipliers, scores INT8 CNN output channels by the error their
approximation introduces, binds channels to accurate or approximate units
under a quality quantile, places and routes the workload's transfers over
a Wilton-switchbox mesh NoC, and reports timing slack, voltage-island
power, area, and GOPS/W.
"""

__version__ = "0.1.0"

from .axmul import DrumConfig, ErrorStats, build_lut, drum_mul, exhaustive_error_stats
from .qnn import MappingPlan, ModelGraph, TensorI8, forward, load_model
from .importance import compute_all, evaluate_plan, quantile_assign, rank_channels
from .fabric import FabricConfig, TileKind, build_preset
from .ppa import PpaReport, ScalingModel, assign_islands, power_report, timing_check

__all__ = [
    "DrumConfig",
    "ErrorStats",
    "FabricConfig",
    "MappingPlan",
    "ModelGraph",
    "PpaReport",
    "ScalingModel",
    "TensorI8",
    "TileKind",
    "assign_islands",
    "build_lut",
    "build_preset",
    "compute_all",
    "drum_mul",
    "evaluate_plan",
    "exhaustive_error_stats",
    "forward",
    "load_model",
    "power_report",
    "quantile_assign",
    "rank_channels",
    "timing_check",
]
