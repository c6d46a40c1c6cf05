"""Belief-propagation SLAM with multipath range measurements.

Modules
-------
geometry  floor plans, virtual anchors, trajectories
models    motion, feature dynamics and sensor models
bp_da     iterative data association
engine    particle-based filter
phd       undetected-feature intensity
metrics   RMSE and OSPA
sim       synthetic measurements
cli       experiment runner
"""

from ._kernels import BACKEND
from .bp_da import DaInputs, DaOutputs, da_iterate, exact_da_marginals
from .engine import BPSLAMFilter, FilterDivergence, FilterParams, StepReport
from .geometry import AnchorMap, FloorPlan, WallSegment, build_anchor_map, mirror_across_segment
from .metrics import OspaParams, mospa, ospa, rmse
from .sim import MeasurementFrame, Scenario, generate_frame, generate_run, scenario_from_config

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "DaInputs", "DaOutputs", "da_iterate", "exact_da_marginals",
    "BPSLAMFilter", "FilterDivergence", "FilterParams", "StepReport",
    "AnchorMap", "FloorPlan", "WallSegment", "build_anchor_map", "mirror_across_segment",
    "OspaParams", "mospa", "ospa", "rmse",
    "MeasurementFrame", "Scenario", "generate_frame", "generate_run", "scenario_from_config",
]
