"""Belief roadmap planning with covariance-steering edge controllers in a
spatially correlated disturbance field."""

from .beliefs import GaussianBelief
from .config import ExperimentConfig, load_config
from .field import FieldConfig, FieldModel, build_wind_field
from .lifting import BlockModel, LtiModel, build_triple_integrator, lift
from .roadmap import RoadmapTree, build_baseline, build_revise
from .steering import EdgeController, solve_min_coverage_edge, solve_robust_edge

__all__ = [
    "GaussianBelief",
    "ExperimentConfig",
    "load_config",
    "FieldConfig",
    "FieldModel",
    "build_wind_field",
    "BlockModel",
    "LtiModel",
    "build_triple_integrator",
    "lift",
    "RoadmapTree",
    "build_baseline",
    "build_revise",
    "EdgeController",
    "solve_min_coverage_edge",
    "solve_robust_edge",
]

__version__ = "0.1.0"
