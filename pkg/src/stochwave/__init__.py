"""Numerical laboratory for stochastic bistable travelling waves."""

from .analysis import ScalingReport, WeightedNormKit, scaling_study, spectral_gap
from .config import ConfigError, ExperimentConfig, load_config
from .dynamics import ModelParams, PathState, PathTrajectory, run_path, run_paths
from .grid import SpatialGrid
from .noise import NoiseModel, PathSeed, build_noise
from .reaction import ReactionFunction, check_assumptions, nagumo
from .wave_profile import WaveProfile, nagumo_profile, shift_profile, solve_profile_bvp

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ExperimentConfig", "ModelParams", "NoiseModel", "PathSeed", "PathState",
    "PathTrajectory", "ReactionFunction", "ScalingReport", "SpatialGrid", "WaveProfile",
    "WeightedNormKit", "build_noise", "check_assumptions", "load_config", "nagumo",
    "nagumo_profile", "run_path", "run_paths", "scaling_study", "shift_profile",
    "solve_profile_bvp", "spectral_gap",
]
