"""Benchmark harness: environment generation, experiment configs, and the command line."""

from .envs import (
    CheckerboardEnv,
    CubbyTask,
    EnvGenError,
    gaussian_mixture_sampler,
    gen_checkerboard,
    gen_cubby_arm_task,
    gen_rooms_points,
)
from .config import ConfigError, ExperimentConfig

__all__ = [
    "CheckerboardEnv",
    "CubbyTask",
    "EnvGenError",
    "ConfigError",
    "ExperimentConfig",
    "gaussian_mixture_sampler",
    "gen_checkerboard",
    "gen_cubby_arm_task",
    "gen_rooms_points",
]
