"""Planar cooperative launcher/jumper environment with curriculum MAPPO training."""

from .curriculum import CurriculumConfig, CurriculumState
from .env import CoJumpEnv, EnvConfig
from .marl.mappo import MAPPO
from .train import RunConfig, TrainConfig, Trainer, train

__version__ = "0.1.0"

__all__ = [
    "CoJumpEnv", "CurriculumConfig", "CurriculumState", "EnvConfig", "MAPPO", "RunConfig", "TrainConfig",
    "Trainer", "train",
]
