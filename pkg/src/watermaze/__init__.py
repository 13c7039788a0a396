"""Transformer deep Q-network agent for a simulated circular water maze."""

from .env import Action, EnvConfig, WaterMaze
from .model import ModelConfig, QTransformer
from .dqn import TrainConfig, run_training

__all__ = ["Action", "EnvConfig", "ModelConfig", "QTransformer", "TrainConfig", "WaterMaze", "run_training"]
