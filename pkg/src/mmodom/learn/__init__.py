"""Differentiable pipeline, Adam, training loop and checkpoints."""
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .model import FrameBatch, ModelConfig, backward, forward, init_params, param_shapes
from .optim import AdamState, adam_step
from .train import TrainConfig, TrainResult, train, untrained_checkpoint

__all__ = [
    "AdamState",
    "Checkpoint",
    "FrameBatch",
    "ModelConfig",
    "TrainConfig",
    "TrainResult",
    "adam_step",
    "backward",
    "forward",
    "init_params",
    "load_checkpoint",
    "param_shapes",
    "save_checkpoint",
    "train",
    "untrained_checkpoint",
]
