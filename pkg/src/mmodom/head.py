"""Temporal LSTM over fused features, 6-DoF pose regression and the weighted
pose loss."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from .encoders import LstmParams, leaky_relu, lstm_step
from .errors import ConfigError
from .geom import RelativePose

POSE_COMPONENTS = ("dx", "dy", "dz", "droll", "dpitch", "dyaw")
# Boreas-calibrated loss weights, in POSE_COMPONENTS order
DEFAULT_POSE_WEIGHTS = (10.34, 0.33, 56.09, 178.05, 227.27, 39.05)


@dataclass(frozen=True)
class PoseWeights:
    weights: tuple[float, ...] = DEFAULT_POSE_WEIGHTS
    lam: float = 1.0

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        object.__setattr__(self, "weights", w)
        if len(w) != 6:
            raise ConfigError(f"need 6 pose weights, got {len(w)}")
        if not all(np.isfinite(x) and x > 0 for x in w):
            raise ConfigError(f"pose weights must be positive and finite, got {w}")
        if not self.lam >= 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")

    def tensor(self, dtype=torch.float64) -> torch.Tensor:
        return torch.tensor(self.weights, dtype=dtype)


@dataclass(frozen=True)
class PoseHeadParams:
    w1: torch.Tensor
    b1: torch.Tensor
    w2: torch.Tensor
    b2: torch.Tensor


def temporal_step(fused: torch.Tensor, state, p: LstmParams):
    """Advance the core LSTM one estimation frame. ``state`` is ``(h, c)``."""
    h, c = lstm_step(fused, state[0], state[1], p)
    return (h, c), h


def zero_state(p: LstmParams, batch: tuple[int, ...] = (), dtype=torch.float64):
    return (torch.zeros(*batch, p.hidden, dtype=dtype), torch.zeros(*batch, p.hidden, dtype=dtype))


def pose_regress(h: torch.Tensor, p: PoseHeadParams) -> torch.Tensor:
    """``fc2(leaky(fc1(h)))`` -> ``(..., 6)`` as (dx, dy, dz, droll, dpitch, dyaw)."""
    if h.shape[-1] != p.w1.shape[1] or p.w2.shape != (6, p.w1.shape[0]):
        raise ValueError(
            f"pose head expects input {p.w1.shape[1]} and output 6, "
            f"got input {h.shape[-1]}, fc2 {tuple(p.w2.shape)}"
        )
    return leaky_relu(h @ p.w1.T + p.b1) @ p.w2.T + p.b2


def compute_pose_weights(
    means: Sequence[float], stds: Sequence[float], lam: float = 1.0
) -> PoseWeights:
    """``w_i = 1 / (|mean_i| + lam * std_i)`` per pose component."""
    denom = np.abs(np.asarray(means, dtype=np.float64)) + lam * np.asarray(stds, dtype=np.float64)
    bad = [POSE_COMPONENTS[i] for i in np.flatnonzero(~(denom > 0))]
    if bad:
        raise ConfigError(
            f"pose weight denominator is zero for {bad}; the component is constant zero in the "
            "data, set explicit weights or a floor value"
        )
    return PoseWeights(tuple(1.0 / denom), lam)


def pose_weights_from_data(poses: np.ndarray, lam: float = 1.0) -> PoseWeights:
    poses = np.asarray(poses, dtype=np.float64).reshape(-1, 6)
    return compute_pose_weights(poses.mean(0), poses.std(0), lam)


def weighted_mse(pred, truth, w: PoseWeights):
    """``sum_i w_i (pred_i - truth_i)^2`` over the last axis.

    Works on RelativePose objects (returns a float) or on ``(..., 6)`` tensors.
    """
    if isinstance(pred, RelativePose) or isinstance(truth, RelativePose):
        d = pred.as_array() - truth.as_array()
        return float(np.dot(np.asarray(w.weights), d * d))
    d = pred - truth
    return (d * d * w.tensor(d.dtype)).sum(-1)
