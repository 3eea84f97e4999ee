"""Radar branch: soft keypoint matching, the per-keypoint delta matrix and its
FC projection.

Keypoint frames are packed as float arrays of shape ``(..., N, 3 + D)`` with
columns ``[x, y, score, desc_0 .. desc_{D-1}]``. All tensor functions accept
arbitrary leading batch dimensions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import torch

DESC_NORM_TOL = 1e-6


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    score: float
    descriptor: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.descriptor, dtype=np.float64)
        object.__setattr__(self, "descriptor", d)
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        if abs(np.linalg.norm(d) - 1.0) > DESC_NORM_TOL:
            raise ValueError("descriptor must have unit L2 norm")


@dataclass(frozen=True)
class KeypointFrame:
    """Fixed-size keypoint set of one radar scan.

    ``data`` is ``(N, 3 + D)``; padding rows (zero score, zero descriptor at
    the origin) are allowed and are the only rows exempt from the unit-norm
    descriptor rule.
    """

    data: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 2 or d.shape[1] < 4:
            raise ValueError(f"keypoint array must be (N, 3+D), got {d.shape}")
        object.__setattr__(self, "data", d)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def xy(self) -> np.ndarray:
        return self.data[:, :2]

    @property
    def scores(self) -> np.ndarray:
        return self.data[:, 2]

    @property
    def descriptors(self) -> np.ndarray:
        return self.data[:, 3:]

    def keypoints(self) -> list[Keypoint]:
        return [Keypoint(r[0], r[1], r[2], r[3:]) for r in self.data if r[2] > 0 or np.any(r[3:])]

    @classmethod
    def from_keypoints(cls, kps: list[Keypoint], n: int, timestamp: float = 0.0) -> "KeypointFrame":
        dim = len(kps[0].descriptor) if kps else 0
        rows = np.array([[k.x, k.y, k.score, *k.descriptor] for k in kps]).reshape(len(kps), 3 + dim)
        return cls(pad_or_truncate(rows, n), timestamp)


def pad_or_truncate(rows: np.ndarray, n: int) -> np.ndarray:
    """Keep the ``n`` highest-score rows (stable), zero-padding when short."""
    rows = np.asarray(rows, dtype=np.float64)
    order = np.argsort(-rows[:, 2], kind="stable")[:n]
    out = np.zeros((n, rows.shape[1]))
    out[: len(order)] = rows[order]
    return out


class Match(NamedTuple):
    weights: torch.Tensor  # (..., N, N) rows over frame_b
    location: torch.Tensor  # (..., N, 2)
    descriptor: torch.Tensor  # (..., N, D), unit length


def _as_tensor(frame) -> torch.Tensor:
    if isinstance(frame, KeypointFrame):
        return torch.from_numpy(frame.data)
    if isinstance(frame, np.ndarray):
        return torch.from_numpy(frame)
    return frame


def softmax_match(frame_a, frame_b, temperature: float) -> Match:
    """Soft-associate each keypoint of ``frame_a`` with ``frame_b``.

    Weights are ``softmax_j(<desc_a_i, desc_b_j> / temperature)``; the match
    is the weighted mean location and the re-normalised weighted descriptor.
    """
    if not temperature > 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    a, b = _as_tensor(frame_a), _as_tensor(frame_b)
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    desc_a, desc_b = a[..., 3:], b[..., 3:]
    logits = desc_a @ desc_b.transpose(-1, -2) / temperature
    w = torch.softmax(logits, dim=-1)
    loc = w @ b[..., :2]
    md = w @ desc_b
    md = md / md.norm(dim=-1, keepdim=True).clamp_min(1e-12)
    return Match(w, loc, md)


def safe_atan2(y: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    """atan2 in (-pi, pi] with value and gradient 0 at the origin."""
    origin = (x == 0) & (y == 0)
    xs = torch.where(origin, torch.ones_like(x), x)
    th = torch.where(origin, torch.zeros_like(x), torch.atan2(y, xs))
    return torch.where(th <= -math.pi, th + 2 * math.pi, th)


def build_delta_matrix(frame_a, frame_b, match: Match, wide_descriptor: bool = False) -> torch.Tensor:
    """Rows ``(ddesc, dx, dy, dtheta)`` per keypoint of ``frame_a``.

    ``ddesc`` is ``1 - cos`` between the keypoint descriptor and its matched
    descriptor. With ``wide_descriptor`` the full difference vector replaces it
    and rows become ``D + 3`` wide.
    """
    a = _as_tensor(frame_a)
    if match.location.shape[:-1] != a.shape[:-1]:
        raise ValueError("match rows are not aligned with frame_a")
    disp = match.location - a[..., :2]
    dx, dy = disp[..., 0], disp[..., 1]
    dth = safe_atan2(dy, dx)
    desc_a = a[..., 3:]
    if wide_descriptor:
        ddesc = match.descriptor - desc_a
    else:
        ddesc = (1.0 - (desc_a * match.descriptor).sum(-1)).unsqueeze(-1)
    return torch.cat([ddesc, dx.unsqueeze(-1), dy.unsqueeze(-1), dth.unsqueeze(-1)], dim=-1)


def radar_encode(delta: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    """``z_M = W @ flatten(delta) + b`` with row-major flattening (row i contiguous)."""
    flat = delta.reshape(*delta.shape[:-2], -1)
    if weight.ndim != 2 or weight.shape[1] != flat.shape[-1] or bias.shape != (weight.shape[0],):
        raise ValueError(
            f"radar FC expects weight (F, {flat.shape[-1]}) and bias (F,), "
            f"got {tuple(weight.shape)} / {tuple(bias.shape)}"
        )
    return flat @ weight.T + bias
