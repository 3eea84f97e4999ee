"""Inertial (LSTM) and visual (difference-image + FC) encoders."""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

IMU_SAMPLES = 48
IMU_CHANNELS = 6
LEAKY_SLOPE = 0.01


def leaky_relu(x: torch.Tensor) -> torch.Tensor:
    return F.leaky_relu(x, LEAKY_SLOPE)


@dataclass(frozen=True)
class LstmParams:
    """Packed gate weights, rows ordered input, forget, cell, output.

    ``weight`` is ``(4H, input + H)`` acting on ``[x, h_prev]``.
    """

    weight: torch.Tensor
    bias: torch.Tensor

    @property
    def hidden(self) -> int:
        return self.weight.shape[0] // 4

    @property
    def input(self) -> int:
        return self.weight.shape[1] - self.hidden

    def __post_init__(self):
        w, b = self.weight, self.bias
        if w.ndim != 2 or w.shape[0] % 4 or w.shape[1] <= w.shape[0] // 4:
            raise ValueError(f"bad LSTM weight shape {tuple(w.shape)}")
        if b.shape != (w.shape[0],):
            raise ValueError(f"LSTM bias must be ({w.shape[0]},), got {tuple(b.shape)}")


def lstm_step(x, h_prev, c_prev, p: LstmParams):
    H = p.hidden
    if x.shape[-1] != p.input or h_prev.shape[-1] != H or c_prev.shape[-1] != H:
        raise ValueError(
            f"LSTM expects input {p.input} / hidden {H}, got "
            f"{x.shape[-1]} / {h_prev.shape[-1]} / {c_prev.shape[-1]}"
        )
    gates = torch.cat([x, h_prev], dim=-1) @ p.weight.T + p.bias
    i = torch.sigmoid(gates[..., :H])
    f = torch.sigmoid(gates[..., H : 2 * H])
    g = torch.tanh(gates[..., 2 * H : 3 * H])
    o = torch.sigmoid(gates[..., 3 * H :])
    c = f * c_prev + i * g
    h = o * torch.tanh(c)
    return h, c


def imu_encode(window: torch.Tensor, p: LstmParams) -> torch.Tensor:
    """Final hidden state of a zero-initialised LSTM run over the 48 samples."""
    if window.shape[-2:] != (IMU_SAMPLES, IMU_CHANNELS):
        raise ValueError(f"IMU window must be (..., 48, 6), got {tuple(window.shape)}")
    batch = window.shape[:-2]
    h = window.new_zeros(*batch, p.hidden)
    c = window.new_zeros(*batch, p.hidden)
    for t in range(IMU_SAMPLES):
        h, c = lstm_step(window[..., t, :], h, c, p)
    return h


def visual_encode(img0: torch.Tensor, img1: torch.Tensor, weight, bias) -> torch.Tensor:
    """Toy stand-in for an optical-flow backbone.

    ``z_V = LeakyReLU(W @ flatten(img1 - img0) + b)``.
    """
    if img0.shape != img1.shape:
        raise ValueError(f"image shapes differ: {tuple(img0.shape)} vs {tuple(img1.shape)}")
    diff = (img1 - img0).reshape(*img0.shape[:-2], -1)
    if weight.shape[1] != diff.shape[-1] or bias.shape != (weight.shape[0],):
        raise ValueError(
            f"visual FC expects weight (F, {diff.shape[-1]}), got {tuple(weight.shape)}"
        )
    return leaky_relu(diff @ weight.T + bias)
