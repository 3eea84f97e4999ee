"""Two-stage (self then cross) attention fusion and a single-stage soft-fusion
baseline.

Output segments are always concatenated in the order ``[I; M; V]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, NamedTuple

import torch

from .encoders import leaky_relu

MODALITIES = ("I", "M", "V")
# cross-stage inputs for each target modality, in concatenation order
CROSS_SOURCES = {"M": ("V", "I"), "I": ("M", "V"), "V": ("M", "I")}
SELF_KEYS = tuple(f"self_{k}" for k in MODALITIES)
CROSS_KEYS = tuple(f"cross_{k}" for k in MODALITIES)
SOFT_KEYS = tuple(f"soft_{k}" for k in MODALITIES)


class ModalityFeatures(NamedTuple):
    z_M: torch.Tensor
    z_V: torch.Tensor
    z_I: torch.Tensor

    def get(self, k: str) -> torch.Tensor:
        return getattr(self, f"z_{k}")


@dataclass(frozen=True)
class MaskNet:
    """Two FC layers: ``sigmoid(fc2(leaky(fc1(x))))``."""

    w1: torch.Tensor
    b1: torch.Tensor
    w2: torch.Tensor
    b2: torch.Tensor

    def __call__(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.w1.shape[1]:
            raise ValueError(f"mask net expects input {self.w1.shape[1]}, got {x.shape[-1]}")
        if self.w2.shape[1] != self.w1.shape[0]:
            raise ValueError("mask net layer shapes are inconsistent")
        return torch.sigmoid(leaky_relu(x @ self.w1.T + self.b1) @ self.w2.T + self.b2)


FusionParams = Mapping[str, MaskNet]


def self_mask(z: torch.Tensor, net: MaskNet) -> torch.Tensor:
    a = net(z)
    if a.shape != z.shape:
        raise ValueError(f"self mask shape {tuple(a.shape)} != feature shape {tuple(z.shape)}")
    return a


def apply_self(z: torch.Tensor, a: torch.Tensor) -> torch.Tensor:
    if z.shape != a.shape:
        raise ValueError(f"mask shape {tuple(a.shape)} != feature shape {tuple(z.shape)}")
    return a * z


def cross_mask(other1: torch.Tensor, other2: torch.Tensor, net: MaskNet) -> torch.Tensor:
    return net(torch.cat([other1, other2], dim=-1))


def fuse(
    m: ModalityFeatures, params: FusionParams, cross_input: str = "masked"
) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
    """Self stage, cross stage, concatenation.

    ``cross_input="masked"`` feeds the self-stage outputs to the cross masks;
    ``"raw"`` feeds the unmasked encoder features instead.
    Returns the fused vector and all six masks keyed ``self_X`` / ``cross_X``.
    """
    if cross_input not in ("masked", "raw"):
        raise ValueError(f"cross_input must be 'masked' or 'raw', got {cross_input!r}")
    masks: dict[str, torch.Tensor] = {}
    tilde = {}
    for k in MODALITIES:
        a = self_mask(m.get(k), params[f"self_{k}"])
        masks[f"self_{k}"] = a
        tilde[k] = apply_self(m.get(k), a)
    src = tilde if cross_input == "masked" else {k: m.get(k) for k in MODALITIES}
    out = []
    for k in MODALITIES:
        s1, s2 = CROSS_SOURCES[k]
        a = cross_mask(src[s1], src[s2], params[f"cross_{k}"])
        if a.shape != tilde[k].shape:
            raise ValueError(f"cross mask for {k} has shape {tuple(a.shape)}")
        masks[f"cross_{k}"] = a
        out.append(a * tilde[k])
    return torch.cat(out, dim=-1), masks


def fuse_baseline(
    m: ModalityFeatures, params: FusionParams
) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
    """Single-stage soft fusion: one sigmoid mask per modality from ``[I; M; V]``."""
    cat = torch.cat([m.get(k) for k in MODALITIES], dim=-1)
    masks = {}
    out = []
    for k in MODALITIES:
        a = params[f"soft_{k}"](cat)
        z = m.get(k)
        masks[f"soft_{k}"] = a
        out.append(apply_self(z, a))
    return torch.cat(out, dim=-1), masks


def effective_mask(masks: dict[str, torch.Tensor], k: str) -> torch.Tensor:
    """Total gate applied to modality ``k``'s raw features."""
    if f"soft_{k}" in masks:
        return masks[f"soft_{k}"]
    return masks[f"self_{k}"] * masks[f"cross_{k}"]
