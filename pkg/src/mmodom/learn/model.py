"""End-to-end network: parameter layout, initialisation and forward pass."""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, NamedTuple

import numpy as np
import torch

from ..encoders import IMU_CHANNELS, LstmParams, imu_encode, visual_encode
from ..errors import ConfigError, NumericalError
from ..fusion import (
    CROSS_SOURCES,
    MODALITIES,
    MaskNet,
    ModalityFeatures,
    fuse,
    fuse_baseline,
)
from ..head import PoseHeadParams, PoseWeights, pose_regress, temporal_step, weighted_mse
from ..radar import build_delta_matrix, radar_encode, softmax_match

FUSION_MODES = ("two_stage", "baseline", "raw_cross")
# name -> tensor, ordered as param_shapes()
ParameterSet = Dict[str, torch.Tensor]


@dataclass(frozen=True)
class ModelConfig:
    n_keypoints: int = 64
    desc_dim: int = 16
    image_size: tuple[int, int] = (32, 32)
    f_radar: int = 64
    f_visual: int = 64
    f_imu: int = 64
    hidden: int = 128
    fusion_mode: str = "two_stage"
    temperature: float = 0.05
    wide_descriptor: bool = False
    fusion_init: str = "uniform"  # or "zeros"

    def __post_init__(self):
        object.__setattr__(self, "image_size", tuple(int(x) for x in self.image_size))
        errs = []
        for k in ("n_keypoints", "desc_dim", "f_radar", "f_visual", "f_imu", "hidden"):
            if not (isinstance(getattr(self, k), int) and getattr(self, k) >= 1):
                errs.append(f"{k} must be a positive integer")
        if len(self.image_size) != 2 or min(self.image_size) < 1:
            errs.append("image_size must be two positive integers")
        if self.fusion_mode not in FUSION_MODES:
            errs.append(f"fusion_mode must be one of {FUSION_MODES}")
        if not self.temperature > 0:
            errs.append("temperature must be > 0")
        if self.fusion_init not in ("uniform", "zeros"):
            errs.append("fusion_init must be 'uniform' or 'zeros'")
        if errs:
            raise ConfigError("model: " + "; ".join(errs))

    @property
    def delta_width(self) -> int:
        return self.desc_dim + 3 if self.wide_descriptor else 4

    @property
    def feature_sizes(self) -> dict[str, int]:
        return {"I": self.f_imu, "M": self.f_radar, "V": self.f_visual}

    @property
    def fused_size(self) -> int:
        return self.f_imu + self.f_radar + self.f_visual


def _lstm_shapes(prefix, n_in, n_hidden):
    return [(f"{prefix}.weight", (4 * n_hidden, n_in + n_hidden)), (f"{prefix}.bias", (4 * n_hidden,))]


def _fc_shapes(prefix, n_in, n_out):
    return [(f"{prefix}.weight", (n_out, n_in)), (f"{prefix}.bias", (n_out,))]


def _mask_shapes(prefix, n_in, n_out):
    # hidden width equals the target feature length
    return _fc_shapes(f"{prefix}.fc1", n_in, n_out) + _fc_shapes(f"{prefix}.fc2", n_out, n_out)


def param_shapes(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Stable, ordered (name, shape) layout of every trainable tensor."""
    fs = cfg.feature_sizes
    h, w = cfg.image_size
    shapes = []
    shapes += _fc_shapes("radar.fc", cfg.n_keypoints * cfg.delta_width, cfg.f_radar)
    shapes += _fc_shapes("visual.fc", h * w, cfg.f_visual)
    shapes += _lstm_shapes("imu_lstm", IMU_CHANNELS, cfg.f_imu)
    if cfg.fusion_mode == "baseline":
        for k in MODALITIES:
            shapes += _mask_shapes(f"fusion.soft_{k}", cfg.fused_size, fs[k])
    else:
        for k in MODALITIES:
            shapes += _mask_shapes(f"fusion.self_{k}", fs[k], fs[k])
        for k in MODALITIES:
            n_in = sum(fs[s] for s in CROSS_SOURCES[k])
            shapes += _mask_shapes(f"fusion.cross_{k}", n_in, fs[k])
    shapes += _lstm_shapes("core_lstm", cfg.fused_size, cfg.hidden)
    shapes += _fc_shapes("pose.fc1", cfg.hidden, cfg.hidden)
    shapes += _fc_shapes("pose.fc2", cfg.hidden, 6)
    return shapes


def param_count(cfg: ModelConfig) -> int:
    return sum(math.prod(s) for _, s in param_shapes(cfg))


def init_params(cfg: ModelConfig, rng: np.random.Generator, dtype=torch.float64):
    """Uniform(+-1/sqrt(fan_in)) everywhere, LSTM forget-gate biases at 1.

    With ``fusion_init="zeros"`` the fusion FC layers start at zero, so every
    mask starts at exactly 0.5.
    """
    params = OrderedDict()
    for name, shape in param_shapes(cfg):
        if name.endswith("bias"):
            fan_in = dict(param_shapes(cfg))[name[: -len("bias")] + "weight"][1]
        else:
            fan_in = shape[1]
        bound = 1.0 / math.sqrt(fan_in)
        vals = rng.uniform(-bound, bound, size=shape)
        if name.startswith("fusion.") and cfg.fusion_init == "zeros":
            vals = np.zeros(shape)
        if name.endswith("lstm.bias"):
            hid = shape[0] // 4
            vals[hid : 2 * hid] = 1.0
        params[name] = torch.tensor(vals, dtype=dtype)
    return params


def zeros_like_params(params):
    return OrderedDict((k, torch.zeros_like(v)) for k, v in params.items())


def lstm_view(params, prefix) -> LstmParams:
    return LstmParams(params[f"{prefix}.weight"], params[f"{prefix}.bias"])


def mask_view(params, prefix) -> MaskNet:
    return MaskNet(
        params[f"{prefix}.fc1.weight"],
        params[f"{prefix}.fc1.bias"],
        params[f"{prefix}.fc2.weight"],
        params[f"{prefix}.fc2.bias"],
    )


def fusion_view(params, cfg: ModelConfig) -> dict[str, MaskNet]:
    keys = ("soft",) if cfg.fusion_mode == "baseline" else ("self", "cross")
    return {f"{s}_{k}": mask_view(params, f"fusion.{s}_{k}") for s in keys for k in MODALITIES}


def head_view(params) -> PoseHeadParams:
    return PoseHeadParams(
        params["pose.fc1.weight"], params["pose.fc1.bias"], params["pose.fc2.weight"], params["pose.fc2.bias"]
    )


class FrameBatch(NamedTuple):
    """Frame tensors with leading dims ``(S, T)``: S parallel sequences of T
    consecutive estimation frames."""

    keypoints0: torch.Tensor
    keypoints1: torch.Tensor
    imu: torch.Tensor
    image0: torch.Tensor
    image1: torch.Tensor
    gt: torch.Tensor

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], dtype=torch.float64) -> "FrameBatch":
        """From ``Scene.stack()``-style arrays of shape ``(T, ...)`` or ``(S, T, ...)``."""
        vals = []
        for k in ("keypoints0", "keypoints1", "imu", "image0", "image1", "gt_rel_pose"):
            a = torch.as_tensor(np.asarray(arrays[k]), dtype=dtype)
            vals.append(a)
        if vals[-1].ndim == 2:
            vals = [v.unsqueeze(0) for v in vals]
        return cls(*vals)

    def slice(self, start: int, stop: int) -> "FrameBatch":
        return FrameBatch(*(v[:, start:stop] for v in self))

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.gt.shape[:2])

    def validate(self, cfg: ModelConfig):
        S, T = self.shape
        n, d = cfg.n_keypoints, cfg.desc_dim
        want = {
            "keypoints0": (S, T, n, 3 + d),
            "keypoints1": (S, T, n, 3 + d),
            "imu": (S, T, 48, IMU_CHANNELS),
            "image0": (S, T, *cfg.image_size),
            "image1": (S, T, *cfg.image_size),
            "gt": (S, T, 6),
        }
        for k, shape in want.items():
            got = tuple(getattr(self, k).shape)
            if got != shape:
                raise ValueError(f"batch field {k} has shape {got}, model expects {shape}")


def _finite(stage: str, x: torch.Tensor, check: bool = True):
    if check and not torch.isfinite(x).all():
        raise NumericalError(f"non-finite values after stage '{stage}'", stage=stage)


def encode(params, batch: FrameBatch, cfg: ModelConfig, check: bool = True) -> ModalityFeatures:
    match = softmax_match(batch.keypoints0, batch.keypoints1, cfg.temperature)
    delta = build_delta_matrix(batch.keypoints0, batch.keypoints1, match, cfg.wide_descriptor)
    z_m = radar_encode(delta, params["radar.fc.weight"], params["radar.fc.bias"])
    _finite("radar", z_m, check)
    z_v = visual_encode(batch.image0, batch.image1, params["visual.fc.weight"], params["visual.fc.bias"])
    _finite("visual", z_v, check)
    z_i = imu_encode(batch.imu, lstm_view(params, "imu_lstm"))
    _finite("imu", z_i, check)
    return ModalityFeatures(z_m, z_v, z_i)


def fuse_features(params, feats: ModalityFeatures, cfg: ModelConfig, check: bool = True):
    fp = fusion_view(params, cfg)
    if cfg.fusion_mode == "baseline":
        fused, masks = fuse_baseline(feats, fp)
    else:
        fused, masks = fuse(feats, fp, "raw" if cfg.fusion_mode == "raw_cross" else "masked")
    _finite("fusion", fused, check)
    return fused, masks


@dataclass
class ForwardResult:
    preds: torch.Tensor  # (S, T, 6)
    frame_losses: torch.Tensor  # (S, T)
    loss: torch.Tensor  # scalar mean
    state: tuple[torch.Tensor, torch.Tensor]
    masks: dict[str, torch.Tensor] = field(repr=False, default_factory=dict)


def forward(
    params,
    batch: FrameBatch,
    cfg: ModelConfig,
    weights: PoseWeights,
    state=None,
    horizon: int | None = None,
    frame_offset: int = 0,
    check: bool = True,
) -> ForwardResult:
    """Run the network over ``batch`` with temporal state carried along T.

    ``state`` is the core-LSTM ``(h, c)`` entering the first frame (zeros if
    None). With ``horizon`` set, the state is detached from the graph whenever
    ``frame_offset + t`` is a multiple of ``horizon`` (truncated BPTT).
    The returned autograd graph is the recorded tape for :func:`backward`.
    ``check=False`` skips shape validation and the per-stage finiteness
    checks (needed under ``torch.func.vmap``).
    """
    if check:
        batch.validate(cfg)
    S, T = batch.shape
    feats = encode(params, batch, cfg, check)
    fused, masks = fuse_features(params, feats, cfg, check)
    core = lstm_view(params, "core_lstm")
    dtype = batch.gt.dtype
    if state is None:
        state = (torch.zeros(S, cfg.hidden, dtype=dtype), torch.zeros(S, cfg.hidden, dtype=dtype))
    hs = []
    for t in range(T):
        if horizon and t > 0 and (frame_offset + t) % horizon == 0:
            state = (state[0].detach(), state[1].detach())
        state, h = temporal_step(fused[:, t], state, core)
        hs.append(h)
    hs = torch.stack(hs, dim=1)
    _finite("temporal", hs, check)
    preds = pose_regress(hs, head_view(params))
    _finite("pose", preds, check)
    frame_losses = weighted_mse(preds, batch.gt, weights)
    loss = frame_losses.mean()
    _finite("loss", loss, check)
    return ForwardResult(preds, frame_losses, loss, state, masks)


def backward(loss: torch.Tensor, params) -> "OrderedDict[str, torch.Tensor]":
    """Gradients of ``loss`` for every parameter (zeros where unused)."""
    names = list(params)
    tensors = [params[k] for k in names]
    grads = torch.autograd.grad(loss, tensors, allow_unused=True)
    return OrderedDict(
        (k, torch.zeros_like(t) if g is None else g) for k, t, g in zip(names, tensors, grads)
    )


def require_grad(params):
    return OrderedDict((k, v.detach().clone().requires_grad_(True)) for k, v in params.items())
