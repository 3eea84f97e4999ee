"""Training loop with truncated BPTT, Adam and per-epoch checkpoints."""
from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from ..errors import ConfigError, DataError, NumericalError
from ..head import PoseWeights
from ..scene import Scene
from ..synthsim import rng_stream
from .checkpoint import Checkpoint, config_hash, save_checkpoint
from .model import FrameBatch, ModelConfig, backward, forward, init_params, require_grad
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)

DTYPES = {"float64": torch.float64, "float32": torch.float32}


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8
    lr: float = 1e-4
    epochs: int = 15
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    horizon: int = 8  # frames per truncated-BPTT window
    segment_frames: int = 0  # >0: cut scenes into segments with state reset; 0 = whole scenes
    precision: str = "float64"

    def __post_init__(self):
        nums = ("lr", "beta1", "beta2", "eps", "segment_frames")
        bad = [k for k in nums if isinstance(getattr(self, k), bool) or not isinstance(getattr(self, k), (int, float))]
        if bad:
            raise ConfigError(f"train: {', '.join(bad)} must be numbers")
        errs = []
        if not (isinstance(self.batch_size, int) and self.batch_size >= 1):
            errs.append("batch_size must be an integer >= 1")
        if not self.lr >= 0:
            errs.append("lr must be >= 0")
        if not (isinstance(self.epochs, int) and self.epochs >= 1):
            errs.append("epochs must be an integer >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            errs.append("need 0 <= beta1, beta2 < 1 and eps > 0")
        if not (isinstance(self.horizon, int) and self.horizon >= 1):
            errs.append("horizon must be an integer >= 1")
        if self.segment_frames < 0:
            errs.append("segment_frames must be >= 0")
        if self.precision not in DTYPES:
            errs.append(f"precision must be one of {tuple(DTYPES)}")
        if errs:
            raise ConfigError("train: " + "; ".join(errs))

    @property
    def dtype(self):
        return DTYPES[self.precision]


def run_config(model_cfg: ModelConfig, train_cfg: TrainConfig, weights: PoseWeights) -> dict:
    m = asdict(model_cfg)
    m["image_size"] = list(model_cfg.image_size)
    return {"model": m, "train": asdict(train_cfg), "pose_weights": list(weights.weights), "lambda": weights.lam}


def _hashable(cfg: dict) -> dict:
    # epochs may grow on resume
    c = {k: (dict(v) if isinstance(v, dict) else v) for k, v in cfg.items()}
    c["train"].pop("epochs", None)
    return c


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    epoch_losses: list[float]
    step_losses: list[tuple[int, int, float]]  # (epoch, step, loss)


def scene_batches(scenes: Sequence[Scene], cfg: ModelConfig, dtype) -> list[FrameBatch]:
    out = []
    for s in scenes:
        fb = FrameBatch.from_arrays(s.stack(), dtype)
        try:
            fb.validate(cfg)
        except ValueError as e:
            raise DataError(f"scene {s.name!r}: {e}") from e
        for k, v in fb._asdict().items():
            bad = (~torch.isfinite(v)).reshape(v.shape[0], v.shape[1], -1).any(-1).nonzero()
            if len(bad):
                raise DataError(f"scene {s.name!r}: non-finite {k} in frame {int(bad[0, 1])}")
        out.append(fb)
    return out


def _segments(batches: list[FrameBatch], seg: int) -> list[tuple[int, int, int]]:
    units = []
    for i, b in enumerate(batches):
        T = b.shape[1]
        step = seg if seg > 0 else T
        units += [(i, s, min(s + step, T)) for s in range(0, T, step)]
    return units


def train(
    scenes: Sequence[Scene],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    weights: PoseWeights,
    resume: Checkpoint | None = None,
    checkpoint_path: str | Path | None = None,
    on_epoch: Callable[[int, float], None] | None = None,
) -> TrainResult:
    """Train from scratch (or continue ``resume``) for ``train_cfg.epochs`` total epochs.

    Units (whole scenes, or segments of them) are visited in a per-epoch
    shuffled order. Inside a unit, frames go in consecutive chunks of
    ``batch_size``; the temporal state flows across chunks but is detached
    at chunk and horizon boundaries.
    """
    if not scenes:
        raise DataError("training needs at least one scene")
    dtype = train_cfg.dtype
    batches = scene_batches(scenes, model_cfg, dtype)
    units = _segments(batches, train_cfg.segment_frames)
    cfg_dict = run_config(model_cfg, train_cfg, weights)
    chash = config_hash(_hashable(cfg_dict))

    if resume is None:
        params = init_params(model_cfg, rng_stream(train_cfg.seed, "init"), dtype)
        moments = AdamState.zeros_like(params)
        start_epoch, epoch_losses, step_rows = 0, [], []
    else:
        if resume.config_hash != chash:
            raise ConfigError("checkpoint was produced with a different model/training configuration")
        params = OrderedDict((k, v.to(dtype)) for k, v in resume.params.items())
        moments = AdamState(
            OrderedDict((k, v.to(dtype)) for k, v in resume.moments.m.items()),
            OrderedDict((k, v.to(dtype)) for k, v in resume.moments.v.items()),
            resume.moments.t,
        )
        start_epoch = resume.epoch
        epoch_losses = list(resume.epoch_losses)
        step_rows = [tuple(r) for r in resume.step_losses]

    def snapshot(epoch: int) -> Checkpoint:
        return Checkpoint(
            OrderedDict((k, v.detach().clone()) for k, v in params.items()),
            AdamState(OrderedDict(moments.m), OrderedDict(moments.v), moments.t),
            epoch,
            chash,
            {"seed": train_cfg.seed, "next_epoch": epoch},
            cfg_dict,
            list(epoch_losses),
            [list(r) for r in step_rows],
        )

    last_good = snapshot(start_epoch)
    for epoch in range(start_epoch, train_cfg.epochs):
        order = rng_stream(train_cfg.seed, f"shuffle/{epoch}").permutation(len(units))
        losses = []
        for u in order:
            si, start, stop = units[u]
            state = None
            for b0 in range(start, stop, train_cfg.batch_size):
                chunk = batches[si].slice(b0, min(b0 + train_cfg.batch_size, stop))
                leaf = require_grad(params)
                try:
                    res = forward(
                        leaf, chunk, model_cfg, weights, state, train_cfg.horizon, frame_offset=b0 - start
                    )
                except NumericalError as e:
                    if checkpoint_path is not None:
                        save_checkpoint(last_good, checkpoint_path)
                    raise NumericalError(
                        f"epoch {epoch + 1}, scene {scenes[si].name!r} frame {b0}: {e}; "
                        f"last good checkpoint is from epoch {last_good.epoch}",
                        stage=e.stage,
                    ) from e
                grads = backward(res.loss, leaf)
                bad = [k for k, g in grads.items() if not torch.isfinite(g).all()]
                if bad:
                    if checkpoint_path is not None:
                        save_checkpoint(last_good, checkpoint_path)
                    raise NumericalError(
                        f"epoch {epoch + 1}, scene {scenes[si].name!r} frame {b0}: non-finite gradient "
                        f"for {bad[:3]}; last good checkpoint is from epoch {last_good.epoch}",
                        stage="backward",
                    )
                params, moments = adam_step(
                    params, grads, moments, moments.t + 1, train_cfg.lr,
                    train_cfg.beta1, train_cfg.beta2, train_cfg.eps,
                )
                state = (res.state[0].detach(), res.state[1].detach())
                loss = float(res.loss.detach())
                losses.append(loss)
                step_rows.append((epoch + 1, moments.t, loss))
        epoch_losses.append(float(np.mean(losses)))
        log.info("epoch %d/%d loss %.6g", epoch + 1, train_cfg.epochs, epoch_losses[-1])
        if on_epoch is not None:
            on_epoch(epoch + 1, epoch_losses[-1])
        last_good = snapshot(epoch + 1)
        if checkpoint_path is not None:
            save_checkpoint(last_good, checkpoint_path)
    return TrainResult(last_good, epoch_losses, step_rows)


def untrained_checkpoint(model_cfg: ModelConfig, train_cfg: TrainConfig, weights: PoseWeights) -> Checkpoint:
    """The epoch-0 state ``train`` would start from."""
    params = init_params(model_cfg, rng_stream(train_cfg.seed, "init"), train_cfg.dtype)
    cfg_dict = run_config(model_cfg, train_cfg, weights)
    return Checkpoint(
        params,
        AdamState.zeros_like(params),
        0,
        config_hash(_hashable(cfg_dict)),
        {"seed": train_cfg.seed, "next_epoch": 0},
        cfg_dict,
    )


def write_loss_csv(rows, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,step,loss\n")
        for e, s, l in rows:
            fh.write(f"{int(e)},{int(s)},{float(l)!r}\n")
