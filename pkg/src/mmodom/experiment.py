"""The desk-scale experiment: generate a weather suite, train each fusion mode,
evaluate drift on held-out scenes and summarise the attention masks.

Used by ``scripts/run_desk_suite.py`` and by the acceptance tests.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import RunConfig
from .evalkit import DriftReport, DriftSample, aggregate, kitti_drift, predict_scene, write_report
from .fusion import MODALITIES, effective_mask
from .geom import write_trajectory
from .head import PoseWeights, pose_weights_from_data
from .learn.checkpoint import Checkpoint, save_checkpoint
from .learn.model import ModelConfig
from .learn.train import TrainResult, train, untrained_checkpoint, write_loss_csv
from .scene import Scene, read_scene, write_scene
from .synthsim import WEATHERS, generate_scene

log = logging.getLogger(__name__)


def training_weights(cfg: RunConfig, scenes) -> PoseWeights:
    """Configured loss weights, or weights computed from the training ground truth."""
    w = cfg.fixed_weights()
    if w is None:
        gt = np.concatenate([s.stack()["gt_rel_pose"] for s in scenes])
        w = pose_weights_from_data(gt, cfg.lam)
    return w


def evaluate_scenes(
    ck: Checkpoint | None, mc: ModelConfig | None, scenes, lengths, traj_dir=None, tag="pred"
) -> list[DriftSample]:
    """Drift samples over ``scenes``; ``ck=None`` uses the ground truth as the prediction."""
    samples = []
    for s in scenes:
        gt = s.trajectory()
        pred = gt if ck is None else predict_scene(ck.params, s, mc).trajectory
        samples += kitti_drift(gt, pred, lengths, s.name, s.weather)
        if traj_dir is not None:
            traj_dir = Path(traj_dir)
            traj_dir.mkdir(parents=True, exist_ok=True)
            write_trajectory(gt, traj_dir / f"{s.name}_gt.txt")
            write_trajectory(pred, traj_dir / f"{s.name}_{tag}.txt")
    return samples


def mask_means(ck: Checkpoint, mc: ModelConfig, scenes) -> dict[str, dict[str, float]]:
    """Mean effective mask per modality, keyed by scene weather."""
    out = {}
    for s in scenes:
        masks = predict_scene(ck.params, s, mc).masks
        out[s.weather] = {m: float(effective_mask(masks, m).mean()) for m in MODALITIES}
    return out


def generate_suite(cfg: RunConfig, root: str | Path) -> dict[str, list[Path]]:
    """Write every configured scene under ``root/<split>/<name>``."""
    dirs: dict[str, list[Path]] = {}
    for split, sc in cfg.scenarios():
        d = write_scene(generate_scene(sc), Path(root) / split / sc.name)
        dirs.setdefault(split, []).append(d)
    return dirs


@dataclass
class ModeResult:
    mode: str
    train: TrainResult
    seconds: float
    by_length: DriftReport
    by_weather: DriftReport
    masks: dict[str, dict[str, float]]
    checkpoint_path: Path


@dataclass
class DeskResult:
    scene_dirs: dict[str, list[Path]]
    weights: PoseWeights
    untrained_by_length: DriftReport
    untrained_by_weather: DriftReport
    modes: dict[str, ModeResult] = field(default_factory=dict)


def run_mode(cfg: RunConfig, mode: str, train_scenes, test_scenes, weights, out: Path) -> ModeResult:
    mc = replace(cfg.model, fusion_mode=mode)
    run = out / mode
    run.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    res = train(train_scenes, mc, cfg.train, weights, checkpoint_path=run / "checkpoint.bin",
                on_epoch=lambda e, l: log.info("[%s] epoch %d loss %.6g", mode, e, l))
    secs = time.perf_counter() - t0
    write_loss_csv(res.step_losses, run / "loss.csv")
    samples = evaluate_scenes(res.checkpoint, mc, test_scenes, cfg.lengths, run / "trajectories")
    weathers = [w for w in WEATHERS if any(s.weather == w for s in test_scenes)]
    by_len, by_w = aggregate(samples, "length"), aggregate(samples, "weather", weathers)
    write_report(by_len, run / "by_length.csv")
    write_report(by_w, run / "by_weather.csv")
    return ModeResult(mode, res, secs, by_len, by_w, mask_means(res.checkpoint, mc, test_scenes),
                      run / "checkpoint.bin")


def run_desk_suite(cfg: RunConfig, out: str | Path, modes=("two_stage", "baseline")) -> DeskResult:
    """Generate, train every mode in ``modes`` and evaluate; artifacts go under ``out``."""
    out = Path(out)
    dirs = generate_suite(cfg, out / "scenes")
    train_scenes: list[Scene] = [read_scene(d) for d in dirs["train"]]
    test_scenes: list[Scene] = [read_scene(d) for d in dirs["test"]]
    weights = training_weights(cfg, train_scenes)
    log.info("pose weights %s", np.round(weights.weights, 4).tolist())

    weathers = [w for w in WEATHERS if any(s.weather == w for s in test_scenes)]
    unt = untrained_checkpoint(cfg.model, cfg.train, weights)
    u = evaluate_scenes(unt, cfg.model, test_scenes, cfg.lengths)
    result = DeskResult(dirs, weights, aggregate(u, "length"), aggregate(u, "weather", weathers))
    write_report(result.untrained_by_length, out / "untrained_by_length.csv")
    save_checkpoint(unt, out / "untrained.bin")
    for mode in modes:
        result.modes[mode] = run_mode(cfg, mode, train_scenes, test_scenes, weights, out)
    return result
