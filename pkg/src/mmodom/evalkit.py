"""KITTI-style relative drift metrics and their aggregation into reports."""
from __future__ import annotations

import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch

from .geom import AbsolutePose, RelativePose, Trajectory, compose_trajectory, rotation_angle
from .head import PoseWeights
from .learn.model import FrameBatch, ModelConfig, forward

log = logging.getLogger(__name__)

DESK_LENGTHS = tuple(float(x) for x in range(10, 81, 10))
ROAD_LENGTHS = tuple(float(x) for x in range(100, 801, 100))


@dataclass(frozen=True)
class DriftSample:
    start: int
    length: float  # m
    t_err: float  # percent of length
    r_err: float  # degrees per meter
    scene: str = ""
    weather: str = ""


def _inverse(p: AbsolutePose) -> AbsolutePose:
    rt = p.rotation.T
    return AbsolutePose(-rt @ p.translation, rt)


def _mul(a: AbsolutePose, b: AbsolutePose) -> AbsolutePose:
    return AbsolutePose(a.translation + a.rotation @ b.translation, a.rotation @ b.rotation)


def kitti_drift(
    gt: Trajectory,
    pred: Trajectory,
    lengths: Sequence[float] = DESK_LENGTHS,
    scene: str = "",
    weather: str = "",
) -> list[DriftSample]:
    """Segment errors for every start frame and every length.

    The segment end is the first ground-truth pose at least ``L`` metres of
    arclength past the start; starts without enough remaining path are
    skipped. Errors are normalised by ``L``.
    """
    if len(gt) != len(pred):
        raise ValueError(f"trajectory lengths differ: {len(gt)} vs {len(pred)}")
    dist = gt.cumulative_arclength
    inv_gt = [_inverse(p) for p in gt.poses]
    inv_pred = [_inverse(p) for p in pred.poses]
    out = []
    for i in range(len(gt)):
        for L in lengths:
            j = int(np.searchsorted(dist, dist[i] + L, side="left"))
            if j >= len(gt):
                continue
            gt_rel = _mul(inv_gt[i], gt.poses[j])
            pred_rel = _mul(inv_pred[i], pred.poses[j])
            err = _mul(_inverse(gt_rel), pred_rel)
            t_err = float(np.linalg.norm(err.translation)) / L * 100.0
            r_err = math.degrees(rotation_angle(err.rotation)) / L
            out.append(DriftSample(i, float(L), t_err, r_err, scene, weather))
    return out


@dataclass
class GroupStats:
    t_err: float  # percent
    r_err: float  # deg / m
    samples: int

    @property
    def r_err_per_100m(self) -> float:
        return self.r_err * 100.0


@dataclass
class DriftReport:
    group_by: str
    groups: "OrderedDict[str, GroupStats]" = field(default_factory=OrderedDict)

    @property
    def avg_t_err(self) -> float:
        return float(np.mean([g.t_err for g in self.groups.values()])) if self.groups else float("nan")

    @property
    def avg_r_err(self) -> float:
        return float(np.mean([g.r_err for g in self.groups.values()])) if self.groups else float("nan")

    def rows(self) -> list[tuple[str, float, float, int]]:
        rows = [(k, g.t_err, g.r_err_per_100m, g.samples) for k, g in self.groups.items()]
        rows.append(("Avg", self.avg_t_err, self.avg_r_err * 100.0, sum(g.samples for g in self.groups.values())))
        return rows

    def to_csv(self) -> str:
        lines = ["group,t_err_pct,r_err_deg_per_100m,samples"]
        lines += [f"{g},{t!r},{r!r},{n}" for g, t, r, n in self.rows()]
        return "\n".join(lines) + "\n"


def _group_key(s: DriftSample, group_by: str) -> str:
    if group_by == "length":
        return f"{s.length:g}m"
    if group_by == "weather":
        return s.weather
    if group_by == "scene":
        return s.scene
    raise ValueError(f"unknown grouping {group_by!r}")


def aggregate(
    samples: Iterable[DriftSample], group_by: str = "length", groups: Sequence[str] | None = None
) -> DriftReport:
    """Arithmetic mean per group; the report average is the mean of group means.

    ``groups`` fixes the row order; listed groups with no samples are dropped
    with a warning.
    """
    buckets: "OrderedDict[str, list[DriftSample]]" = OrderedDict()
    samples = list(samples)
    if group_by == "length":
        samples.sort(key=lambda s: s.length)
    for s in samples:
        buckets.setdefault(_group_key(s, group_by), []).append(s)
    order = list(groups) if groups is not None else list(buckets)
    rep = DriftReport(group_by)
    for k in order:
        b = buckets.get(k)
        if not b:
            log.warning("no drift samples for %s group %r; omitted", group_by, k)
            continue
        rep.groups[k] = GroupStats(
            float(np.mean([s.t_err for s in b])), float(np.mean([s.r_err for s in b])), len(b)
        )
    return rep


def write_report(report: DriftReport, path: str | Path) -> None:
    Path(path).write_text(report.to_csv())


@dataclass
class ScenePrediction:
    trajectory: Trajectory
    rel_poses: np.ndarray  # (T, 6)
    masks: dict[str, np.ndarray]  # name -> (T, F)
    loss: float


def predict_scene(params, scene, cfg: ModelConfig, weights: PoseWeights | None = None, dtype=torch.float64):
    """Run the network over a whole scene, temporal state carried from a zero
    start, and compose the predicted relative poses open-loop."""
    weights = PoseWeights() if weights is None else weights
    batch = FrameBatch.from_arrays(scene.stack(), dtype)
    params = {k: v.to(dtype) for k, v in params.items()}
    with torch.no_grad():
        res = forward(params, batch, cfg, weights)
    rel = res.preds[0].double().numpy()
    traj = compose_trajectory([RelativePose.from_array(r) for r in rel], scene.timestamps())
    masks = {k: v[0].double().numpy() for k, v in res.masks.items()}
    return ScenePrediction(traj, rel, masks, float(res.loss))


def predict_trajectory(scene, checkpoint, cfg: ModelConfig, dtype=torch.float64) -> Trajectory:
    return predict_scene(checkpoint.params, scene, cfg, dtype=dtype).trajectory
