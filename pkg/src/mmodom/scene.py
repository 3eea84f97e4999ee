"""Estimation frames, scenes and the on-disk scene format.

A scene directory holds ``meta.json`` and ``frames.jsonl`` (one JSON object per
estimation frame). Floats are written with ``repr`` precision, so reading a
written scene gives back identical arrays.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import DataError
from .geom import RelativePose, Trajectory, compose_trajectory
from .encoders import IMU_CHANNELS, IMU_SAMPLES

FORMAT_VERSION = 1


@dataclass
class EstimationFrame:
    t0: float
    t1: float
    keypoints0: np.ndarray  # (N, 3 + D)
    keypoints1: np.ndarray
    imu: np.ndarray  # (48, 6)
    image0: np.ndarray  # (H, W)
    image1: np.ndarray
    gt_rel_pose: np.ndarray  # (6,)

    def to_json(self, index: int) -> dict[str, Any]:
        return {
            "index": index,
            "t0": float(self.t0),
            "t1": float(self.t1),
            "keypoints0": self.keypoints0.tolist(),
            "keypoints1": self.keypoints1.tolist(),
            "imu": self.imu.tolist(),
            "image0": self.image0.tolist(),
            "image1": self.image1.tolist(),
            "gt_rel_pose": self.gt_rel_pose.tolist(),
        }

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "EstimationFrame":
        return cls(
            float(d["t0"]),
            float(d["t1"]),
            np.asarray(d["keypoints0"], dtype=np.float64),
            np.asarray(d["keypoints1"], dtype=np.float64),
            np.asarray(d["imu"], dtype=np.float64),
            np.asarray(d["image0"], dtype=np.float64),
            np.asarray(d["image1"], dtype=np.float64),
            np.asarray(d["gt_rel_pose"], dtype=np.float64),
        )


@dataclass
class Scene:
    name: str
    weather: str
    frames: list[EstimationFrame]
    config: dict[str, Any] = field(default_factory=dict)

    def __len__(self):
        return len(self.frames)

    @property
    def n_keypoints(self) -> int:
        return self.frames[0].keypoints0.shape[0]

    @property
    def desc_dim(self) -> int:
        return self.frames[0].keypoints0.shape[1] - 3

    @property
    def image_shape(self) -> tuple[int, int]:
        return tuple(self.frames[0].image0.shape)

    def timestamps(self) -> np.ndarray:
        if not self.frames:
            return np.zeros(1)
        return np.array([self.frames[0].t0] + [f.t1 for f in self.frames])

    def gt_relatives(self) -> list[RelativePose]:
        return [RelativePose.from_array(f.gt_rel_pose) for f in self.frames]

    def trajectory(self) -> Trajectory:
        """Ground-truth trajectory: composition of the stored relative poses."""
        return compose_trajectory(self.gt_relatives(), self.timestamps())

    def stack(self) -> dict[str, np.ndarray]:
        """Frame arrays stacked along a leading time axis."""
        keys = ("keypoints0", "keypoints1", "imu", "image0", "image1", "gt_rel_pose")
        return {k: np.stack([getattr(f, k) for f in self.frames]) for k in keys}

    def meta(self) -> dict[str, Any]:
        return {
            "version": FORMAT_VERSION,
            "name": self.name,
            "weather": self.weather,
            "n_frames": len(self.frames),
            "n_keypoints": self.n_keypoints,
            "desc_dim": self.desc_dim,
            "image_shape": list(self.image_shape),
            "imu_shape": [IMU_SAMPLES, IMU_CHANNELS],
            "config": self.config,
        }


def write_scene(scene: Scene, directory: str | Path) -> Path:
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
        (d / "meta.json").write_text(json.dumps(scene.meta(), indent=2, sort_keys=True) + "\n")
        with open(d / "frames.jsonl", "w") as fh:
            for i, fr in enumerate(scene.frames):
                fh.write(json.dumps(fr.to_json(i), separators=(",", ":")))
                fh.write("\n")
    except OSError as e:
        raise OSError(f"cannot write scene to {d}: {e}") from e
    return d


def _check_frame(i: int, fr: EstimationFrame, meta: dict[str, Any]):
    n, dd = meta["n_keypoints"], meta["desc_dim"]
    want = {
        "keypoints0": (n, 3 + dd),
        "keypoints1": (n, 3 + dd),
        "imu": tuple(meta["imu_shape"]),
        "image0": tuple(meta["image_shape"]),
        "image1": tuple(meta["image_shape"]),
        "gt_rel_pose": (6,),
    }
    for k, shape in want.items():
        got = getattr(fr, k).shape
        if got != shape:
            raise DataError(f"frame {i}: {k} has shape {got}, meta declares {shape}")


def read_scene(directory: str | Path) -> Scene:
    d = Path(directory)
    try:
        meta = json.loads((d / "meta.json").read_text())
    except FileNotFoundError as e:
        raise DataError(f"{d} is not a scene directory (no meta.json)") from e
    except json.JSONDecodeError as e:
        raise DataError(f"{d}/meta.json is not valid JSON: {e}") from e
    if meta.get("version") != FORMAT_VERSION:
        raise DataError(f"{d}: unsupported scene format version {meta.get('version')!r}")
    frames = []
    try:
        with open(d / "frames.jsonl") as fh:
            for i, line in enumerate(fh):
                fr = EstimationFrame.from_json(json.loads(line))
                _check_frame(i, fr, meta)
                frames.append(fr)
    except FileNotFoundError as e:
        raise DataError(f"{d}: frames.jsonl is missing") from e
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        if isinstance(e, DataError):
            raise
        raise DataError(f"{d}: malformed frame record {len(frames)}: {e}") from e
    if len(frames) != meta["n_frames"]:
        raise DataError(f"{d}: {len(frames)} frames on disk, meta declares {meta['n_frames']}")
    return Scene(meta["name"], meta["weather"], frames, meta.get("config", {}))


def find_scenes(root: str | Path) -> list[Path]:
    """Scene directories under ``root`` (or ``root`` itself), sorted by name."""
    root = Path(root)
    if (root / "meta.json").exists():
        return [root]
    return sorted(p.parent for p in root.glob("*/meta.json"))
