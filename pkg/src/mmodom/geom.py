"""SE(3) pose algebra for odometry.

Euler convention is intrinsic Z-Y-X: ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``.
Everything here is float64 numpy and side-effect free.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

GIMBAL_TOL = 1e-6
_ORTHO_TOL = 1e-6


def wrap_angle(a: float) -> float:
    """Map an angle into (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    if w <= -math.pi:
        w += 2.0 * math.pi
    return w


@dataclass(frozen=True)
class RelativePose:
    """Frame-to-frame motion expressed in the frame of the earlier pose."""

    dx: float = 0.0
    dy: float = 0.0
    dz: float = 0.0
    droll: float = 0.0
    dpitch: float = 0.0
    dyaw: float = 0.0
    gimbal_lock: bool = field(default=False, compare=False)

    def __post_init__(self):
        vals = self.as_array()
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"RelativePose components must be finite, got {vals}")
        for name in ("droll", "dpitch", "dyaw"):
            a = getattr(self, name)
            if not (-math.pi < a <= math.pi):
                raise ValueError(f"{name}={a} outside (-pi, pi]")

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dz, self.droll, self.dpitch, self.dyaw])

    @classmethod
    def from_array(cls, v: Sequence[float]) -> "RelativePose":
        """Build from ``[dx, dy, dz, droll, dpitch, dyaw]``; angles are wrapped."""
        v = [float(x) for x in v]
        if len(v) != 6:
            raise ValueError(f"expected 6 components, got {len(v)}")
        return cls(v[0], v[1], v[2], wrap_angle(v[3]), wrap_angle(v[4]), wrap_angle(v[5]))


@dataclass(frozen=True)
class AbsolutePose:
    translation: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", r)

    @classmethod
    def identity(cls) -> "AbsolutePose":
        return cls(np.zeros(3), np.eye(3))

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous transform."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def __eq__(self, other):
        if not isinstance(other, AbsolutePose):
            return NotImplemented
        return np.array_equal(self.translation, other.translation) and np.array_equal(
            self.rotation, other.rotation
        )

    __hash__ = None


@dataclass(frozen=True)
class Trajectory:
    poses: tuple[AbsolutePose, ...]
    timestamps: np.ndarray
    cumulative_arclength: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "poses", tuple(self.poses))
        ts = np.asarray(self.timestamps, dtype=np.float64)
        arc = np.asarray(self.cumulative_arclength, dtype=np.float64)
        if not (len(self.poses) == len(ts) == len(arc)):
            raise ValueError("poses, timestamps and arclength must have equal length")
        if len(ts) > 1 and np.any(np.diff(ts) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if len(arc) and (arc[0] != 0.0 or np.any(np.diff(arc) < 0)):
            raise ValueError("arclength must start at 0 and be non-decreasing")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "cumulative_arclength", arc)

    def __len__(self):
        return len(self.poses)

    def positions(self) -> np.ndarray:
        return np.array([p.translation for p in self.poses])


class EulerAngles(NamedTuple):
    droll: float
    dpitch: float
    dyaw: float
    gimbal_lock: bool = False


def _check_finite(*vals):
    if not all(math.isfinite(v) for v in vals):
        raise ValueError(f"non-finite angle in {vals}")


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_to_rotation(droll: float, dpitch: float, dyaw: float) -> np.ndarray:
    """``Rz(dyaw) @ Ry(dpitch) @ Rx(droll)`` in closed form."""
    _check_finite(droll, dpitch, dyaw)
    cr, sr = math.cos(droll), math.sin(droll)
    cp, sp = math.cos(dpitch), math.sin(dpitch)
    cy, sy = math.cos(dyaw), math.sin(dyaw)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def _wrap_pi(a: float) -> float:
    # atan2 can return exactly -pi
    return math.pi if a <= -math.pi else a


def rotation_to_euler(R: np.ndarray) -> EulerAngles:
    """Inverse of :func:`euler_to_rotation`.

    Near gimbal lock (pitch within 1e-6 of +-pi/2) roll is pinned to 0 and the
    whole residual rotation about the vertical goes into yaw, so
    ``euler_to_rotation(*rotation_to_euler(R)[:3])`` still reproduces ``R``.
    The result carries ``gimbal_lock=True`` in that case.
    """
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise ValueError("rotation must be a finite 3x3 matrix")
    if np.max(np.abs(R.T @ R - np.eye(3))) > _ORTHO_TOL:
        raise ValueError("rotation matrix is not orthonormal")
    cp = math.hypot(R[0, 0], R[1, 0])
    pitch = math.atan2(-R[2, 0], cp)
    if abs(abs(pitch) - math.pi / 2) < GIMBAL_TOL:
        yaw = math.atan2(-R[0, 1], R[1, 1])
        return EulerAngles(0.0, pitch, _wrap_pi(yaw), True)
    roll = math.atan2(R[2, 1], R[2, 2])
    yaw = math.atan2(R[1, 0], R[0, 0])
    return EulerAngles(_wrap_pi(roll), pitch, _wrap_pi(yaw), False)


def rotation_angle(R: np.ndarray) -> float:
    """Angle of a rotation matrix in radians.

    Trace formula written as atan2(sin, cos); acos of the clamped trace loses
    about 8 digits near the identity.
    """
    c = 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)
    s = 0.5 * math.sqrt(
        (R[2, 1] - R[1, 2]) ** 2 + (R[0, 2] - R[2, 0]) ** 2 + (R[1, 0] - R[0, 1]) ** 2
    )
    return math.atan2(s, c)


def compose(pose: AbsolutePose, rel: RelativePose) -> AbsolutePose:
    step = np.array([rel.dx, rel.dy, rel.dz])
    return AbsolutePose(
        pose.translation + pose.rotation @ step,
        pose.rotation @ euler_to_rotation(rel.droll, rel.dpitch, rel.dyaw),
    )


def relative_between(a: AbsolutePose, b: AbsolutePose) -> RelativePose:
    """Motion taking ``a`` to ``b``, expressed in the frame of ``a``."""
    rt = a.rotation.T
    t = rt @ (b.translation - a.translation)
    e = rotation_to_euler(rt @ b.rotation)
    return RelativePose(t[0], t[1], t[2], e.droll, e.dpitch, e.dyaw, gimbal_lock=e.gimbal_lock)


def compose_trajectory(
    rels: Sequence[RelativePose], timestamps: Iterable[float] | None = None
) -> Trajectory:
    """Fold relative poses into a trajectory starting at the identity.

    Without timestamps, integer frame indices are used.
    """
    rels = list(rels)
    ts = np.arange(len(rels) + 1, dtype=np.float64) if timestamps is None else np.asarray(
        list(timestamps), dtype=np.float64
    )
    if len(ts) != len(rels) + 1:
        raise ValueError(f"need {len(rels) + 1} timestamps, got {len(ts)}")
    poses = [AbsolutePose.identity()]
    arc = [0.0]
    for rel in rels:
        poses.append(compose(poses[-1], rel))
        arc.append(arc[-1] + math.sqrt(rel.dx * rel.dx + rel.dy * rel.dy + rel.dz * rel.dz))
    return Trajectory(tuple(poses), ts, np.array(arc))


def trajectory_relatives(traj: Trajectory) -> list[RelativePose]:
    return [relative_between(a, b) for a, b in zip(traj.poses[:-1], traj.poses[1:])]


def transform_trajectory(traj: Trajectory, g: AbsolutePose) -> Trajectory:
    """Left-multiply every pose by the rigid transform ``g``."""
    poses = [
        AbsolutePose(g.translation + g.rotation @ p.translation, g.rotation @ p.rotation)
        for p in traj.poses
    ]
    return Trajectory(tuple(poses), traj.timestamps, traj.cumulative_arclength)


def format_trajectory(traj: Trajectory) -> str:
    lines = []
    for ts, p in zip(traj.timestamps, traj.poses):
        vals = [ts, *p.translation, *p.rotation.reshape(-1)]
        lines.append(" ".join(repr(float(v)) for v in vals))
    return "\n".join(lines) + "\n"


def write_trajectory(traj: Trajectory, path: str | Path) -> None:
    """Write ``timestamp tx ty tz r00 r01 ... r22`` per line (row-major rotation)."""
    Path(path).write_text(format_trajectory(traj))


def read_trajectory(path: str | Path) -> Trajectory:
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] != 13:
        raise ValueError(f"{path}: expected 13 columns, got {data.shape[1]}")
    poses = [AbsolutePose(row[1:4], row[4:13].reshape(3, 3)) for row in data]
    arc = np.concatenate(
        [[0.0], np.cumsum(np.linalg.norm(np.diff(data[:, 1:4], axis=0), axis=1))]
    )
    return Trajectory(tuple(poses), data[:, 0], arc)
