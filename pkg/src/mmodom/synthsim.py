"""Synthetic multi-weather driving scenes.

The vehicle follows a smooth planar path (piecewise constant-curvature arcs
blended with cosine ramps, sinusoidal speed) with small heave/roll/pitch
oscillations. Sensors are simulated from that continuous path:

* radar: the N nearest of a fixed set of ground landmarks with persistent unit
  descriptors, seen in the ego frame;
* IMU: 48 samples per frame of body-frame specific force (gravity excluded by
  convention) and angular rate, by central finite differences of the path;
* camera: a world-anchored sinusoid texture on the ground ahead of the vehicle.

Weather degrades each sensor according to a :class:`WeatherProfile`. All
randomness comes from named streams derived from the scenario seed.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .encoders import IMU_SAMPLES
from .errors import ConfigError
from .geom import AbsolutePose, compose_trajectory, relative_between
from .radar import pad_or_truncate
from .scene import EstimationFrame, Scene

# grid sub-steps per IMU sample; the finite-difference stride is one IMU period
_SUB = 4


@dataclass(frozen=True)
class WeatherProfile:
    name: str
    visual_noise_std: float = 0.0
    visual_dropout: float = 0.0
    radar_jitter_std: float = 0.0
    descriptor_noise_std: float = 0.0
    imu_noise_std: float = 0.0
    imu_bias_scale: float = 0.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if k != "name" and not (v >= 0):
                raise ConfigError(f"weather {self.name}: {k} must be >= 0, got {v}")
        if self.visual_dropout > 1:
            raise ConfigError(f"weather {self.name}: visual_dropout must be <= 1")

    def scaled(self, s: float) -> "WeatherProfile":
        return replace(
            self,
            visual_noise_std=self.visual_noise_std * s,
            visual_dropout=min(1.0, self.visual_dropout * s),
            radar_jitter_std=self.radar_jitter_std * s,
            descriptor_noise_std=self.descriptor_noise_std * s,
            imu_noise_std=self.imu_noise_std * s,
            imu_bias_scale=self.imu_bias_scale * s,
        )


# Simulation parameters only; visual corruption grows sunny < cloudy <= overcast < rainy < snowing.
WEATHER_PROFILES = {
    "sunny": WeatherProfile("sunny", 0.0, 0.0, 0.03, 0.02, 0.03, 0.02),
    "cloudy": WeatherProfile("cloudy", 0.02, 0.01, 0.03, 0.02, 0.03, 0.02),
    "overcast": WeatherProfile("overcast", 0.04, 0.03, 0.03, 0.02, 0.03, 0.02),
    "rainy": WeatherProfile("rainy", 0.12, 0.15, 0.05, 0.03, 0.03, 0.02),
    "snowing": WeatherProfile("snowing", 0.25, 0.40, 0.08, 0.04, 0.03, 0.02),
}
WEATHERS = tuple(WEATHER_PROFILES)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scene"
    seed: int = 0
    weather: str = "sunny"
    duration: float = 76.0  # s
    radar_rate: float = 4.0  # Hz
    landmark_count: int = 1200
    landmark_extent: float = 60.0  # m, half-width of the landmark band
    radar_range: float = 60.0  # m
    speed_mean: float = 8.0  # m/s
    speed_amplitude: float = 2.0
    speed_period: float = 25.0  # s
    curvature_max: float = 0.03  # 1/m
    curvature_constant: float | None = None
    segment_min: float = 4.0  # s
    segment_max: float = 10.0
    straight_prob: float = 0.3
    transition_time: float = 1.5  # s
    z_amplitude: float = 0.05  # m
    roll_amplitude: float = 0.004  # rad
    pitch_amplitude: float = 0.004
    n_keypoints: int = 64
    desc_dim: int = 16
    image_size: tuple[int, int] = (32, 32)
    pixel_spacing: float = 0.5  # m on the ground
    noise_scale: float = 1.0  # multiplies every weather degradation; 0 = noiseless

    def __post_init__(self):
        object.__setattr__(self, "image_size", tuple(int(x) for x in self.image_size))
        self.validate()

    def validate(self):
        errs = []
        for k in ("duration", "radar_rate", "radar_range", "speed_period", "pixel_spacing"):
            if not getattr(self, k) > 0:
                errs.append(f"{k} must be > 0")
        for k in ("landmark_count", "n_keypoints", "desc_dim"):
            if not (isinstance(getattr(self, k), int) and getattr(self, k) >= 1):
                errs.append(f"{k} must be a positive integer")
        if self.speed_mean < 0 or self.speed_amplitude < 0 or self.noise_scale < 0:
            errs.append("speed_mean, speed_amplitude and noise_scale must be >= 0")
        if not 0 < self.segment_min <= self.segment_max:
            errs.append("need 0 < segment_min <= segment_max")
        if self.transition_time < 0 or self.transition_time > self.segment_min:
            errs.append("transition_time must be in [0, segment_min]")
        if len(self.image_size) != 2 or min(self.image_size) < 1:
            errs.append("image_size must be two positive integers")
        if self.weather not in WEATHER_PROFILES:
            errs.append(f"weather must be one of {WEATHERS}, got {self.weather!r}")
        if self.n_radar_frames < 2:
            errs.append("duration * radar_rate must give at least 2 radar frames")
        if errs:
            raise ConfigError(f"scenario {self.name!r}: " + "; ".join(errs))

    @property
    def n_radar_frames(self) -> int:
        return int(round(self.duration * self.radar_rate))

    @property
    def frame_period(self) -> float:
        return 1.0 / self.radar_rate

    def profile(self) -> WeatherProfile:
        return WEATHER_PROFILES[self.weather].scaled(self.noise_scale)


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named purpose under a scenario seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))


def rotations_zyx(roll, pitch, yaw) -> np.ndarray:
    """Vectorised ``Rz(yaw) Ry(pitch) Rx(roll)``, shape ``(n, 3, 3)``."""
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    return np.stack(
        [
            np.stack([cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr], -1),
            np.stack([sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr], -1),
            np.stack([-sp, cp * sr, cp * cr], -1),
        ],
        -2,
    )


def so3_log(R: np.ndarray) -> np.ndarray:
    """Rotation vectors of a stack of rotation matrices."""
    tr = np.trace(R, axis1=-2, axis2=-1)
    th = np.arccos(np.clip(0.5 * (tr - 1.0), -1.0, 1.0))
    v = 0.5 * np.stack([R[..., 2, 1] - R[..., 1, 2], R[..., 0, 2] - R[..., 2, 0], R[..., 1, 0] - R[..., 0, 1]], -1)
    s = np.sin(th)
    k = np.where(th < 1e-8, 1.0, th / np.where(th < 1e-8, 1.0, s))
    return v * k[..., None]


@dataclass
class DenseTrajectory:
    """The continuous path sampled on a fine grid.

    Grid index ``offset + k * substeps`` is radar frame ``k``.
    """

    t: np.ndarray
    pos: np.ndarray
    roll: np.ndarray
    pitch: np.ndarray
    yaw: np.ndarray
    offset: int
    substeps: int
    speed: np.ndarray = field(repr=False)
    curvature: np.ndarray = field(repr=False)

    def rotations(self, idx) -> np.ndarray:
        return rotations_zyx(self.roll[idx], self.pitch[idx], self.yaw[idx])

    def frame_indices(self, n_frames: int) -> np.ndarray:
        return self.offset + self.substeps * np.arange(n_frames)

    def pose(self, i: int) -> AbsolutePose:
        return AbsolutePose(self.pos[i], rotations_zyx(self.roll[i], self.pitch[i], self.yaw[i]))


def _cosine_ramp(u):
    u = np.clip(u, 0.0, 1.0)
    return 0.5 * (1.0 - np.cos(np.pi * u))


def _curvature_profile(cfg: ScenarioConfig, rng: np.random.Generator):
    if cfg.curvature_constant is not None:
        k = float(cfg.curvature_constant)
        return lambda t: np.full_like(t, k)
    bounds, values = [], []
    t, total = 0.0, cfg.duration + 1.0
    values.append(0.0 if rng.random() < cfg.straight_prob else rng.uniform(-1, 1) * cfg.curvature_max)
    while t < total:
        t += rng.uniform(cfg.segment_min, cfg.segment_max)
        bounds.append(t)
        values.append(0.0 if rng.random() < cfg.straight_prob else rng.uniform(-1, 1) * cfg.curvature_max)
    tau = max(cfg.transition_time, 1e-9)

    def kappa(tt):
        out = np.full_like(tt, values[0])
        for b, k0, k1 in zip(bounds, values[:-1], values[1:]):
            out += (k1 - k0) * _cosine_ramp((tt - b) / tau + 0.5)
        return out

    return kappa


def dense_trajectory(cfg: ScenarioConfig, rng: np.random.Generator | None = None) -> DenseTrajectory:
    rng = rng_stream(cfg.seed, "trajectory") if rng is None else rng
    sub = IMU_SAMPLES * _SUB
    dt = cfg.frame_period / sub
    off = _SUB
    n_grid = off + (cfg.n_radar_frames - 1) * sub + off + 1
    t = (np.arange(n_grid) - off) * dt

    phase = rng.uniform(0, 2 * np.pi)
    kappa = _curvature_profile(cfg, rng)
    osc = rng.uniform(0, 2 * np.pi, size=3)
    periods = rng.uniform(3.0, 9.0, size=3)

    def speed(tt):
        return np.maximum(0.0, cfg.speed_mean + cfg.speed_amplitude * np.sin(2 * np.pi * tt / cfg.speed_period + phase))

    tm = t[:-1] + 0.5 * dt
    v = speed(tm)
    k = kappa(tm)
    dpsi = v * k * dt
    yaw = np.concatenate([[0.0], np.cumsum(dpsi)])
    mid = yaw[:-1] + 0.5 * dpsi
    # exact arc for constant speed and curvature over each sub-step
    step = v * dt * np.sinc(dpsi / (2 * np.pi))
    xy = np.zeros((n_grid, 2))
    xy[1:, 0] = np.cumsum(step * np.cos(mid))
    xy[1:, 1] = np.cumsum(step * np.sin(mid))

    z = cfg.z_amplitude * np.sin(2 * np.pi * t / periods[0] + osc[0])
    roll = cfg.roll_amplitude * np.sin(2 * np.pi * t / periods[1] + osc[1])
    pitch = cfg.pitch_amplitude * np.sin(2 * np.pi * t / periods[2] + osc[2])
    pos = np.column_stack([xy, z])
    return DenseTrajectory(t, pos, roll, pitch, yaw, off, sub, speed(t), kappa(t))


def generate_trajectory(cfg: ScenarioConfig, dense: DenseTrajectory | None = None):
    """Ground-truth trajectory and its per-frame relative poses.

    The returned trajectory is the composition of the returned relative poses,
    so the two agree exactly.
    """
    dense = dense_trajectory(cfg) if dense is None else dense
    idx = dense.frame_indices(cfg.n_radar_frames)
    poses = [dense.pose(i) for i in idx]
    rels = [relative_between(a, b) for a, b in zip(poses[:-1], poses[1:])]
    traj = compose_trajectory(rels, dense.t[idx])
    return traj, rels


def place_landmarks(dense: DenseTrajectory, cfg: ScenarioConfig, rng: np.random.Generator | None = None):
    """Landmark positions ``(L, 2)`` scattered in a band around the path, and unit descriptors ``(L, D)``."""
    rng = rng_stream(cfg.seed, "landmarks") if rng is None else rng
    seg = np.linalg.norm(np.diff(dense.pos[:, :2], axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    s = rng.uniform(0.0, max(arc[-1], 1e-9), cfg.landmark_count)
    i = np.clip(np.searchsorted(arc, s), 0, len(arc) - 1)
    heading = dense.yaw[i]
    along = rng.uniform(-cfg.landmark_extent, cfg.landmark_extent, cfg.landmark_count)
    lateral = rng.uniform(-cfg.landmark_extent, cfg.landmark_extent, cfg.landmark_count)
    c, sn = np.cos(heading), np.sin(heading)
    xy = dense.pos[i, :2] + np.column_stack([c * along - sn * lateral, sn * along + c * lateral])
    desc = rng.normal(size=(cfg.landmark_count, cfg.desc_dim))
    desc /= np.linalg.norm(desc, axis=1, keepdims=True)
    return xy, desc


def simulate_radar(
    dense: DenseTrajectory,
    landmarks: tuple[np.ndarray, np.ndarray],
    cfg: ScenarioConfig,
    weather: WeatherProfile,
    rng: np.random.Generator | None = None,
) -> list[np.ndarray]:
    """One packed keypoint frame ``(N, 3 + D)`` per radar timestamp."""
    rng = rng_stream(cfg.seed, "radar") if rng is None else rng
    lm_xy, lm_desc = landmarks
    lm = np.column_stack([lm_xy, np.zeros(len(lm_xy))])
    out = []
    for i in dense.frame_indices(cfg.n_radar_frames):
        R = dense.rotations(i)
        ego = (lm - dense.pos[i]) @ R  # R^T (p - t), row-wise
        rng_m = np.hypot(ego[:, 0], ego[:, 1])
        order = np.argsort(rng_m, kind="stable")
        order = order[rng_m[order] <= cfg.radar_range][: cfg.n_keypoints]
        k = len(order)
        xy = ego[order, :2] + rng.normal(0.0, 1.0, (k, 2)) * weather.radar_jitter_std
        desc = lm_desc[order] + rng.normal(0.0, 1.0, (k, cfg.desc_dim)) * weather.descriptor_noise_std
        desc /= np.linalg.norm(desc, axis=1, keepdims=True)
        score = np.clip(1.0 - rng_m[order] / cfg.radar_range, 0.0, 1.0)
        rows = np.column_stack([xy, score, desc])
        out.append(pad_or_truncate(rows, cfg.n_keypoints))
    return out


def simulate_imu(
    dense: DenseTrajectory,
    cfg: ScenarioConfig,
    weather: WeatherProfile,
    rng: np.random.Generator | None = None,
) -> list[np.ndarray]:
    """48x6 windows ``[ax, ay, az, gx, gy, gz]`` per estimation frame.

    Gyroscope noise and bias are a tenth of the accelerometer values.
    """
    rng = rng_stream(cfg.seed, "imu") if rng is None else rng
    n_est = cfg.n_radar_frames - 1
    h = _SUB * (dense.t[1] - dense.t[0])
    idx = dense.offset + np.arange(n_est * IMU_SAMPLES) * _SUB
    R = dense.rotations(idx)
    acc_w = (dense.pos[idx + _SUB] - 2.0 * dense.pos[idx] + dense.pos[idx - _SUB]) / (h * h)
    acc_b = np.einsum("nji,nj->ni", R, acc_w)
    Rm, Rp = dense.rotations(idx - _SUB), dense.rotations(idx + _SUB)
    gyro = so3_log(np.einsum("nji,njk->nik", Rm, Rp)) / (2.0 * h)
    scale = np.array([1.0, 1.0, 1.0, 0.1, 0.1, 0.1])
    bias = rng.normal(size=6) * weather.imu_bias_scale * scale
    noise = rng.normal(size=(len(idx), 6)) * weather.imu_noise_std * scale
    data = np.column_stack([acc_b, gyro]) + bias + noise
    return list(data.reshape(n_est, IMU_SAMPLES, 6))


def ground_texture(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """World-anchored intensity pattern in [0.05, 0.95]."""
    return (
        0.5
        + 0.15 * np.sin(2 * np.pi * X / 7.0 + 0.3)
        + 0.15 * np.sin(2 * np.pi * Y / 11.0 + 1.1)
        + 0.15 * np.sin(2 * np.pi * (X + 0.6 * Y) / 17.0 + 2.0)
    )


def render_view(x: float, y: float, yaw: float, cfg: ScenarioConfig) -> np.ndarray:
    """Clean image of the ground patch ahead of a vehicle at planar pose (x, y, yaw)."""
    H, W = cfg.image_size
    s = cfg.pixel_spacing
    xe = 2.0 + (H - 1 - np.arange(H))[:, None] * s * np.ones((1, W))
    ye = ((W - 1) / 2.0 - np.arange(W))[None, :] * s * np.ones((H, 1))
    c, sn = math.cos(yaw), math.sin(yaw)
    return ground_texture(x + c * xe - sn * ye, y + sn * xe + c * ye)


def simulate_visual(
    dense: DenseTrajectory,
    cfg: ScenarioConfig,
    weather: WeatherProfile,
    rng: np.random.Generator | None = None,
) -> list[np.ndarray]:
    """One grayscale image per radar timestamp (frame k uses images k and k+1)."""
    rng = rng_stream(cfg.seed, "visual") if rng is None else rng
    out = []
    for i in dense.frame_indices(cfg.n_radar_frames):
        img = render_view(dense.pos[i, 0], dense.pos[i, 1], dense.yaw[i], cfg)
        noise = rng.normal(size=img.shape) * weather.visual_noise_std
        drop = rng.random(img.shape) < weather.visual_dropout
        img = np.clip(img + noise, 0.0, 1.0)
        img[drop] = 0.0
        out.append(img)
    return out


def generate_scene(cfg: ScenarioConfig, weather: WeatherProfile | None = None) -> Scene:
    weather = cfg.profile() if weather is None else weather
    dense = dense_trajectory(cfg)
    traj, rels = generate_trajectory(cfg, dense)
    landmarks = place_landmarks(dense, cfg)
    kps = simulate_radar(dense, landmarks, cfg, weather)
    imu = simulate_imu(dense, cfg, weather)
    imgs = simulate_visual(dense, cfg, weather)
    ts = traj.timestamps
    frames = [
        EstimationFrame(ts[k], ts[k + 1], kps[k], kps[k + 1], imu[k], imgs[k], imgs[k + 1], rels[k].as_array())
        for k in range(len(rels))
    ]
    meta = asdict(cfg)
    meta["image_size"] = list(cfg.image_size)
    meta["weather_profile"] = asdict(weather)
    return Scene(cfg.name, weather.name, frames, meta)


def weather_suite(base: ScenarioConfig, seed: int, prefix: str = "") -> list[ScenarioConfig]:
    """One scenario per weather profile, with distinct derived seeds."""
    return [
        replace(base, name=f"{prefix}{w}", weather=w, seed=int(seed) * 100 + i)
        for i, w in enumerate(WEATHERS)
    ]
