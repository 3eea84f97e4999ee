import math
from dataclasses import replace

import numpy as np
import pytest

from mmodom.errors import ConfigError
from mmodom.geom import relative_between
from mmodom.synthsim import (
    WEATHER_PROFILES,
    WEATHERS,
    ScenarioConfig,
    WeatherProfile,
    dense_trajectory,
    generate_scene,
    generate_trajectory,
    rng_stream,
    weather_suite,
)

FLAT = dict(z_amplitude=0.0, roll_amplitude=0.0, pitch_amplitude=0.0, noise_scale=0.0)
SMALL = dict(n_keypoints=16, desc_dim=8, image_size=(8, 8), landmark_count=200)


def cfg(**kw):
    return ScenarioConfig(**{**SMALL, **FLAT, "duration": 3.0, **kw})


def test_zero_speed_gives_zero_motion():
    _, rels = generate_trajectory(cfg(speed_mean=0.0, speed_amplitude=0.0))
    for r in rels:
        assert np.all(r.as_array() == 0.0)


def test_constant_speed_straight_line():
    c = cfg(speed_mean=6.0, speed_amplitude=0.0, curvature_constant=0.0)
    _, rels = generate_trajectory(c)
    for r in rels:
        np.testing.assert_allclose(r.as_array(), [6.0 * 0.25, 0, 0, 0, 0, 0], atol=1e-9)


@pytest.mark.parametrize("kappa", [0.02, -0.05])
def test_constant_curvature_arc(kappa):
    v, T = 8.0, 0.25
    c = cfg(speed_mean=v, speed_amplitude=0.0, curvature_constant=kappa)
    _, rels = generate_trajectory(c)
    phi = v * T * kappa
    # chord of a circular arc of angle phi and radius 1/kappa
    want = [math.sin(phi) / kappa, (1 - math.cos(phi)) / kappa, 0, 0, 0, phi]
    for r in rels:
        np.testing.assert_allclose(r.as_array(), want, atol=1e-9)


def test_stored_poses_compose_to_dense_path():
    c = ScenarioConfig(**SMALL, duration=5.0, seed=9)
    dense = dense_trajectory(c)
    traj, _ = generate_trajectory(c, dense)
    idx = dense.frame_indices(c.n_radar_frames)
    p0 = dense.pose(idx[0])
    for k, i in enumerate(idx):
        r = relative_between(p0, dense.pose(i))
        np.testing.assert_allclose(traj.poses[k].translation, [r.dx, r.dy, r.dz], atol=1e-9)
        np.testing.assert_allclose(traj.poses[k].rotation, p0.rotation.T @ dense.pose(i).rotation, atol=1e-9)


def test_scene_trajectory_from_stored_relatives():
    s = generate_scene(ScenarioConfig(**SMALL, duration=5.0, seed=9))
    traj = s.trajectory()
    ref, _ = generate_trajectory(ScenarioConfig(**SMALL, duration=5.0, seed=9))
    for a, b in zip(traj.poses, ref.poses):
        np.testing.assert_allclose(a.matrix(), b.matrix(), atol=1e-9)
    np.testing.assert_array_equal(traj.timestamps, ref.timestamps)


def test_frame_count():
    c = ScenarioConfig(**SMALL, duration=76.0)
    assert c.n_radar_frames == 304
    assert len(generate_scene(replace(c, duration=10.0))) == 39


@pytest.mark.parametrize("bad", [dict(duration=0.0), dict(radar_rate=-1.0), dict(weather="foggy"),
                                 dict(segment_min=5.0, segment_max=4.0)])
def test_invalid_config(bad):
    with pytest.raises(ConfigError):
        ScenarioConfig(**bad)


def test_imu_straight_line_is_quiet():
    s = generate_scene(cfg(speed_mean=5.0, speed_amplitude=0.0, curvature_constant=0.0))
    imu = s.stack()["imu"]
    np.testing.assert_allclose(imu, 0.0, atol=1e-6)


def test_imu_on_circle():
    v, kappa = 6.0, 0.04
    s = generate_scene(cfg(speed_mean=v, speed_amplitude=0.0, curvature_constant=kappa))
    imu = s.stack()["imu"].reshape(-1, 6)
    np.testing.assert_allclose(imu[:, 1], v * v * kappa, rtol=1e-6)
    np.testing.assert_allclose(imu[:, 0], 0.0, atol=1e-6)
    np.testing.assert_allclose(imu[:, 5], v * kappa, rtol=1e-6)
    np.testing.assert_allclose(imu[:, [2, 3, 4]], 0.0, atol=1e-6)


def test_gyro_integrates_to_yaw_change():
    s = generate_scene(cfg(seed=2, duration=10.0))
    gt = s.stack()["gt_rel_pose"]
    gz = s.stack()["imu"][:, :, 5]
    np.testing.assert_allclose(gz.sum(1) * 0.25 / 48, gt[:, 5], atol=2e-4)


def test_radar_rigid_transform():
    s = generate_scene(cfg(seed=6, duration=4.0))
    checked = 0
    for f in s.frames:
        dx, dy, _, _, _, dyaw = f.gt_rel_pose
        c, sn = math.cos(dyaw), math.sin(dyaw)
        for row in f.keypoints1:
            hits = np.flatnonzero(np.all(f.keypoints0[:, 3:] == row[3:], axis=1))
            if not len(hits):
                continue  # landmark entered the view this frame
            p = f.keypoints0[hits[0], :2] - [dx, dy]
            want = [c * p[0] + sn * p[1], -sn * p[0] + c * p[1]]
            np.testing.assert_allclose(row[:2], want, atol=1e-9)
            checked += 1
    assert checked > 10 * len(s.frames)


def test_radar_stationary_frames_identical():
    s = generate_scene(cfg(speed_mean=0.0, speed_amplitude=0.0))
    for f in s.frames:
        assert np.array_equal(f.keypoints0, f.keypoints1)


def test_radar_descriptors_unit_and_scores_bounded():
    s = generate_scene(ScenarioConfig(**SMALL, weather="snowing", duration=3.0))
    kp = s.stack()["keypoints0"]
    np.testing.assert_allclose(np.linalg.norm(kp[..., 3:], axis=-1), 1.0, atol=1e-6)
    assert np.all((kp[..., 2] >= 0) & (kp[..., 2] <= 1))


def test_visual_stationary_clean():
    s = generate_scene(cfg(speed_mean=0.0, speed_amplitude=0.0))
    for f in s.frames:
        assert np.array_equal(f.image0, f.image1)


def test_visual_full_dropout():
    s = generate_scene(cfg(), WeatherProfile("blind", visual_dropout=1.0))
    assert np.all(s.stack()["image0"] == 0)


def test_visual_difference_grows_with_motion():
    diffs = []
    for v in (1.0, 2.0):
        s = generate_scene(cfg(speed_mean=v, speed_amplitude=0.0, curvature_constant=0.0))
        st = s.stack()
        diffs.append(np.abs(st["image1"] - st["image0"]).mean())
    assert diffs[1] > diffs[0] > 0


def test_weather_degradation_ordering():
    vis = [WEATHER_PROFILES[w].visual_noise_std for w in WEATHERS]
    drop = [WEATHER_PROFILES[w].visual_dropout for w in WEATHERS]
    assert WEATHERS == ("sunny", "cloudy", "overcast", "rainy", "snowing")
    assert vis == sorted(vis) and drop == sorted(drop)
    assert vis[-1] > vis[0] and drop[-1] > drop[0]
    assert WEATHER_PROFILES["snowing"].radar_jitter_std >= WEATHER_PROFILES["sunny"].radar_jitter_std


def test_weather_profile_validation():
    with pytest.raises(ConfigError):
        WeatherProfile("x", visual_dropout=1.5)
    with pytest.raises(ConfigError):
        WeatherProfile("x", imu_noise_std=-0.1)


def test_same_seed_same_scene():
    a = generate_scene(ScenarioConfig(**SMALL, seed=4, weather="rainy", duration=2.0))
    b = generate_scene(ScenarioConfig(**SMALL, seed=4, weather="rainy", duration=2.0))
    for k, v in a.stack().items():
        assert np.array_equal(v, b.stack()[k])
    c = generate_scene(ScenarioConfig(**SMALL, seed=5, weather="rainy", duration=2.0))
    assert not np.array_equal(a.stack()["imu"], c.stack()["imu"])


def test_rng_streams_are_named():
    assert rng_stream(1, "a").random() == rng_stream(1, "a").random()
    assert rng_stream(1, "a").random() != rng_stream(1, "b").random()
    assert rng_stream(1, "a").random() != rng_stream(2, "a").random()


def test_weather_suite():
    suite = weather_suite(ScenarioConfig(**SMALL), 3, "train_")
    assert [s.weather for s in suite] == list(WEATHERS)
    assert [s.name for s in suite] == [f"train_{w}" for w in WEATHERS]
    assert len({s.seed for s in suite}) == 5
