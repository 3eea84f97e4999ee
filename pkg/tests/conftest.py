import os

import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

from mmodom.learn.model import ModelConfig
from mmodom.synthsim import ScenarioConfig, generate_scene

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

torch.set_default_dtype(torch.float64)

# acceptance criteria record their verdicts here; printed at session end
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_model_cfg():
    return ModelConfig(
        n_keypoints=16, desc_dim=8, image_size=(8, 8), f_radar=16, f_visual=16, f_imu=16, hidden=32
    )


@pytest.fixture(scope="session")
def small_scene_cfg():
    return ScenarioConfig(
        name="small", seed=3, duration=3.0, n_keypoints=16, desc_dim=8, image_size=(8, 8),
        landmark_count=300,
    )


@pytest.fixture(scope="session")
def small_scene(small_scene_cfg):
    return generate_scene(small_scene_cfg)
