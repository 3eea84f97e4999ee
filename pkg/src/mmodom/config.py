"""Run configuration: one YAML file drives every CLI command."""
from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError
from .evalkit import DESK_LENGTHS
from .head import PoseWeights
from .learn.model import ModelConfig
from .learn.train import TrainConfig
from .synthsim import ScenarioConfig, weather_suite


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads ``1e-4`` (no dot) as a float, as YAML 1.2 does."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


def _yaml(text: str):
    return yaml.load(text, Loader=_Loader)


@dataclass(frozen=True)
class SuiteSpec:
    """A five-weather group of scenarios."""

    prefix: str
    split: str  # "train" or "test"
    seed_offset: int = 0
    overrides: dict[str, Any] = field(default_factory=dict)


DEFAULT_SUITES = (
    SuiteSpec("train_", "train", 1),
    SuiteSpec("test_", "test", 2, {"duration": 40.0}),
)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    suites: tuple[SuiteSpec, ...] = DEFAULT_SUITES
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    pose_weights: Any = "default"  # "default", "dataset" or six explicit floats
    lam: float = 1.0
    lengths: tuple[float, ...] = DESK_LENGTHS
    scenes_dir: str = "scenes"
    run_dir: str = "run"
    reports_dir: str = "reports"

    def scenarios(self) -> list[tuple[str, ScenarioConfig]]:
        """``(split, scenario)`` pairs for every configured scene."""
        out = []
        base = replace(
            self.scenario,
            n_keypoints=self.model.n_keypoints,
            desc_dim=self.model.desc_dim,
            image_size=self.model.image_size,
        )
        for s in self.suites:
            try:
                b = replace(base, **s.overrides)
            except TypeError as e:
                raise ConfigError(f"suite {s.prefix!r}: {e}") from e
            for sc in weather_suite(b, self.seed * 10 + s.seed_offset, s.prefix):
                out.append((s.split, sc))
        return out

    def fixed_weights(self) -> PoseWeights | None:
        """Explicit or default calibrated weights; None when they come from the data."""
        pw = self.pose_weights
        if pw == "default":
            return PoseWeights(lam=self.lam)
        if pw == "dataset":
            return None
        if isinstance(pw, (list, tuple)):
            return PoseWeights(tuple(pw), self.lam)
        raise ConfigError(f"pose_weights must be 'default', 'dataset' or 6 numbers, got {pw!r}")


def _build(cls, data: Any, where: str):
    if isinstance(data, cls):
        return data
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {unknown}; allowed: {sorted(names)}")
    try:
        return cls(**data)
    except ConfigError as e:
        raise ConfigError(f"{where}: {e}") from e
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from e


def config_from_dict(d: dict[str, Any]) -> RunConfig:
    d = dict(d or {})
    top = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(d) - top)
    if unknown:
        raise ConfigError(f"config: unknown field(s) {unknown}; allowed: {sorted(top)}")
    kw = dict(d)
    if "scenario" in d:
        kw["scenario"] = _build(ScenarioConfig, d["scenario"], "scenario")
    if "model" in d:
        kw["model"] = _build(ModelConfig, d["model"], "model")
    train = dict(d.get("train") or {})
    if "seed" in d:
        train.setdefault("seed", d["seed"])
    kw["train"] = _build(TrainConfig, train, "train")
    if "suites" in d:
        if not isinstance(d["suites"], list):
            raise ConfigError("suites: expected a list")
        kw["suites"] = tuple(_build(SuiteSpec, s, f"suites[{i}]") for i, s in enumerate(d["suites"]))
        for s in kw["suites"]:
            if s.split not in ("train", "test"):
                raise ConfigError(f"suites: split must be 'train' or 'test', got {s.split!r}")
    if "lengths" in d:
        try:
            kw["lengths"] = tuple(float(x) for x in d["lengths"])
        except (TypeError, ValueError) as e:
            raise ConfigError(f"lengths: {e}") from e
        if not kw["lengths"] or min(kw["lengths"]) <= 0:
            raise ConfigError("lengths: need at least one positive length")
    if "seed" in d and not isinstance(d["seed"], int):
        raise ConfigError("seed: must be an integer")
    cfg = RunConfig(**kw)
    if cfg.pose_weights != "dataset":
        cfg.fixed_weights()
    cfg.scenarios()
    return cfg


def apply_override(d: dict[str, Any], assignment: str) -> None:
    """Apply ``a.b.c=value`` (value parsed as YAML) to a nested dict in place."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} must look like key.path=value")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = d
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {assignment!r}: {p} is not a mapping")
    node[parts[-1]] = _yaml(raw)


def load_config(path: str | Path | None, overrides: list[str] = ()) -> RunConfig:
    d: dict[str, Any] = {}
    if path is not None:
        try:
            d = _yaml(Path(path).read_text()) or {}
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: not valid YAML: {e}") from e
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    for o in overrides:
        apply_override(d, o)
    return config_from_dict(d)
