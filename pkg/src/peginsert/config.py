"""Experiment configuration: one flat TOML file with dotted section keys.

Example::

    seed = 7
    contact.wrench_noise_sigma = [0.05, 0.05, 0.05, 0.5, 0.5, 0.5]
    gac.gamma = 0.5
    policy.step_size = 2.0

Every field has a default, so an empty file (or no file at all) gives the
reference experiment.  Unknown sections or keys are rejected.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .contact import ContactConfig
from .gac import Detector, GacConfig


class ConfigError(ValueError):
    pass


@dataclass
class DmpSettings:
    n_basis: int = 50
    alpha: float = 25.0

    def __post_init__(self):
        if self.n_basis < 1 or not self.alpha > 0:
            raise ValueError("dmp.n_basis must be >= 1 and dmp.alpha > 0")


@dataclass
class DemoSettings:
    """Synthetic minimum-jerk demonstration.

    ``goal = None`` means "hole centre, ``standoff`` mm above the plate".
    """

    start: tuple = (-40.0, 30.0, 60.0)
    goal: tuple | None = None
    standoff: float = 1.0
    duration: float = 30.0  # s
    rate: float = 280.0  # Hz

    def __post_init__(self):
        self.start = tuple(float(v) for v in self.start)
        if self.goal is not None:
            self.goal = tuple(float(v) for v in self.goal)
            if len(self.goal) != 3:
                raise ValueError("demo.goal must be a 3-vector")
        if len(self.start) != 3:
            raise ValueError("demo.start must be a 3-vector")
        if not self.duration > 0:
            raise ValueError("demo.duration must be positive")
        if not self.rate > 0:
            raise ValueError("demo.rate must be positive")


@dataclass
class GpSettings:
    lengthscale: float = 1.0
    rbf_variance: float | None = None  # None: variance of the targets
    white_fraction: float = 0.01  # initial white variance relative to rbf_variance
    restarts: int = 4
    max_iter: int = 200
    tol: float = 1e-6
    train_fraction: float = 0.8
    n_splits: int = 50

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("gp.train_fraction must lie in (0, 1)")
        if self.restarts < 1 or self.max_iter < 1 or self.n_splits < 1:
            raise ValueError("gp.restarts, gp.max_iter and gp.n_splits must be >= 1")
        if not (self.lengthscale > 0 and self.white_fraction > 0):
            raise ValueError("gp.lengthscale and gp.white_fraction must be positive")


@dataclass
class PolicyConfig:
    step_size: float = 2.0  # mm
    max_attempts: int = 10
    divergence_limit: float = 15.0  # mm
    approach_duration: float = 30.0  # s, descent phase after the DMP approach
    descent_speed: float = 0.01  # mm per control step
    contact_force: float = 0.5  # N, minimum |fz| before a window counts as steady

    def __post_init__(self):
        for name in ("step_size", "max_attempts", "divergence_limit", "approach_duration", "descent_speed"):
            if not getattr(self, name) > 0:
                raise ValueError(f"policy.{name} must be positive")


@dataclass
class DetectorSettings:
    window: int = 280
    block: int = 28
    force_tol: float = 0.05
    moment_tol: float = 0.5

    def __post_init__(self):
        if self.window < 1 or not 1 <= self.block <= self.window:
            raise ValueError("detector.block must lie in [1, detector.window]")

    def build(self, contact_force=None) -> Detector:
        return Detector(self.window, self.block, self.force_tol, self.moment_tol, contact_force)


@dataclass
class CampaignSettings:
    n_episodes: int = 100
    error_mode: str = "uniform"  # or "bias"
    bias: tuple = (4.0, 3.0)  # mm, constant goal-estimate bias in "bias" mode
    bias_sigma: float = 1.0  # mm, per-axis Gaussian spread around the bias

    def __post_init__(self):
        self.bias = tuple(float(v) for v in self.bias)
        if self.error_mode not in ("uniform", "bias"):
            raise ValueError("campaign.error_mode must be 'uniform' or 'bias'")
        if self.n_episodes < 1 or self.bias_sigma < 0:
            raise ValueError("campaign.n_episodes must be >= 1 and bias_sigma >= 0")


@dataclass
class CollectSettings:
    n_trials: int = 1200
    chunk: int = 200

    def __post_init__(self):
        if self.n_trials < 1 or self.chunk < 1:
            raise ValueError("collect.n_trials and collect.chunk must be >= 1")


@dataclass
class ExperimentConfig:
    contact: ContactConfig = field(default_factory=ContactConfig)
    gac: GacConfig = field(default_factory=GacConfig)
    dmp: DmpSettings = field(default_factory=DmpSettings)
    demo: DemoSettings = field(default_factory=DemoSettings)
    gp: GpSettings = field(default_factory=GpSettings)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    detector: DetectorSettings = field(default_factory=DetectorSettings)
    campaign: CampaignSettings = field(default_factory=CampaignSettings)
    collect: CollectSettings = field(default_factory=CollectSettings)
    seed: int | None = None  # None: fresh entropy, reported by the CLI
    out: str = "out"

    def demo_goal(self) -> np.ndarray:
        if self.demo.goal is not None:
            return np.asarray(self.demo.goal)
        hx, hy = self.contact.hole_center
        return np.array([hx, hy, self.contact.surface_height + self.demo.standoff])

    def replace(self, **sections) -> "ExperimentConfig":
        return dataclasses.replace(self, **sections)


SECTIONS = {f.name: f for f in dataclasses.fields(ExperimentConfig) if dataclasses.is_dataclass(f.default_factory)}


def _plain(value):
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, tuple):
        value = list(value)
    if isinstance(value, list):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def to_flat(cfg: ExperimentConfig) -> dict:
    flat = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if f.name in SECTIONS:
            for sub in dataclasses.fields(value):
                flat[f"{f.name}.{sub.name}"] = _plain(getattr(value, sub.name))
        else:
            flat[f.name] = _plain(value)
    return flat


def from_flat(flat: dict) -> ExperimentConfig:
    """Build a config from ``{"section.key": value}`` pairs, rejecting unknown keys."""
    grouped: dict[str, dict] = {name: {} for name in SECTIONS}
    top = {}
    top_names = {f.name for f in dataclasses.fields(ExperimentConfig)} - set(SECTIONS)
    for key, value in flat.items():
        section, _, name = key.partition(".")
        if name:
            if section not in SECTIONS:
                raise ConfigError(f"unknown config section '{section}'")
            allowed = {f.name for f in dataclasses.fields(SECTIONS[section].default_factory)}
            if name not in allowed:
                raise ConfigError(f"unknown config key '{key}'")
            grouped[section][name] = value
        elif key in top_names:
            top[key] = value
        else:
            raise ConfigError(f"unknown config key '{key}'")
    try:
        sections = {name: SECTIONS[name].default_factory(**kw) for name, kw in grouped.items()}
        cfg = ExperimentConfig(**sections, **top)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.seed is not None and (isinstance(cfg.seed, bool) or not isinstance(cfg.seed, int)):
        raise ConfigError("seed must be an integer")
    return cfg


def _flatten(tree: dict, prefix: str = "") -> dict:
    flat = {}
    for key, value in tree.items():
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{prefix}{key}."))
        else:
            flat[prefix + key] = value
    return flat


def loads(text: str) -> ExperimentConfig:
    try:
        tree = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return from_flat(_flatten(tree))


def load(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text)


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, list):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"cannot write {type(value).__name__} to config")


def dumps(cfg: ExperimentConfig) -> str:
    """Serialise every effective setting; ``None`` values are left out."""
    lines = [f"{key} = {_toml_value(value)}" for key, value in to_flat(cfg).items() if value is not None]
    return "\n".join(lines) + "\n"


def dump(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(dumps(cfg))
