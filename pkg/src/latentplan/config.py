"""Experiment configuration: TOML schema, strict validation, round-trip.

The config file has five sections (world, planner, valuation, flow, geolab)
plus a handful of top-level keys. Every field has a default, so an empty
file is a valid config; unknown keys are hard errors that name the
offending key, and cross-field constraints are checked at load time.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from .planner import PlannerConfig
from .valuation import RewardWeights
from .worldgen import PointMassWorld


class ConfigError(Exception):
    """Invalid configuration; rendered to the user and mapped to exit code 2."""


@dataclass(frozen=True)
class WorldConfig:
    dt: float = 0.1
    start: tuple = (0.3, 0.3, 0.0, 0.0)
    goal: tuple = (1.91, 1.91)
    obstacles: tuple = ((1.4, 1.4, 0.22),)
    workspace: tuple = (0.0, 2.0, 0.0, 2.0)
    horizon: int = 64
    knots: int = 8
    accel_limit: float = 1.5
    image_size: int = 32
    goal_radius: float = 0.12
    agent_radius: float = 0.1

    def build(self) -> PointMassWorld:
        try:
            return PointMassWorld(
                dt=self.dt,
                start=tuple(self.start),
                goal=tuple(self.goal),
                obstacles=tuple(tuple(ob) for ob in self.obstacles),
                workspace=tuple(self.workspace),
                horizon=self.horizon,
                knots=self.knots,
                accel_limit=self.accel_limit,
                image_size=self.image_size,
                goal_radius=self.goal_radius,
                agent_radius=self.agent_radius,
            )
        except ValueError as exc:
            raise ConfigError(f"world: {exc}") from exc


@dataclass(frozen=True)
class ValuationConfig:
    gamma: float = 0.99
    value_len: int = 8
    noise_scale: float = 0.0
    obstacle_weight: float = 25.0
    success_threshold_frac: float = 0.05
    w_img_mse: float = 1.0 / 16.0
    w_img_ssim: float = 1.0 / 16.0
    w_state_prox: float = 1.0 / 16.0
    w_vel: float = -1.0 / 16.0
    w_acc: float = -1.0 / 16.0
    w_act_vel: float = -0.1 / 16.0
    w_act_acc: float = -0.1 / 16.0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.value_len < 2:
            raise ValueError("value_len must be at least 2")
        if self.noise_scale < 0.0 or self.obstacle_weight < 0.0:
            raise ValueError("noise_scale and obstacle_weight must be non-negative")
        if not 0.0 < self.success_threshold_frac < 1.0:
            raise ValueError("success_threshold_frac must lie in (0, 1)")

    def weights(self) -> RewardWeights:
        return RewardWeights(
            w_img_mse=self.w_img_mse,
            w_img_ssim=self.w_img_ssim,
            w_state_prox=self.w_state_prox,
            w_vel=self.w_vel,
            w_acc=self.w_acc,
            w_act_vel=self.w_act_vel,
            w_act_acc=self.w_act_acc,
        )


@dataclass(frozen=True)
class FlowConfig:
    hidden: int = 64
    batch: int = 256
    dataset: int = 2048
    elite_frac: float = 0.5
    steps_vid: int = 1200
    steps_val: int = 1200
    steps_act: int = 1200
    lr_vid: float = 3e-4
    lr_val: float = 5e-5
    lr_act: float = 5e-5
    euler_steps: int = 100

    def __post_init__(self):
        if min(self.hidden, self.batch, self.dataset, self.euler_steps) < 1:
            raise ValueError("hidden, batch, dataset, euler_steps must be positive")
        if min(self.steps_vid, self.steps_val, self.steps_act) < 1:
            raise ValueError("stage step counts must be positive")
        if not 0.0 < self.elite_frac <= 1.0:
            raise ValueError("elite_frac must lie in (0, 1]")
        if min(self.lr_vid, self.lr_val, self.lr_act) <= 0.0:
            raise ValueError("learning rates must be positive")


@dataclass(frozen=True)
class GeolabConfig:
    horizons: tuple = (1, 2, 4, 8)
    dim_state: int = 1
    dim_action: int = 1
    epsilon: float = 0.05
    delta: float = 0.1
    off_scale: float = 2.0
    # > 0 switches the sweep to the growing-intrinsic-dimension regime with
    # d = max(1, round(intrinsic_rate * H)).
    intrinsic_rate: float = 0.0
    n_uniform: int = 1_000_000
    n_latent: int = 100_000
    cmp_p_oneshot: float = 0.01
    cmp_p_advantage: float = 0.001
    cmp_budget: int = 100
    cmp_repetitions: int = 2000
    cmp_K: int = 4
    cmp_M: int = 25
    cmp_N: int = 1
    cmp_K1: int = 4
    cmp_K2: int = 16
    cmp_alpha: float = 0.8
    cmp_beta: float = 0.3
    cmp_sigma_decay: float = 1.0
    cmp_latent_dim: int = 8


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    out_dir: str = "runs/latest"
    episodes: int = 20
    episode_steps: int = 64
    stride: int = 16
    workers: int = 1
    world: WorldConfig = field(default_factory=WorldConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    valuation: ValuationConfig = field(default_factory=ValuationConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    geolab: GeolabConfig = field(default_factory=GeolabConfig)


_SECTIONS = {
    "world": WorldConfig,
    "planner": PlannerConfig,
    "valuation": ValuationConfig,
    "flow": FlowConfig,
    "geolab": GeolabConfig,
}
_TOP_LEVEL = {"seed", "out_dir", "episodes", "episode_steps", "stride", "workers"}


def _coerce(value):
    if isinstance(value, list):
        return tuple(_coerce(v) for v in value)
    return value


def _build_section(name: str, cls, data: dict):
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown key: {name}.{key}")
    try:
        return cls(**{k: _coerce(v) for k, v in data.items()})
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    kwargs = {}
    for key, value in raw.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"section {key} must be a table")
            kwargs[key] = _build_section(key, _SECTIONS[key], value)
        elif key in _TOP_LEVEL:
            kwargs[key] = _coerce(value)
        else:
            raise ConfigError(f"unknown key: {key}")
    config = ExperimentConfig(**kwargs)
    validate_config(config)
    return config


def validate_config(config: ExperimentConfig) -> None:
    """Cross-field constraints not expressible per-section."""
    p, w, v = config.planner, config.world, config.valuation
    if config.episodes < 1:
        raise ConfigError("episodes: must be >= 1")
    if config.workers < 1:
        raise ConfigError("workers: must be >= 1")
    if not 1 <= config.stride <= p.chunk_len:
        raise ConfigError("stride: need 1 <= stride <= planner.chunk_len")
    if config.episode_steps < 1:
        raise ConfigError("episode_steps: must be >= 1")
    if p.chunk_len > w.horizon:
        raise ConfigError(
            f"planner.chunk_len ({p.chunk_len}) exceeds world.horizon ({w.horizon})"
        )
    if p.d_vid != 2 * w.knots:
        raise ConfigError(
            f"planner.d_vid ({p.d_vid}) must equal 2 * world.knots ({2 * w.knots})"
        )
    if p.d_val < v.value_len:
        raise ConfigError(
            f"planner.d_val ({p.d_val}) must be >= valuation.value_len ({v.value_len})"
        )
    config.world.build()  # surface world geometry errors at load time


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text())


def _format_toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(_format_toml_value(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {type(value)} to TOML")


def dumps_config(config: ExperimentConfig) -> str:
    """Serialize with every field explicit; parse_config round-trips it."""
    lines = []
    for f in fields(ExperimentConfig):
        if f.name in _TOP_LEVEL:
            lines.append(f"{f.name} = {_format_toml_value(getattr(config, f.name))}")
    for section, cls in _SECTIONS.items():
        lines.append("")
        lines.append(f"[{section}]")
        value = getattr(config, section)
        for sub in fields(cls):
            lines.append(
                f"{sub.name} = {_format_toml_value(getattr(value, sub.name))}"
            )
    return "\n".join(lines) + "\n"


def replace_planner(config: ExperimentConfig, **overrides) -> ExperimentConfig:
    """Copy of the config with planner fields overridden and re-validated."""
    try:
        planner = dataclasses.replace(config.planner, **overrides)
    except ValueError as exc:
        raise ConfigError(f"planner: {exc}") from exc
    updated = dataclasses.replace(config, planner=planner)
    validate_config(updated)
    return updated
