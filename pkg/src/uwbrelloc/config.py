"""Scenario and pipeline configuration documents (YAML or JSON).

A config either names a preset or lists robots explicitly, and carries
optional overrides for every noise model and estimator stage. Validation
errors name the offending field.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .particle_filter import FilterParams
from .pipeline import ESTIMATORS, PipelineParams
from .ranging import NodeLayout, RangeNoiseModel
from .simulator import PRESETS, MotionProfile, OdomNoiseModel, PathSpec, RobotSpec, Scenario, preset
from .solver import SolverConfig
from .window import WindowConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PathConfig(_Section):
    kind: Literal["rectangle", "square", "t_shape", "waypoints"] = "rectangle"
    width: float = 7.0
    height: float = 6.0
    origin: tuple[float, float] = (0.0, 0.0)
    heading: float = 0.0
    laps: int = Field(3, ge=1)
    waypoints: list[tuple[float, float]] = Field(default_factory=list)


class SquareLayout(_Section):
    square: float = Field(gt=0)


class RobotConfig(_Section):
    id: int = Field(ge=0)
    path: PathConfig = PathConfig()
    layout: Union[SquareLayout, list[tuple[float, float]]] = SquareLayout(square=0.5)
    static_pose: Optional[tuple[float, float, float]] = None

    def spec(self) -> RobotSpec:
        p = self.path
        path = PathSpec(p.kind, p.width, p.height, p.origin, p.heading, p.laps, tuple(p.waypoints))
        layout = NodeLayout.square(self.layout.square) if isinstance(self.layout, SquareLayout) else NodeLayout(tuple(self.layout))
        return RobotSpec(self.id, path, layout, self.static_pose)


class MotionConfig(_Section):
    speed: float = Field(0.2, gt=0)
    odom_rate: float = Field(20.0, gt=0)
    uwb_rate: float = Field(50.0, gt=0)
    turn_model: Literal["stop-and-turn", "arc"] = "stop-and-turn"
    turn_rate: float = Field(0.5, gt=0)
    turn_radius: float = Field(0.5, gt=0)


class RangeNoiseConfig(_Section):
    sigma_r: float = Field(0.1, ge=0)
    nlos_probability: float = Field(0.05, ge=0, le=1)
    nlos_bias_max: float = Field(0.5, ge=0)
    dropout_probability: float = Field(0.02, ge=0, le=1)


class OdomNoiseConfig(_Section):
    sigma_trans_per_meter: float = Field(0.05, ge=0)
    sigma_rot_per_rad: float = Field(0.05, ge=0)
    sigma_rot_per_meter: float = Field(0.02, ge=0)
    bias_drift: tuple[float, float, float] = (0.0, 0.0, 0.0)


class NoiseConfig(_Section):
    noise_free: bool = False
    range: RangeNoiseConfig = RangeNoiseConfig()
    odometry: OdomNoiseConfig = OdomNoiseConfig()


class SolverSection(_Section):
    max_iterations: int = Field(100, ge=1)
    cost_tolerance: float = Field(1e-9, gt=0)
    step_tolerance: float = Field(1e-10, gt=0)
    initial_damping: float = Field(1e-3, gt=0)
    num_restarts: int = Field(4, ge=1)


class WindowSection(_Section):
    window_size: int = Field(30, ge=1)
    anchor_policy: Literal["first-robot-first-frame"] = "first-robot-first-frame"
    odom_sigma_d: float = Field(0.1, gt=0)
    odom_sigma_theta: float = Field(0.05, gt=0)
    exact_marginals: bool = False
    max_iterations: int = Field(20, ge=1)
    nonconverged_scale: float = Field(0.01, ge=0)


class FilterSection(_Section):
    num_particles: int = Field(500, ge=1)
    sigma_d: float = Field(0.1, ge=0)
    sigma_theta: float = Field(0.05, ge=0)
    lambda_d: float = Field(1.0, gt=0)
    lambda_theta: float = Field(0.1, gt=0)
    resample_threshold: float = Field(0.5, gt=0, le=1)
    resample_every_tick: bool = False
    squared_lambda: bool = False
    init_std: tuple[float, float, float] = (0.5, 0.5, 0.3)
    range_sigma: float = Field(0.3, gt=0)


class ScenarioConfig(_Section):
    """Everything needed to simulate a dataset and run one estimator on it."""

    schema_version: int = SCHEMA_VERSION
    preset: Optional[str] = None
    spacing: float = Field(0.5, gt=0)
    laps: int = Field(3, ge=1)
    seed: int = Field(0, ge=0)
    tick_rate: float = Field(10.0, gt=0)
    max_range: float = Field(100.0, gt=0)
    duration: Optional[float] = Field(None, gt=0)
    robots: list[RobotConfig] = Field(default_factory=list)
    motion: MotionConfig = MotionConfig()
    noise: NoiseConfig = NoiseConfig()
    solver: SolverSection = SolverSection()
    window: WindowSection = WindowSection()
    filter: FilterSection = FilterSection()
    estimator: Literal[ESTIMATORS] = "pf_optimized"  # type: ignore[valid-type]
    burn_in: Optional[int] = Field(None, ge=0)

    @field_validator("schema_version")
    @classmethod
    def _version(cls, v: int) -> int:
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {v}; this build reads version {SCHEMA_VERSION}")
        return v

    @field_validator("preset")
    @classmethod
    def _known_preset(cls, v: Optional[str]) -> Optional[str]:
        if v is not None and v not in PRESETS:
            raise ValueError(f"unknown preset {v!r}; choose from {sorted(PRESETS)}")
        return v

    @model_validator(mode="after")
    def _robots_or_preset(self) -> ScenarioConfig:
        if self.preset is None and not self.robots:
            raise ValueError("either 'preset' or a non-empty 'robots' list is required")
        ids = [r.id for r in self.robots]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate robot ids in {ids}")
        return self

    def scenario(self) -> Scenario:
        nf = self.noise.noise_free
        if self.robots:
            robots = tuple(r.spec() for r in self.robots)
        else:
            robots = preset(self.preset, spacing=self.spacing, laps=self.laps).robots
        rn = RangeNoiseModel.noiseless() if nf else RangeNoiseModel(**self.noise.range.model_dump())
        on = OdomNoiseModel.noiseless() if nf else OdomNoiseModel(**self.noise.odometry.model_dump())
        return Scenario(
            robots,
            motion=MotionProfile(**self.motion.model_dump()),
            range_noise=rn,
            odom_noise=on,
            tick_rate=self.tick_rate,
            max_range=self.max_range,
            seed=self.seed,
            duration=self.duration,
        )

    def pipeline_params(self) -> PipelineParams:
        fp = self.filter.model_dump()
        if self.noise.noise_free:
            # exact data: injected process noise would only blur the estimate
            fp.update(sigma_d=0.0, sigma_theta=0.0, init_std=(0.0, 0.0, 0.0))
        return PipelineParams(
            solver=SolverConfig(**self.solver.model_dump()),
            window=WindowConfig(**self.window.model_dump()),
            filter=FilterParams(**fp),
            seed=self.seed,
            burn_in=self.burn_in,
        )

    def with_values(self, **updates: Any) -> ScenarioConfig:
        """Copy with dotted-path overrides, e.g. ``{"window.window_size": 80}``."""
        doc = self.model_dump()
        for dotted, value in updates.items():
            set_path(doc, dotted, value)
        return from_mapping(doc)


def set_path(doc: dict, dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = doc
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            raise ConfigError(f"{dotted}: '{k}' is not a config section")
        node = node[k]
    if keys[-1] not in node:
        raise ConfigError(f"{dotted}: unknown field '{keys[-1]}'")
    node[keys[-1]] = value


def _format(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        where = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{where}: {e['msg']}")
    return "invalid config: " + "; ".join(lines)


def from_mapping(doc: Any) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ConfigError("invalid config: top level must be a mapping")
    try:
        return ScenarioConfig.model_validate(copy.deepcopy(doc))
    except ValidationError as exc:
        raise ConfigError(_format(exc)) from None


def load_config(path: str | Path) -> ScenarioConfig:
    """Read a YAML or JSON config file (chosen by suffix; YAML otherwise)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text) if path.suffix.lower() == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    return from_mapping(doc if doc is not None else {})


def preset_config(name: str, seed: int = 0, **fields: Any) -> ScenarioConfig:
    return from_mapping({"preset": name, "seed": seed, **fields})
