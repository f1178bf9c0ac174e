"""Validated configuration schema shared by the harness and the command line.

Configs are YAML (or JSON) documents; unknown keys are rejected everywhere.
Conversion helpers turn sections into the runtime dataclasses.
"""
from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SystemSection(_Strict):
    name: Literal["vdp", "fourtank", "esp"]
    params: dict[str, float] = Field(default_factory=dict)


class SignalSection(_Strict):
    kind: Literal["aprbs", "prbs"] = "aprbs"
    low: list[float]
    high: list[float]
    hold_min: int = Field(ge=1)
    hold_max: int = Field(ge=1)

    @model_validator(mode="after")
    def _ordered(self):
        if len(self.low) != len(self.high):
            raise ValueError("low and high need one entry per input channel")
        if any(lo > hi for lo, hi in zip(self.low, self.high)):
            raise ValueError("low must not exceed high")
        if self.hold_min > self.hold_max:
            raise ValueError("hold_min must not exceed hold_max")
        return self


class SplitSection(_Strict):
    n_te: int = Field(ge=2)
    n_ve: int = Field(ge=0)
    n_f: int = Field(ge=0)
    n_test: int = Field(ge=0)


class DataSection(_Strict):
    system: SystemSection
    signal: SignalSection
    split: SplitSection
    dt: float = Field(gt=0)
    y0: list[float]
    scale_outputs: bool = False
    scale_inputs: bool = False


class ReservoirSection(_Strict):
    n_x: int = Field(ge=1)
    alpha: float = Field(default=1.0, gt=0, le=1)
    rho: float = Field(default=0.8, gt=0, lt=1)
    delta_in: float = Field(default=0.1, ge=0)
    delta_fb: float = Field(default=0.1, ge=0)
    delta_b: float = Field(default=0.0, ge=0)


class GridSection(_Strict):
    delta_in: list[float] = Field(min_length=1)
    delta_fb: list[float] = Field(min_length=1)
    gamma: list[float] = Field(min_length=1)
    alpha: Optional[list[float]] = None
    rho: Optional[list[float]] = None


class TrainingSection(_Strict):
    m_outer: int = Field(default=50, ge=1)
    k_inner: int = Field(default=20, ge=1)
    gamma: float = Field(default=1e-6, ge=0)
    washout: int = Field(default=0, ge=0)
    optimizer: Literal["lbfgs", "adam"] = "lbfgs"
    lr: float = Field(default=1e-3, gt=0)
    memory: int = Field(default=10, ge=1)
    lambda_data: float = Field(default=1.0, gt=0)
    lambda_phy: float = Field(default=1.0, gt=0)
    # parameters of the plant model used inside the physics loss (defaults: the data plant)
    physics_params: dict[str, float] = Field(default_factory=dict)


class DisturbanceSection(_Strict):
    step: int = Field(default=300, ge=0)
    input_offset: list[float] = Field(default_factory=list)
    state_offset: list[float] = Field(default_factory=list)


class MpcSection(_Strict):
    n_y_horizon: int = 10
    n_u_horizon: int = 3
    q_weight: float = 5.0
    r_weight: float = 1.0
    b_filter: float = 0.6
    u_min: list[float] = Field(default_factory=lambda: [0.0, 0.0])
    u_max: list[float] = Field(default_factory=lambda: [5.0, 5.0])
    y_min: list[float] = Field(default_factory=lambda: [0.0, 0.0])
    y_max: list[float] = Field(default_factory=lambda: [3.0, 3.0])
    outputs: list[int] = Field(default_factory=lambda: [0, 1])
    slack_penalty: float = 1e6
    sync: Literal["parallel", "teacher"] = "parallel"
    references: list[list[float]] = Field(default_factory=lambda: [[1.5, 1.0], [2.0, 1.5], [1.0, 0.8], [1.8, 1.2]])
    hold: int = Field(default=150, ge=1)
    steps: int = Field(default=600, ge=1)
    n_warm: int = Field(default=100, ge=0)
    u0: list[float] = Field(default_factory=lambda: [2.5, 2.5])
    y0: Optional[list[float]] = None
    disturbance: Optional[DisturbanceSection] = Field(default_factory=lambda: DisturbanceSection(input_offset=[-0.5, 0.0]))


ExperimentKind = Literal["comparison", "reservoir_sweep", "datasize_sweep", "robustness", "esp", "mpc"]
ModelName = Literal["esn", "pi-fixed", "pi-adaptive"]


class ExperimentSection(_Strict):
    kind: ExperimentKind
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2])
    # input-signal seeds; None pairs each reservoir seed with the same data seed
    data_seeds: Optional[list[int]] = None
    # "zip": seeds[i] with data_seeds[i] (a single data seed is shared); "product": every combination
    pairing: Literal["zip", "product"] = "zip"
    models: list[ModelName] = Field(default_factory=lambda: ["esn", "pi-adaptive"])
    # swept values: n_x for reservoir_sweep, labelled length for datasize_sweep, mu for robustness
    sweep: list[float] = Field(default_factory=list)
    workers: int = Field(default=1, ge=0)  # 0: one per CPU


class Thresholds(_Strict):
    """Acceptance checks evaluated on the aggregate table (exit code 3 on failure)."""

    min_test_reduction: Optional[float] = None
    min_collocation_reduction: Optional[float] = None
    ordering: Optional[list[ModelName]] = None  # best first, compared on mean test MSE / IAE
    # PI-ESN-a must beat the ESN on test MSE in more than this fraction of runs, per setting
    min_win_fraction: Optional[float] = Field(default=None, ge=0, lt=1)


class RunConfig(_Strict):
    seed: int = 0
    output_dir: str = "out"
    data: Optional[DataSection] = None
    reservoir: Optional[ReservoirSection] = None
    training: TrainingSection = Field(default_factory=TrainingSection)
    search: Optional[GridSection] = None
    mpc: Optional[MpcSection] = None
    experiment: Optional[ExperimentSection] = None
    thresholds: Thresholds = Field(default_factory=Thresholds)
    mode: Literal["esn-only", "pi-fixed", "pi-adaptive"] = "pi-adaptive"

    @field_validator("output_dir")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("output_dir must not be empty")
        return v


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{path}: {err['msg']}")
    return "; ".join(lines)


def parse_config(doc: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def load_config(path) -> RunConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(doc)


def require(cfg: RunConfig, *sections: str) -> None:
    missing = [s for s in sections if getattr(cfg, s) is None]
    if missing:
        raise ConfigError(f"missing config section(s): {', '.join(missing)}")
