"""Experiment configuration document."""

import json
import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from singular.mcmc.errors import ConfigError
from singular.mcmc.model import load_model, registered_models

SEED_LIMIT = 2**64


class Mode(str, Enum):
    """What ``run`` does."""

    sample = "sample"
    theory = "theory"
    oracle = "oracle"
    fit = "fit"
    tune = "tune"
    schedule = "schedule"
    figure = "figure"


STOCHASTIC_MODES = {Mode.sample, Mode.tune, Mode.schedule, Mode.figure}


class FigureKind(str, Enum):
    """Figure data sets."""

    fig1 = "fig1"  # U against σ at fixed n
    fig2 = "fig2"  # U against n at fixed σ
    fig3 = "fig3"  # U against n along the constant-acceptance schedule


def _check_positive_list(name: str, values: List[float]) -> List[float]:
    if not values:
        raise ValueError(f"{name} must not be empty")
    for x in values:
        if not (x > 0 and math.isfinite(x)):
            raise ValueError(f"{name} entries must be positive finite, got {x}")
    return values


class GeometricLadder(BaseModel):
    """Replica ladder 10^(k/per_decade) between n_min and n_max."""

    model_config = ConfigDict(extra="forbid")

    n_min: float = Field(1.0, gt=0)
    n_max: float = Field(1e10, gt=0)
    per_decade: int = Field(1, ge=1)

    @model_validator(mode="after")
    def check_range(self):
        """n_max must not be below n_min."""
        if self.n_max < self.n_min:
            raise ValueError(f"n_max={self.n_max} is below n_min={self.n_min}")
        return self

    def values(self) -> List[float]:
        """Ladder scales, increasing."""
        lo = math.log10(self.n_min)
        hi = math.log10(self.n_max)
        count = int(math.floor((hi - lo) * self.per_decade + 1e-9))
        return [10.0 ** (lo + k / self.per_decade) for k in range(count + 1)]


class TuneSection(BaseModel):
    """Step-size recursion settings."""

    model_config = ConfigDict(extra="forbid")

    iterations: int = Field(200, ge=1)
    sweeps: int = Field(500, ge=20)
    a0: float = Field(1.0, gt=0)
    k0: int = Field(20, ge=0)
    sigma0: float = Field(1.0, gt=0)
    sigma_min: float = Field(1e-8, gt=0)
    sigma_max: float = Field(1e8, gt=0)
    companion_sigma: float = Field(1.0, gt=0)
    relative_error: bool = False
    max_log_step: float = Field(1.0, gt=0)
    burn_in: int = Field(500, ge=0)
    final_sweeps: int = Field(5000, ge=20)
    use_ladder: bool = False


class QuadratureSection(BaseModel):
    """Oracle grid sizes."""

    model_config = ConfigDict(extra="forbid")

    outer_nodes: int = Field(2048, ge=64)
    half_width: float = Field(8.0, gt=0)
    inner_nodes: int = Field(4096, ge=64)
    inner_half_width: float = Field(8.0, gt=0)
    order: int = Field(16, ge=2)


class ExperimentConfig(BaseModel):
    """One experiment. Coordinates are 1-based labels (w1, w2, ...)."""

    model_config = ConfigDict(extra="forbid")

    model: str = "w2w2"
    coords: List[int] = Field(default_factory=lambda: [1, 2])
    n_grid: List[float] = Field(default_factory=lambda: [10.0**k for k in range(4, 11)])
    sigma_grid: List[float] = Field(default_factory=lambda: [10.0 ** (0.5 * k) for k in range(9)])
    sweeps: int = Field(1_000_000, ge=1)
    burn_in: Optional[int] = Field(None, ge=0)
    swap_interval: int = Field(1, ge=1)
    ladder: Union[List[float], GeometricLadder] = Field(default_factory=GeometricLadder)
    seed: Optional[int] = None
    mode: Mode = Mode.sample
    output_path: str = "results"

    c_const: float = Field(1.0, gt=0)
    a_const: float = Field(1.0, gt=0)
    sigma_min: float = Field(10.0, gt=0)
    target_u: Optional[float] = Field(None, gt=0, lt=1)
    tune: TuneSection = Field(default_factory=TuneSection)
    quadrature: QuadratureSection = Field(default_factory=QuadratureSection)
    figure: FigureKind = FigureKind.fig1
    figure_n: float = Field(1e8, gt=0)
    figure_sigma: float = Field(1e3, gt=0)
    measurements_path: Optional[str] = None

    @field_validator("model")
    def check_model(cls, v):
        """Model must be registered."""
        key = v.strip().lower()
        if key not in registered_models():
            raise ValueError(f"unknown model {v!r}, expected one of {registered_models()}")
        return key

    @field_validator("n_grid", "sigma_grid")
    def check_grid(cls, v, info):
        """Grids are non-empty and positive."""
        return _check_positive_list(info.field_name, v)

    @field_validator("ladder")
    def check_ladder(cls, v):
        """Explicit ladders are strictly increasing and positive."""
        if isinstance(v, list):
            _check_positive_list("ladder", v)
            if any(b <= a for a, b in zip(v, v[1:])):
                raise ValueError("ladder must be strictly increasing")
        return v

    @field_validator("seed")
    def check_seed(cls, v):
        """Seeds are 64-bit unsigned integers."""
        if v is not None and not 0 <= v < SEED_LIMIT:
            raise ValueError(f"seed must satisfy 0 <= seed < 2**64, got {v}")
        return v

    @model_validator(mode="after")
    def check_consistency(self):
        """Cross-field rules."""
        if self.burn_in is not None and self.burn_in >= self.sweeps:
            raise ValueError(f"burn_in={self.burn_in} must be smaller than sweeps={self.sweeps}")
        if self.mode in STOCHASTIC_MODES and self.seed is None:
            raise ValueError(f"mode {self.mode.value} needs an explicit seed")
        if self.mode == Mode.tune and self.target_u is None:
            raise ValueError("mode tune needs target_u")
        if not self.coords:
            raise ValueError("coords must not be empty")
        dim = load_model(self.model, 1.0).dim
        for c in self.coords:
            if not 1 <= c <= dim:
                raise ValueError(f"coordinate label {c} out of range 1..{dim} for {self.model}")
        return self

    @property
    def resolved_burn_in(self) -> int:
        """Burn-in with the 10% default applied."""
        return self.sweeps // 10 if self.burn_in is None else self.burn_in

    def ladder_values(self) -> List[float]:
        """Ladder scales, increasing."""
        if isinstance(self.ladder, GeometricLadder):
            return self.ladder.values()
        return list(self.ladder)

    def echo(self) -> Dict[str, Any]:
        """Config with defaults resolved, for manifests."""
        data = self.model_dump(mode="json")
        data["burn_in"] = self.resolved_burn_in
        data["ladder_values"] = self.ladder_values()
        return data


def _line_of(text: str, key: Any) -> Optional[int]:
    needle = f'"{key}"'
    for lineno, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return lineno
    return None


def _error_line(text: str, loc) -> Optional[int]:
    for key in reversed([k for k in loc if isinstance(k, str)]):
        line = _line_of(text, key)
        if line is not None:
            return line
    return None


def parse_config(text: str, overrides: Optional[Dict[str, Any]] = None, path: str = "") -> ExperimentConfig:
    """Validate a JSON document, applying ``overrides`` on top."""
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg}", line=e.lineno, path=path) from e
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object", line=1, path=path)

    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value

    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        loc = first.get("loc", ())
        field = ".".join(str(k) for k in loc) or "<root>"
        raise ConfigError(
            f"{field}: {first.get('msg')}", line=_error_line(text, loc), path=path
        ) from e


def load_config(path: Optional[Union[str, Path]], overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Read and validate a config file (or only ``overrides`` when path is None)."""
    if path is None:
        return parse_config("", overrides)
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}", path=str(path)) from e
    return parse_config(text, overrides, str(path))


def dump_config(config: ExperimentConfig) -> str:
    """Serialize; ``parse_config(dump_config(c)) == c``."""
    return config.model_dump_json(indent=2)
