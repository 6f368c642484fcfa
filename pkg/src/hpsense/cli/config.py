"""Run configuration: a YAML tree validated into nested pydantic models."""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..noise import DeviceProfile
from ..protocol import PhysicsParams
from ..stats.data import FrequencyGrid


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class MapSpec(_Strict):
    p_e_values: list[float] = Field(default_factory=lambda: [i / 100 for i in range(21)])
    frequencies_ghz: list[float] | None = None

    @model_validator(mode="after")
    def _check(self):
        if not self.p_e_values or any(not 0 <= p <= 1 for p in self.p_e_values):
            raise ValueError("p_e_values must be a non-empty list in [0, 1]")
        return self


class SpeedupSpec(_Strict):
    r_values: list[float] = Field(default_factory=lambda: [0.001, 0.003, 0.01, 0.02, 0.05])
    p_values: list[float] = Field(default_factory=lambda: [0.001, 0.003, 0.01, 0.02, 0.05])
    base_shot_factor: int = Field(2, ge=1)


class ProjectionSpec(_Strict):
    years: list[float] = Field(default_factory=lambda: [1.0, 3.0])
    f_min_ghz: float = Field(2.5, gt=0)
    f_max_ghz: float = Field(6.0, gt=0)
    band_mhz: float = Field(300.0, gt=0)
    step_khz: float = Field(100.0, gt=0)
    qubits_per_band: int = Field(10, ge=2)
    overhead_us: float = Field(30.0, ge=0)
    masses_ghz: list[float] | None = None
    half_width_bins: int = Field(40, ge=4)
    many_qubit_limit: bool = True

    @property
    def n_bands(self) -> int:
        return int(math.ceil((self.f_max_ghz - self.f_min_ghz) * 1e3 / self.band_mhz - 1e-9))

    def band_edges(self) -> list[tuple[float, float]]:
        w = self.band_mhz * 1e-3
        # the last band is clipped at f_max
        return [(self.f_min_ghz + i * w, min(self.f_min_ghz + (i + 1) * w, self.f_max_ghz))
                for i in range(self.n_bands)]

    def masses(self) -> list[float]:
        if self.masses_ghz is not None:
            return list(self.masses_ghz)
        step = self.step_khz * 1e-6
        # band centres snapped onto the probe-frequency lattice
        return [self.f_min_ghz + round((0.5 * (a + b) - self.f_min_ghz) / step) * step
                for a, b in self.band_edges()]


class LeakageSpec(_Strict):
    anharmonicity_mhz: float = Field(200.0, gt=0)
    f_q_ghz: float = Field(5.0, gt=0)
    ratios: list[float] = Field(default_factory=lambda: [1e-6, 3e-6, 1e-5, 3e-5, 1e-4])


class ValidateSpec(_Strict):
    f_q_ghz: float = Field(5.0, gt=0)
    rabi_period_us: float = Field(10.0, gt=0)
    curve_points: int = Field(20, ge=2)
    trotter_tolerance: float = 1e-3
    wilks_toys: int = Field(500, ge=0)
    wilks_grid: FrequencyGrid = FrequencyGrid(f_min=4.3, f_max=4.7, step_mhz=2.0)
    wilks_shots: int = Field(100_000, ge=1)
    wilks_mode: Literal["base", "enh"] = "base"


class RunConfig(_Strict):
    physics: PhysicsParams = PhysicsParams()
    profile: DeviceProfile = DeviceProfile()
    grid: FrequencyGrid = FrequencyGrid()
    shots: int = Field(1_000_000, ge=1)
    base_shots: int | None = Field(None, ge=1)
    n_toys: int = Field(100, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    mode: Literal["base", "enh", "combined"] = "enh"
    combined_mode: Literal["tied", "independent"] = "tied"
    window_bins: float = Field(5.0, gt=0)
    asimov: bool = False
    output_dir: str = "results"
    map: MapSpec = MapSpec()
    speedup: SpeedupSpec = SpeedupSpec()
    project: ProjectionSpec = ProjectionSpec()
    leakage: LeakageSpec = LeakageSpec()
    validate_: ValidateSpec = Field(ValidateSpec(), alias="validate")

    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    @property
    def baseline_shots(self) -> int:
        return self.base_shots if self.base_shots is not None else self.shots

    def dump(self) -> dict:
        return self.model_dump(mode="json", by_alias=True)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.dump(), sort_keys=True).encode()).hexdigest()


def parse_config(doc: dict | None) -> RunConfig:
    doc = doc or {}
    if "command" in doc and "config" in doc:  # a run manifest
        doc = doc["config"]
    try:
        return RunConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
        doc = yaml.safe_load(text)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if doc is not None and not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    return parse_config(doc)
