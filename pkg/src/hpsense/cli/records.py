"""Output record models; their JSON schemas ship in ``hpsense/schemas``."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from pydantic import BaseModel, ConfigDict


class _Record(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Manifest(_Record):
    command: str
    argv: list[str]
    version: str
    seed: int
    threads: int
    config: dict
    config_sha256: str
    started_utc: str
    wall_time_s: float
    exit_code: int
    outputs: list[str]


class MapRow(_Record):
    """``p_tilde_obs`` is P(S=0 | success); ``one_minus_p_tilde`` is ``1 - p_tilde_obs``."""

    f_ghz: float
    p_e: float
    p_base_obs: float
    p_tilde_obs: float
    p_success_obs: float
    one_minus_p_tilde: float
    p_tilde_ideal: float
    p_success_ideal: float


class PValuePoint(_Record):
    epsilon: float
    p_value: float


class ExclusionRecord(_Record):
    epsilon_95: float
    mode: str
    n_toys: int
    shots: int
    asimov: bool
    combined_ancilla: bool
    pvalue_curve: list[PValuePoint]
    meta: dict


class ToyFitRecord(_Record):
    toy_index: int
    histogram: str
    q: float
    p_value: float


class SpeedupCell(_Record):
    r: float
    p: float
    eps_base_95: float | None
    eps_enh_95: float | None
    speedup: float | None
    error: str | None


class ProjectionPoint(_Record):
    """``eps_base_95`` is the limit of a band of plain qubits; ``eps_enh_95`` is one enhanced pair."""

    years: float
    m_x_ghz: float
    shots: float
    eps_base_95: float
    eps_enh_95: float
    speedup: float
    effective_speedup: float
    eps_projected_95: float


class LeakagePoint(_Record):
    ratio: float
    drive_rad_per_us: float
    max_leakage: float


class CheckRecord(_Record):
    name: str
    passed: bool
    measured: float | None
    tolerance: str
    detail: dict


class ValidationReport(_Record):
    checks: list[CheckRecord]


SCHEMAS = {
    "manifest": Manifest, "map_row": MapRow, "exclusion": ExclusionRecord,
    "toy_fit": ToyFitRecord, "speedup_cell": SpeedupCell, "projection_point": ProjectionPoint,
    "leakage_point": LeakagePoint, "validation_report": ValidationReport,
}


def schema_documents() -> dict[str, dict]:
    return {name: model.model_json_schema() for name, model in SCHEMAS.items()}


def write_schemas(directory: str | Path) -> list[Path]:
    out = []
    for name, doc in schema_documents().items():
        path = Path(directory) / f"{name}.schema.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        out.append(path)
    return out


def published_schema(name: str) -> dict:
    text = resources.files("hpsense.schemas").joinpath(f"{name}.schema.json").read_text()
    return json.loads(text)
