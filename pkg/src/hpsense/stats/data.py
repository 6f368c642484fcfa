"""Frequency grids, expected probabilities and toy count datasets."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..noise import DeviceProfile
from ..protocol import PhysicsParams, excitation_from_physics, mapping_grid
from .rng import STREAM_BASE, STREAM_ENHANCED, STREAM_SUCCESS, stream

MIN_BINS = 8


class FrequencyGrid(BaseModel):
    """Uniform probe-frequency grid; ``step_mhz`` must divide the span."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    f_min: float = Field(4.0, gt=0)
    f_max: float = Field(5.0, gt=0)
    step_mhz: float = Field(0.8, gt=0)

    @model_validator(mode="after")
    def _check(self):
        if self.f_max <= self.f_min:
            raise ValueError("f_max must exceed f_min")
        spans = (self.f_max - self.f_min) * 1e3 / self.step_mhz
        if abs(spans - round(spans)) > 1e-6:
            raise ValueError("step_mhz must divide f_max - f_min")
        if round(spans) + 1 < MIN_BINS:
            raise ValueError(f"grid needs at least {MIN_BINS} bins")
        return self

    @property
    def n_bins(self) -> int:
        return int(round((self.f_max - self.f_min) * 1e3 / self.step_mhz)) + 1

    @property
    def bin_centers(self) -> np.ndarray:
        return self.f_min + np.arange(self.n_bins) * self.step_mhz * 1e-3

    def scaled(self, x=None) -> np.ndarray:
        """Affine map of frequencies onto [-1, 1]."""
        x = self.bin_centers if x is None else np.asarray(x, dtype=float)
        return 2 * (x - self.f_min) / (self.f_max - self.f_min) - 1


@dataclass(frozen=True)
class ExpectedProbabilities:
    """Mapping outputs over a grid for one dark-photon hypothesis."""

    p_e: np.ndarray
    p_base: np.ndarray
    p_tilde: np.ndarray
    p_success: np.ndarray

    @property
    def p_joint(self) -> np.ndarray:
        return self.p_tilde * self.p_success


def expected_probabilities(physics: PhysicsParams, profile: DeviceProfile,
                           grid: FrequencyGrid) -> ExpectedProbabilities:
    f = grid.bin_centers
    p_e = np.clip(excitation_from_physics(physics, f, profile.tau_us), 0.0, 1.0)
    out = mapping_grid(f, p_e, profile)
    return ExpectedProbabilities(p_e, out["p_base"], out["p_tilde"], out["p_success"])


@dataclass(frozen=True)
class ToyDataset:
    """Per-bin counts of one baseline and one enhanced scan.

    ``enh_counts`` are shots with an ancilla success and a signal-indicating
    sensing outcome, so ``enh_counts <= success_counts <= enh_shots``. Asimov
    datasets hold expected (non-integer) counts.
    """

    grid: FrequencyGrid
    base_shots: int
    enh_shots: int
    base_counts: np.ndarray
    enh_counts: np.ndarray
    success_counts: np.ndarray
    seed: int | None = None
    toy_index: int = 0
    asimov: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.grid.n_bins
        for name in ("base_counts", "enh_counts", "success_counts"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != (n,):
                raise ValueError(f"{name} must have one entry per bin")
            if np.any(arr < 0):
                raise ValueError(f"{name} must be non-negative")
        slack = 1e-9 * max(self.enh_shots, 1)
        if np.any(self.enh_counts > self.success_counts + slack) or \
                np.any(self.success_counts > self.enh_shots + slack) or \
                np.any(self.base_counts > self.base_shots + slack):
            raise ValueError("counts violate enh <= success <= shots or base <= shots")

    def histogram(self, which: str) -> np.ndarray:
        return {"base": self.base_counts, "enh": self.enh_counts,
                "success": self.success_counts}[which]

    def to_records(self) -> list[dict]:
        return [{"f_ghz": float(f), "base_counts": b, "enh_counts": e, "success_counts": s}
                for f, b, e, s in zip(self.grid.bin_centers, self.base_counts.tolist(),
                                      self.enh_counts.tolist(), self.success_counts.tolist())]

    def write_csv(self, path: str | Path) -> None:
        rows = self.to_records()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)

    def to_json(self) -> dict:
        return {"grid": self.grid.model_dump(), "base_shots": self.base_shots,
                "enh_shots": self.enh_shots, "seed": self.seed, "toy_index": self.toy_index,
                "asimov": self.asimov, "meta": self.meta,
                "base_counts": self.base_counts.tolist(), "enh_counts": self.enh_counts.tolist(),
                "success_counts": self.success_counts.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "ToyDataset":
        dtype = float if doc.get("asimov") else np.int64
        return cls(grid=FrequencyGrid(**doc["grid"]), base_shots=doc["base_shots"],
                   enh_shots=doc["enh_shots"], seed=doc.get("seed"),
                   toy_index=doc.get("toy_index", 0), asimov=doc.get("asimov", False),
                   meta=doc.get("meta", {}),
                   base_counts=np.asarray(doc["base_counts"], dtype=dtype),
                   enh_counts=np.asarray(doc["enh_counts"], dtype=dtype),
                   success_counts=np.asarray(doc["success_counts"], dtype=dtype))

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()), encoding="utf-8")


def sample_counts(probs: ExpectedProbabilities, grid: FrequencyGrid, base_shots: int,
                  enh_shots: int, seed: int, toy_index: int = 0) -> ToyDataset:
    """Draw one toy from precomputed probabilities.

    Baseline counts and ancilla successes are binomial in the shot count;
    signal-indicating outcomes are binomial in the number of successes.
    """
    if base_shots < 1 or enh_shots < 1:
        raise ValueError("shot counts must be positive")
    base = stream(seed, toy_index, STREAM_BASE).binomial(base_shots, probs.p_base)
    success = stream(seed, toy_index, STREAM_SUCCESS).binomial(enh_shots, probs.p_success)
    enh = stream(seed, toy_index, STREAM_ENHANCED).binomial(success, probs.p_tilde)
    return ToyDataset(grid, base_shots, enh_shots, base, enh, success, seed, toy_index)


def asimov_counts(probs: ExpectedProbabilities, grid: FrequencyGrid, base_shots: int,
                  enh_shots: int) -> ToyDataset:
    return ToyDataset(grid, base_shots, enh_shots, base_shots * probs.p_base,
                      enh_shots * probs.p_joint, enh_shots * probs.p_success, asimov=True)


def generate_toy(physics: PhysicsParams, profile: DeviceProfile, grid: FrequencyGrid,
                 shots: int, seed: int, *, base_shots: int | None = None,
                 toy_index: int = 0, asimov: bool = False) -> ToyDataset:
    """One toy scan; ``base_shots`` defaults to ``shots``."""
    probs = expected_probabilities(physics, profile, grid)
    base_shots = shots if base_shots is None else base_shots
    if asimov:
        return asimov_counts(probs, grid, base_shots, shots)
    return sample_counts(probs, grid, base_shots, shots, seed, toy_index)
