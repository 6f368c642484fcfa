"""Median p-value scans in kinetic mixing, speedup and throughput arithmetic."""

from __future__ import annotations

import csv
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import isotonic_regression

from ..noise import DeviceProfile
from ..protocol import PhysicsParams, mapping_M
from ..units import SECONDS_PER_YEAR
from .data import FrequencyGrid, ToyDataset, asimov_counts, expected_probabilities, sample_counts
from .fitting import LineSearchSpace, combined_llr, fit_background, fit_signal, llr_test

MODES = ("base", "enh", "combined")
TARGET_PVALUE = 0.05


class BracketingError(RuntimeError):
    """The ladder never crossed the target p-value."""


@dataclass(frozen=True)
class ExclusionResult:
    epsilon_95: float
    pvalue_curve: list[tuple[float, float]]
    n_toys: int
    mode: str
    combined_ancilla: bool
    asimov: bool = False
    shots: int = 0
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"epsilon_95": self.epsilon_95, "n_toys": self.n_toys, "mode": self.mode,
                "combined_ancilla": self.combined_ancilla, "asimov": self.asimov,
                "shots": self.shots, "meta": self.meta,
                "pvalue_curve": [{"epsilon": e, "p_value": p} for e, p in self.pvalue_curve]}

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epsilon", "p_value"])
            writer.writerows(self.pvalue_curve)


def combined_responses(profile: DeviceProfile, f_q: float, shots: int,
                       step: float = 1e-4) -> tuple[float, float]:
    """Response of the two combined-test histograms to a small excitation.

    With a common amplitude ``a = shots * dP_e``, the conditional sensing
    probability moves by ``r_cond * a`` and the success count by
    ``r_succ * a``. Slopes come from the noise mapping at ``f_q``.
    """
    lo, hi = mapping_M(f_q, 0.0, profile), mapping_M(f_q, step, profile)
    r_cond = (hi.p_tilde_obs - lo.p_tilde_obs) / step / shots
    r_succ = (hi.p_success_obs - lo.p_success_obs) / step
    return r_cond, r_succ


def dataset_pvalue(toy: ToyDataset, mode: str, search: LineSearchSpace,
                   combined_mode: str = "tied",
                   responses: tuple[float, float] | None = None) -> float:
    if mode == "combined":
        return combined_llr(toy.enh_counts, toy.success_counts, toy.grid,
                            mode=combined_mode, responses=responses, search=search)[1]
    counts = toy.histogram(mode)
    h0 = fit_background(counts, toy.grid)
    return llr_test(h0, fit_signal(counts, toy.grid, search=search, background=h0))[1]


@dataclass
class ScanSetup:
    """Everything fixed along one kinetic-mixing scan."""

    physics: PhysicsParams
    profile: DeviceProfile
    grid: FrequencyGrid
    shots: int
    mode: str = "enh"
    n_toys: int = 100
    seed: int = 0
    asimov: bool = False
    combined_mode: str = "tied"
    window_bins: float = 5.0
    executor: Executor | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.n_toys < 1 or self.shots < 1:
            raise ValueError("need at least one toy and one shot")

    @property
    def search(self) -> LineSearchSpace:
        return LineSearchSpace(center=self.physics.dm_mass_ghz, window_bins=self.window_bins)

    @property
    def responses(self) -> tuple[float, float] | None:
        if self.mode != "combined" or self.combined_mode != "tied":
            return None
        if not hasattr(self, "_responses"):
            self._responses = combined_responses(self.profile, self.physics.dm_mass_ghz,
                                                 self.shots)
        return self._responses

    def toys(self, eps: float) -> list[ToyDataset]:
        probs = expected_probabilities(self.physics.with_epsilon(eps), self.profile, self.grid)
        if self.asimov:
            return [asimov_counts(probs, self.grid, self.shots, self.shots)]
        return [sample_counts(probs, self.grid, self.shots, self.shots, self.seed, i)
                for i in range(self.n_toys)]

    def pvalues(self, eps: float) -> np.ndarray:
        toys = self.toys(eps)
        args = (self.mode, self.search, self.combined_mode, self.responses)
        if self.executor is None:
            return np.array([dataset_pvalue(t, *args) for t in toys])
        return np.array(list(self.executor.map(lambda t: dataset_pvalue(t, *args), toys)))

    def median_pvalue(self, eps: float) -> float:
        return float(np.median(self.pvalues(eps)))


def _crossing(eps: np.ndarray, pvals: np.ndarray, target: float) -> float:
    """Log-log interpolation of the first downward crossing of ``target``."""
    below = np.flatnonzero(pvals <= target)
    k = int(below[0])
    if k == 0:
        return float(eps[0])
    lo, hi = k - 1, k
    lp = np.log(np.maximum(pvals[[lo, hi]], 1e-300))
    le = np.log(eps[[lo, hi]])
    if lp[0] == lp[1]:
        return float(eps[hi])
    frac = (math.log(target) - lp[0]) / (lp[1] - lp[0])
    return float(math.exp(le[0] + frac * (le[1] - le[0])))


def exclusion_scan(setup: ScanSetup, *, start: float | None = None, ladder: float = 2.0,
                   max_ladder: int = 24, bisections: int = 6,
                   target: float = TARGET_PVALUE) -> ExclusionResult:
    """Kinetic mixing at which the median p-value reaches ``target``.

    Starting from ``start`` (default: the configured kinetic mixing) the
    scan walks a geometric ladder until the median p-value crosses the target,
    bisects the bracket in log space, smooths the collected curve with a
    non-increasing isotonic fit and interpolates the crossing in log-log.
    Toys share random streams across kinetic-mixing values.
    """
    eps0 = start if start is not None else setup.physics.kinetic_mixing
    if not eps0 > 0:
        raise ValueError("scan needs a positive starting kinetic mixing")
    curve: dict[float, float] = {}

    def evaluate(e: float) -> float:
        if e not in curve:
            curve[e] = setup.median_pvalue(e)
        return curve[e]

    lo = hi = None
    e = eps0
    p = evaluate(e)
    direction = 1.0 if p > target else -1.0
    for _ in range(max_ladder):
        if p > target:
            lo = e
        else:
            hi = e
        if lo is not None and hi is not None:
            break
        e = e * ladder**direction
        p = evaluate(e)
    if lo is None or hi is None:
        raise BracketingError(f"median p-value never crossed {target} between "
                              f"{min(curve):.3g} and {max(curve):.3g}")
    for _ in range(bisections):
        mid = math.sqrt(lo * hi)
        if evaluate(mid) > target:
            lo = mid
        else:
            hi = mid

    eps = np.array(sorted(curve))
    raw = np.array([curve[x] for x in eps])
    smooth = isotonic_regression(raw, increasing=False).x
    eps95 = _crossing(eps, smooth, target)
    return ExclusionResult(
        epsilon_95=eps95, pvalue_curve=[(float(a), float(b)) for a, b in zip(eps, smooth)],
        n_toys=1 if setup.asimov else setup.n_toys, mode=setup.mode,
        combined_ancilla=setup.mode == "combined", asimov=setup.asimov, shots=setup.shots,
        meta={"raw_pvalues": raw.tolist(), "seed": setup.seed,
              "combined_mode": setup.combined_mode if setup.mode == "combined" else None})


def speedup_factor(eps_base_95: float, eps_enh_95: float) -> float:
    """``(eps_base / eps_enh) ** 4``.

    The baseline limit is expected to come from twice the enhanced shots,
    i.e. from two sensing qubits run on their own.
    """
    if eps_base_95 <= 0 or eps_enh_95 <= 0:
        raise ValueError("limits must be positive")
    return (eps_base_95 / eps_enh_95) ** 4


def multiqubit_scaling(speedup: float, n_qubits: int) -> float:
    """Speedup with ``n_qubits - 1`` sensing qubits sharing one ancilla."""
    if n_qubits < 2:
        raise ValueError("need at least two qubits")
    return 2.0 * speedup * (n_qubits - 1) / n_qubits


def shots_per_year(tau_us: float, overhead_us: float, band_width_mhz: float,
                   freq_step_khz: float, qubits_per_band: int = 10) -> float:
    """Measurements per year each qubit collects at every frequency of its band.

    One qubit sweeps its whole band, so the per-frequency count is the shot
    rate divided by the number of steps. The qubits sharing a band feed the
    multi-qubit speedup rather than this count, so ``qubits_per_band`` only
    has to be a positive integer.
    """
    if min(tau_us, band_width_mhz, freq_step_khz) <= 0 or overhead_us < 0 or qubits_per_band < 1:
        raise ValueError("durations, band and step must be positive")
    rate = SECONDS_PER_YEAR / ((tau_us + overhead_us) * 1e-6)
    return rate / (band_width_mhz * 1e3 / freq_step_khz)


def null_statistics(profile: DeviceProfile, grid: FrequencyGrid, shots: int, n_toys: int,
                    seed: int, *, histogram: str = "base", mass_ghz: float | None = None,
                    window_bins: float = 5.0, executor: Executor | None = None) -> np.ndarray:
    """Test statistics ``q`` of background-only toys for one histogram."""
    center = mass_ghz if mass_ghz is not None else 0.5 * (grid.f_min + grid.f_max)
    physics = PhysicsParams(kinetic_mixing=0.0, dm_mass_ghz=center)
    probs = expected_probabilities(physics, profile, grid)
    search = LineSearchSpace(center=center, window_bins=window_bins)

    def one(i: int) -> float:
        toy = sample_counts(probs, grid, shots, shots, seed, i)
        counts = toy.histogram(histogram)
        h0 = fit_background(counts, grid)
        return llr_test(h0, fit_signal(counts, grid, search=search, background=h0))[0]

    mapper = executor.map if executor is not None else map
    return np.array(list(mapper(one, range(n_toys))))
