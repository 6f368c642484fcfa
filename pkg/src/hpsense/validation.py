"""Self-checks of the simulation against independent oracles.

Each check returns a :class:`Check` with the measured deviation so callers
can report failures instead of raising.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2, kstest

from .leakage import leakage_estimate
from .noise import CoherenceTimes, lindblad_evolve, noisy_preparation
from .protocol import (DriveParams, enhancement_circuit_ideal, psuccess_ideal, ptilde_ideal,
                       trotterized_sensing_evolution)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    measured: float | None
    tolerance: str
    detail: dict = field(default_factory=dict)

    def as_record(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed),
                "measured": None if self.measured is None else float(self.measured),
                "tolerance": self.tolerance, "detail": self.detail}


def excitation_curves(times: CoherenceTimes, rabi_period_us: float, m: int,
                      points: int = 20, prep_error: float = 0.0):
    """Excited population of the Trotter model and of the Lindblad oracle.

    Each curve point ``t`` is its own ``m``-step evolution of length ``t``
    under a resonant drive whose excitation period is ``rabi_period_us``.
    """
    eta = math.pi / rabi_period_us
    ts = np.linspace(rabi_period_us / points, rabi_period_us, points)
    trotter, oracle = [], []
    for t in ts:
        drive = DriveParams(rabi_rate=eta, duration=float(t))
        trotter.append(trotterized_sensing_evolution(drive, times, m, prep_error).matrix[1, 1].real)
        steps = max(2000, int(math.ceil(t / min(times.t1, times.tphi, rabi_period_us) * 400)))
        rho = lindblad_evolve(noisy_preparation(prep_error), eta, 0.0, times, float(t), steps)
        oracle.append(rho.matrix[1, 1].real)
    return ts, np.array(trotter), np.array(oracle)


def trotter_check(times: CoherenceTimes, rabi_period_us: float, m: int,
                  tolerance: float = 1e-3, points: int = 20) -> Check:
    _, tro, ref = excitation_curves(times, rabi_period_us, m, points)
    dev = float(np.max(np.abs(tro - ref)))
    _, tro2, _ = excitation_curves(times, rabi_period_us, 2 * m, points)
    dev2 = float(np.max(np.abs(tro2 - ref)))
    ratio = dev / dev2 if dev2 > 0 else math.inf
    return Check("trotter_vs_lindblad", dev <= tolerance and 1.5 <= ratio <= 2.5, dev,
                 f"max |dev| <= {tolerance:g}; doubling ratio in [1.5, 2.5]",
                 {"m": m, "deviation_2m": dev2, "doubling_ratio": ratio,
                  "rabi_period_us": rabi_period_us, "t1_us": times.t1, "tphi_us": times.tphi})


def circuit_formula_check(n_theta: int = 30, n_beta: int = 30,
                          phis=(0.0, 1.3, 4.0), tolerance: float = 1e-12) -> Check:
    thetas = np.linspace(0.01, 3.1, n_theta)
    betas = np.linspace(0.1, 3.1, n_beta)
    worst, phi_spread = 0.0, 0.0
    for th in thetas:
        p_e = math.sin(th / 2) ** 2
        for b in betas:
            vals = np.array([enhancement_circuit_ideal(th, ph, b) for ph in phis])
            ref = np.array([psuccess_ideal(p_e, b), ptilde_ideal(p_e, b)])
            worst = max(worst, float(np.max(np.abs(vals - ref))))
            phi_spread = max(phi_spread, float(np.max(np.ptp(vals, axis=0))))
    return Check("circuit_vs_formula", worst <= tolerance and phi_spread <= tolerance, worst,
                 f"<= {tolerance:g}", {"phi_spread": phi_spread,
                                       "grid": [n_theta, n_beta, len(phis)]})


def leakage_check(anharmonicity: float, f_q: float, ratios, bound: float = 1e-10,
                  bound_ratio: float = 1e-5) -> Check:
    ratios = np.asarray(ratios, dtype=float)
    vals = np.array([leakage_estimate(anharmonicity, r * anharmonicity, f_q) for r in ratios])
    slope = float(np.polyfit(np.log(ratios), np.log(vals), 1)[0])
    at_bound = leakage_estimate(anharmonicity, bound_ratio * anharmonicity, f_q)
    return Check("leakage", at_bound < bound and abs(slope - 2) <= 0.1, at_bound,
                 f"< {bound:g} at ratio {bound_ratio:g}; slope 2 +- 0.1",
                 {"slope": slope, "ratios": ratios.tolist(), "leakage": vals.tolist()})


def wilks_check(qs, dof: int = 3, alpha: float = 0.01) -> Check:
    qs = np.asarray(qs, dtype=float)
    res = kstest(qs, chi2(dof).cdf)
    crit = float(chi2.isf(0.05, dof))
    return Check("wilks_calibration", bool(res.pvalue > alpha), float(res.pvalue),
                 f"KS p > {alpha:g}",
                 {"n_toys": int(len(qs)), "ks_statistic": float(res.statistic),
                  "median_q": float(np.median(qs)), "chi2_median": float(chi2.median(dof)),
                  "fraction_above_95": float(np.mean(qs > crit))})
