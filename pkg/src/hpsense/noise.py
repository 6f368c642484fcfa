"""Qubit noise channels built from a device profile, plus a Lindblad oracle.

Times are in microseconds and angular rates in rad/us throughout. The delay
channel is generalized amplitude damping toward the thermal state followed by
pure dephasing; both are covariant under Z so their order does not matter and
the composition reproduces the Lindblad dissipator exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.special import expit

from . import qcore
from .qcore import DensityMatrix, QuantumChannel
from .units import BOLTZMANN, PLANCK

DEFAULT_GATE_DURATIONS_NS = {"I": 60.0, "X": 60.0, "SX": 60.0, "RZ": 0.0, "CZ": 590.0, "ECR": 590.0}

MEDIUM_COHERENCE_Q = math.pi * 1e6
HIGH_COHERENCE_Q = 2 * math.pi * 1e6


class DeviceProfile(BaseModel):
    """Noise and timing inputs for one sensing/ancilla pair."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    quality_factor: float = Field(MEDIUM_COHERENCE_Q, gt=0)
    tau_us: float = Field(100.0, gt=0)
    t_eff_k: float = Field(0.035, ge=0)
    prep_error: float = Field(0.01, ge=0, le=0.5)
    readout_error: float = Field(0.01, ge=0, le=0.5)
    beta: float = Field(0.4, gt=0, lt=2 * math.pi)
    tphi_over_t1: float = Field(2.0, gt=0)
    gate_durations_ns: dict[str, float] = Field(default_factory=lambda: dict(DEFAULT_GATE_DURATIONS_NS))
    readout_duration_us: float = Field(1.3, ge=0)
    trotter_steps: int = Field(50, ge=1)
    ancilla_frequency_ghz: float | None = Field(None, gt=0)
    transpile_basis: str = "cz"

    @field_validator("gate_durations_ns")
    @classmethod
    def _fill_durations(cls, v: dict[str, float]) -> dict[str, float]:
        out = dict(DEFAULT_GATE_DURATIONS_NS)
        for name, dur in v.items():
            key = name.upper()
            if key not in DEFAULT_GATE_DURATIONS_NS:
                raise ValueError(f"unknown gate {name!r} in gate_durations_ns")
            if dur < 0:
                raise ValueError("gate durations must be non-negative")
            out[key] = float(dur)
        return out

    @field_validator("transpile_basis")
    @classmethod
    def _basis(cls, v: str) -> str:
        if v.lower() not in ("cz", "ecr"):
            raise ValueError("transpile_basis must be 'cz' or 'ecr'")
        return v.lower()

    def gate_duration_us(self, name: str) -> float:
        return self.gate_durations_ns[name.upper()] * 1e-3

    def coherence(self, f_q: float) -> "CoherenceTimes":
        t1 = t1_from_quality_factor(self.quality_factor, f_q)
        return CoherenceTimes(t1, t1 * self.tphi_over_t1, thermal_population(f_q, self.t_eff_k))

    @classmethod
    def noiseless(cls, **overrides) -> "DeviceProfile":
        kw = dict(quality_factor=math.inf, t_eff_k=0.0, prep_error=0.0, readout_error=0.0)
        kw.update(overrides)
        return cls(**kw)


@dataclass(frozen=True)
class CoherenceTimes:
    t1: float
    tphi: float
    p_th: float = 0.0

    def __post_init__(self):
        if not (self.t1 > 0 and self.tphi > 0):
            raise ValueError("T1 and Tphi must be positive")
        if not 0 <= self.p_th < 0.5:
            raise ValueError("thermal population must lie in [0, 0.5)")

    @property
    def t2(self) -> float:
        return 1.0 / (0.5 / self.t1 + 1.0 / self.tphi)


def t1_from_quality_factor(quality_factor, f_q):
    """``T1 = Q / (2 pi f)`` in microseconds for ``f_q`` in GHz."""
    f_q = np.asarray(f_q, dtype=float)
    if np.any(f_q <= 0) or quality_factor <= 0:
        raise ValueError("quality factor and frequency must be positive")
    out = quality_factor / (2 * np.pi * f_q * 1e3)
    return float(out) if out.ndim == 0 else out


def thermal_population(f_q, t_eff):
    """Excited fraction of a two-level system at temperature ``t_eff`` (K).

    Normalised Boltzmann fraction ``exp(-x) / (1 + exp(-x))`` with
    ``x = h f / (k_B T)``; exactly zero at ``T = 0``.
    """
    if t_eff < 0:
        raise ValueError("temperature must be non-negative")
    f_q = np.asarray(f_q, dtype=float)
    if t_eff == 0:
        out = np.zeros_like(f_q)
    else:
        out = expit(-PLANCK * f_q * 1e9 / (BOLTZMANN * t_eff))
    return float(out) if out.ndim == 0 else out


def delay_kraus(t1, tphi, p_th, duration) -> np.ndarray:
    """Kraus stack of the idle channel, broadcasting over array arguments.

    Returns shape ``(..., 8, 2, 2)``: the four generalized-amplitude-damping
    operators, each followed by the two phase-flip operators.
    """
    t1, tphi, p_th, duration = np.broadcast_arrays(*(np.asarray(a, dtype=float)
                                                     for a in (t1, tphi, p_th, duration)))
    gamma = -np.expm1(-duration / t1)
    keep = np.sqrt(1.0 - gamma)
    flip = -0.5 * np.expm1(-duration / tphi)
    shape = t1.shape
    gad = np.zeros(shape + (4, 2, 2), dtype=complex)
    a, b = np.sqrt(1.0 - p_th), np.sqrt(p_th)
    gad[..., 0, 0, 0] = a
    gad[..., 0, 1, 1] = a * keep
    gad[..., 1, 0, 1] = a * np.sqrt(gamma)
    gad[..., 2, 0, 0] = b * keep
    gad[..., 2, 1, 1] = b
    gad[..., 3, 1, 0] = b * np.sqrt(gamma)
    deph = np.zeros(shape + (2, 2, 2), dtype=complex)
    deph[..., 0, :, :] = np.sqrt(1.0 - flip)[..., None, None] * qcore.ID2
    deph[..., 1, :, :] = np.sqrt(flip)[..., None, None] * qcore.PAULI_Z
    ops = np.einsum("...jab,...ibc->...ijac", deph, gad)
    return ops.reshape(shape + (8, 2, 2))


def delay_channel(times: CoherenceTimes, duration: float) -> QuantumChannel:
    if duration < 0:
        raise ValueError("duration must be non-negative")
    if duration == 0:
        return QuantumChannel.identity(2)
    return QuantumChannel(delay_kraus(times.t1, times.tphi, times.p_th, duration))


def confusion_matrix(r: float) -> np.ndarray:
    """Symmetric assignment matrix; column ``j`` is the true outcome ``j``."""
    if not 0 <= r <= 0.5:
        raise ValueError("readout error must lie in [0, 0.5]")
    return np.array([[1.0 - r, r], [r, 1.0 - r]])


def noisy_preparation(p: float, p_th_reset: float = 0.0) -> DensityMatrix:
    """Nominal ``|0>`` preparation flipped with probability ``p``.

    An optional residual thermal population left by reset flips the state
    independently.
    """
    if not 0 <= p <= 0.5 or not 0 <= p_th_reset <= 0.5:
        raise ValueError("preparation error must lie in [0, 0.5]")
    e = p * (1 - p_th_reset) + p_th_reset * (1 - p)
    return DensityMatrix(np.diag([1.0 - e, e]).astype(complex))


# ---------------------------------------------------------------------------
# Lindblad oracle
# ---------------------------------------------------------------------------

_SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
_SIGMA_PLUS = _SIGMA_MINUS.conj().T


def _dissipator(l_op: np.ndarray, rho: np.ndarray) -> np.ndarray:
    ld = l_op.conj().T
    ldl = ld @ l_op
    return l_op @ rho @ ld - 0.5 * (ldl @ rho + rho @ ldl)


def lindblad_rhs(rho: np.ndarray, hamiltonian: np.ndarray, times: CoherenceTimes) -> np.ndarray:
    out = -1j * (hamiltonian @ rho - rho @ hamiltonian)
    if np.isfinite(times.t1):
        out = out + (1 - times.p_th) / times.t1 * _dissipator(_SIGMA_MINUS, rho)
        out = out + times.p_th / times.t1 * _dissipator(_SIGMA_PLUS, rho)
    if np.isfinite(times.tphi):
        out = out + 0.5 / times.tphi * _dissipator(qcore.PAULI_Z, rho)
    return out


def drive_hamiltonian(drive_rate: float, detuning: float) -> np.ndarray:
    """Rotating-frame drive ``(delta/2) sigma_z + eta sigma_y``."""
    return 0.5 * detuning * qcore.PAULI_Z + drive_rate * qcore.PAULI_Y


def lindblad_evolve(initial: DensityMatrix, drive_rate: float, detuning: float,
                    times: CoherenceTimes, duration: float, steps: int = 2000,
                    trajectory: bool = False):
    """Fixed-step RK4 integration of the single-qubit master equation.

    With ``trajectory=True`` returns an array of shape ``(steps + 1, 2, 2)``
    holding the state after every step; otherwise the final
    :class:`DensityMatrix`.
    """
    if steps < 1 or duration < 0:
        raise ValueError("need steps >= 1 and a non-negative duration")
    h = duration / steps
    fastest = max(abs(drive_rate), abs(detuning), 1e-12)
    limit = min(times.t1, times.tphi, 2 * np.pi / fastest) / 20
    if h > limit:
        raise ValueError(f"RK4 step {h:.3g} us exceeds {limit:.3g} us; increase steps")
    ham = drive_hamiltonian(drive_rate, detuning)
    rho = np.array(initial.matrix)
    traj = [rho] if trajectory else None
    for _ in range(steps):
        k1 = lindblad_rhs(rho, ham, times)
        k2 = lindblad_rhs(rho + 0.5 * h * k1, ham, times)
        k3 = lindblad_rhs(rho + 0.5 * h * k2, ham, times)
        k4 = lindblad_rhs(rho + h * k3, ham, times)
        rho = rho + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if trajectory:
            traj.append(rho)
    try:
        qcore.check_density_matrix(rho, tol_trace=1e-8, tol_herm=1e-8, tol_psd=1e-8)
    except qcore.QuantumError as exc:
        raise ValueError(f"Lindblad integration drifted: {exc}") from exc
    if trajectory:
        return np.array(traj)
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho / np.trace(rho).real)
