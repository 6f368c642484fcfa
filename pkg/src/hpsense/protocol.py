"""Dark-photon drive, the ancilla enhancement circuit and the noisy mapping.

The mapping ``M(f, P_e; k)`` turns an ideal sensing excitation ``P_e`` at
probe frequency ``f`` into the three observed probabilities of the baseline
and enhanced experiments. Two routes compute it: :func:`mapping_M` goes
through the validated :mod:`hpsense.qcore` value types one point at a time,
:func:`mapping_grid` runs the same model on arrays of points. They are kept
separate so each can check the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from . import qcore, units
from .noise import (
    CoherenceTimes,
    DeviceProfile,
    confusion_matrix,
    delay_channel,
    delay_kraus,
    noisy_preparation,
    t1_from_quality_factor,
    thermal_population,
)
from .qcore import DensityMatrix

ANCILLA, SENSING = 0, 1


class PhysicsParams(BaseModel):
    """Dark-photon and transmon inputs to the coupling strength."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kinetic_mixing: float = Field(1e-13, ge=0)
    dm_mass_ghz: float = Field(4.5, gt=0)
    package_coefficient: float = Field(1.0, gt=0)
    capacitance_pf: float = Field(0.1, gt=0)
    dipole_length_um: float = Field(100.0, gt=0)
    dm_density_gev_cm3: float = Field(0.45, gt=0)
    polarization_average: bool = True

    def with_epsilon(self, eps: float) -> "PhysicsParams":
        return self.model_copy(update={"kinetic_mixing": float(eps)})


@dataclass(frozen=True)
class DriveParams:
    rabi_rate: float
    detuning: float = 0.0
    phase: float = 0.0
    duration: float = 100.0

    def __post_init__(self):
        if self.rabi_rate < 0 or self.duration <= 0:
            raise ValueError("drive needs rabi_rate >= 0 and duration > 0")


@dataclass(frozen=True)
class ProbabilityTriple:
    """Observed probabilities at one ``(f, P_e)`` point.

    ``p_tilde_obs`` is the probability of the signal-indicating sensing
    outcome ``S = 0`` given an ancilla success; the paper's figures display
    ``1 - p_tilde_obs`` as the enhanced excitation.
    """

    p_base_obs: float
    p_tilde_obs: float
    p_success_obs: float

    @property
    def one_minus_p_tilde(self) -> float:
        return 1.0 - self.p_tilde_obs

    @property
    def p_joint_obs(self) -> float:
        return self.p_tilde_obs * self.p_success_obs

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.p_base_obs, self.p_tilde_obs, self.p_success_obs)


# ---------------------------------------------------------------------------
# Drive physics
# ---------------------------------------------------------------------------


def eta_from_physics(params: PhysicsParams, f_q) -> float:
    """Dark-photon Rabi rate in rad/us at qubit frequency ``f_q`` (GHz)."""
    cos_theta = math.sqrt(1.0 / 3.0) if params.polarization_average else 1.0
    f_q = np.asarray(f_q, dtype=float)
    if np.any(f_q <= 0):
        raise ValueError("qubit frequency must be positive")
    base = units.dark_photon_rabi_rate(1.0, params.capacitance_pf, params.dm_density_gev_cm3,
                                       params.dipole_length_um, params.kinetic_mixing,
                                       params.package_coefficient, cos_theta)
    out = base * np.sqrt(f_q)
    return float(out) if out.ndim == 0 else out


def detuning_rad_per_us(f_q, m_x_ghz):
    return 2 * np.pi * (np.asarray(f_q, dtype=float) - m_x_ghz) * 1e3


def rabi_probability(eta, delta, tau):
    """Generalized Rabi excitation for ``H = (delta/2) Z + eta Y`` after ``tau``."""
    eta, delta = np.asarray(eta, dtype=float), np.asarray(delta, dtype=float)
    omega = np.sqrt(eta**2 + 0.25 * delta**2)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(omega > 0, (eta / np.where(omega > 0, omega, 1.0))**2
                       * np.sin(omega * tau)**2, 0.0)
    return float(out) if out.ndim == 0 else out


def rabi_excitation(drive: DriveParams) -> float:
    return rabi_probability(drive.rabi_rate, drive.detuning, drive.duration)


def excitation_from_physics(params: PhysicsParams, f_q, tau_us: float):
    """Ideal ``P_e`` at probe frequency ``f_q`` for the configured dark photon."""
    eta = eta_from_physics(params, f_q)
    return rabi_probability(eta, detuning_rad_per_us(f_q, params.dm_mass_ghz), tau_us)


def ptilde_ideal(p_e, beta):
    s2 = np.sin(np.asarray(beta) / 2) ** 2
    p_e = np.asarray(p_e, dtype=float)
    out = p_e / (s2 * (1 - p_e) + p_e)
    return float(out) if out.ndim == 0 else out


def psuccess_ideal(p_e, beta):
    half = np.asarray(beta) / 2
    out = np.sin(half) ** 2 + np.cos(half) ** 2 * np.asarray(p_e, dtype=float)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Enhancement circuit
# ---------------------------------------------------------------------------


class Gate(NamedTuple):
    name: str
    params: tuple[float, ...]
    qubits: tuple[int, ...]

    def matrix(self) -> np.ndarray:
        if len(self.qubits) == 2:
            return qcore.standard_gate(self.name, self.params, control=self.qubits[0],
                                       target=self.qubits[1])
        return qcore.standard_gate(self.name, self.params)


def post_drive_state(theta: float, phi: float) -> DensityMatrix:
    rho = DensityMatrix.basis(0, 4)
    rho = qcore.apply_unitary(rho, qcore.ry(theta), [SENSING])
    return qcore.apply_unitary(rho, qcore.phase(phi), [SENSING])


def enhancement_gates(beta: float) -> list[Gate]:
    """Logical circuit: CNOT(S->A), X(S), CRY(beta)(S->A)."""
    return [Gate("CNOT", (), (SENSING, ANCILLA)), Gate("X", (), (SENSING,)),
            Gate("CRY", (beta,), (SENSING, ANCILLA))]


def enhancement_circuit_ideal(theta: float, phi: float, beta: float) -> tuple[float, float]:
    """Noise-free circuit; returns (success probability, P(S=0 | success))."""
    rho = post_drive_state(theta, phi)
    for g in enhancement_gates(beta):
        rho = qcore.apply_unitary(rho, g.matrix(), g.qubits if len(g.qubits) == 1 else (0, 1))
    post, p_success = qcore.measure_and_postselect(rho, ANCILLA, 1)
    p_ground = qcore.outcome_probabilities(post, SENSING)[0]
    return p_success, float(p_ground)


def zsx_angles(u: np.ndarray) -> tuple[float, float, float]:
    """Angles ``(a, b, c)`` with ``u ~ RZ(a) SX RZ(b) SX RZ(c)`` up to phase."""
    u = np.asarray(u, dtype=complex)
    u = u / np.sqrt(np.linalg.det(u))
    theta = 2 * math.atan2(abs(u[1, 0]), abs(u[0, 0]))
    plus = 2 * np.angle(u[1, 1]) if abs(u[1, 1]) > 1e-14 else 0.0
    minus = 2 * np.angle(u[1, 0]) if abs(u[1, 0]) > 1e-14 else 0.0
    phi, lam = 0.5 * (plus + minus), 0.5 * (plus - minus)
    return phi + math.pi, theta + math.pi, lam


def native_single_qubit(u: np.ndarray, qubit: int) -> list[Gate]:
    a, b, c = zsx_angles(u)
    return [Gate("RZ", (c,), (qubit,)), Gate("SX", (), (qubit,)), Gate("RZ", (b,), (qubit,)),
            Gate("SX", (), (qubit,)), Gate("RZ", (a,), (qubit,))]


def _as_moments(gates: Sequence[Gate]) -> list[list[Gate]]:
    return [[g] for g in gates]


def transpiled_moments(beta: float, basis: str = "cz") -> list[list[Gate]]:
    """Enhancement circuit in a native gate set with a single two-qubit gate.

    The logical circuit equals ``X_S RY(beta/2)_A CNOT(S->A) RY(beta/2)_A``
    up to global phase. ``CNOT`` is realised either as ``H_A CZ H_A`` or as
    ``RZ_S(-pi/2) RX_A(-pi/2) ECR(S->A) X_S``; adjacent single-qubit
    rotations are merged and re-expressed as ``RZ SX RZ SX RZ``.
    """
    h = qcore.standard_gate("H")
    half = qcore.ry(beta / 2)
    if basis == "cz":
        pre_a, post_a = h @ half, half @ h
        moments = _as_moments(native_single_qubit(pre_a, ANCILLA))
        moments.append([Gate("CZ", (), (SENSING, ANCILLA))])
        tail_a = native_single_qubit(post_a, ANCILLA)
        moments.append([tail_a[0], Gate("X", (), (SENSING,))])
        moments.extend(_as_moments(tail_a[1:]))
        return moments
    if basis == "ecr":
        moments = _as_moments(native_single_qubit(half, ANCILLA))
        moments.append([Gate("X", (), (SENSING,))])
        moments.append([Gate("ECR", (), (SENSING, ANCILLA))])
        post_a = half @ qcore.rx(-math.pi / 2)
        post_s = qcore.PAULI_X @ qcore.rz(-math.pi / 2)
        tail_a = native_single_qubit(post_a, ANCILLA)
        tail_s = native_single_qubit(post_s, SENSING)
        for ga, gs in zip(tail_a, tail_s):
            moments.append([ga, gs])
        return moments
    raise ValueError(f"unknown basis {basis!r}")


def moment_unitary(moment: Sequence[Gate]) -> np.ndarray:
    u = np.eye(4, dtype=complex)
    for g in moment:
        targets = (0, 1) if len(g.qubits) == 2 else g.qubits
        u = qcore.embed(g.matrix(), targets, 2) @ u
    return u


def circuit_unitary(moments: Sequence[Sequence[Gate]]) -> np.ndarray:
    u = np.eye(4, dtype=complex)
    for m in moments:
        u = moment_unitary(m) @ u
    return u


def moment_duration(moment: Sequence[Gate], profile: DeviceProfile) -> float:
    return max(profile.gate_duration_us(g.name) for g in moment)


# ---------------------------------------------------------------------------
# Noisy sensing evolution
# ---------------------------------------------------------------------------


def drive_step_unitary(rabi_rate, detuning, dt) -> np.ndarray:
    """``exp(-i dt [(delta/2) Z + eta Y])``, broadcasting over array inputs."""
    eta, delta = np.broadcast_arrays(np.asarray(rabi_rate, dtype=float),
                                     np.asarray(detuning, dtype=float))
    hz, hy = 0.5 * delta, eta
    omega = np.sqrt(hz**2 + hy**2)
    safe = np.where(omega > 0, omega, 1.0)
    c = np.cos(omega * dt)
    s = np.where(omega > 0, np.sin(omega * dt) / safe, dt)
    u = np.empty(eta.shape + (2, 2), dtype=complex)
    u[..., 0, 0] = c - 1j * s * hz
    u[..., 1, 1] = c + 1j * s * hz
    u[..., 0, 1] = -s * hy
    u[..., 1, 0] = s * hy
    return u


def trotterized_sensing_evolution(drive: DriveParams, times: CoherenceTimes, m: int,
                                  prep_error: float = 0.0) -> DensityMatrix:
    """``m`` alternations of a drive step and an idle step of ``tau/m`` each."""
    if m < 1:
        raise ValueError("need at least one Trotter step")
    dt = drive.duration / m
    u = drive_step_unitary(drive.rabi_rate, drive.detuning, dt)
    idle = delay_channel(times, dt)
    rho = noisy_preparation(prep_error)
    for _ in range(m):
        rho = qcore.apply_unitary(rho, u, [0])
        rho = qcore.apply_channel(rho, idle, [0])
    return rho


def _ancilla_frequency(f_q: float, profile: DeviceProfile) -> float:
    return profile.ancilla_frequency_ghz or f_q


def _theta_from_pe(p_e):
    p_e = np.asarray(p_e, dtype=float)
    if np.any((p_e < 0) | (p_e > 1)):
        raise ValueError("P_e must lie in [0, 1]")
    return 2 * np.arcsin(np.sqrt(p_e))


def mapping_M(f_q: float, p_e: float, profile: DeviceProfile) -> ProbabilityTriple:
    """Observed probabilities at one ``(f_q, P_e)`` point."""
    theta = float(_theta_from_pe(p_e))
    tau = profile.tau_us
    times_s = profile.coherence(f_q)
    times_a = profile.coherence(_ancilla_frequency(f_q, profile))
    drive = DriveParams(rabi_rate=theta / (2 * tau), duration=tau)
    rho_s = trotterized_sensing_evolution(drive, times_s, profile.trotter_steps, profile.prep_error)
    confusion = confusion_matrix(profile.readout_error)
    t_ro = profile.readout_duration_us

    base = qcore.apply_channel(rho_s, delay_channel(times_s, t_ro), [0])
    p_base = float((confusion @ base.populations())[1])

    rho = noisy_preparation(profile.prep_error).tensor(rho_s)
    for moment in transpiled_moments(profile.beta, profile.transpile_basis):
        rho = qcore.apply_unitary(rho, moment_unitary(moment), [0, 1])
        dur = moment_duration(moment, profile)
        if dur > 0:
            rho = qcore.apply_channel(rho, delay_channel(times_a, dur), [ANCILLA])
            rho = qcore.apply_channel(rho, delay_channel(times_s, dur), [SENSING])
    rho = qcore.apply_channel(rho, delay_channel(times_a, t_ro), [ANCILLA])
    rho = qcore.apply_channel(rho, delay_channel(times_s, t_ro), [SENSING])
    joint = rho.populations().reshape(2, 2)
    observed = confusion @ joint @ confusion.T
    p_success = float(observed[1].sum())
    return ProbabilityTriple(p_base, float(observed[1, 0] / p_success), p_success)


def _embed_kraus_pair(kraus: np.ndarray, qubit: int) -> np.ndarray:
    return qcore.embed(kraus, [qubit], 2)


def mapping_grid(f_q, p_e, profile: DeviceProfile) -> dict[str, np.ndarray]:
    """Vectorised mapping over broadcast arrays of probe frequency and ``P_e``.

    Returns a dict with ``p_base``, ``p_tilde``, ``p_success`` and
    ``p_joint`` (``p_tilde * p_success``), each shaped like the broadcast input.
    """
    f_q, p_e = np.broadcast_arrays(np.asarray(f_q, dtype=float), np.asarray(p_e, dtype=float))
    shape = f_q.shape
    f_flat, pe_flat = f_q.ravel(), p_e.ravel()
    theta = _theta_from_pe(pe_flat)
    tau, m = profile.tau_us, profile.trotter_steps
    dt = tau / m
    t1_s = t1_from_quality_factor(profile.quality_factor, f_flat) * np.ones_like(f_flat)
    pth_s = thermal_population(f_flat, profile.t_eff_k) * np.ones_like(f_flat)
    f_a = np.full_like(f_flat, profile.ancilla_frequency_ghz) if profile.ancilla_frequency_ghz else f_flat
    t1_a = t1_from_quality_factor(profile.quality_factor, f_a) * np.ones_like(f_flat)
    pth_a = thermal_population(f_a, profile.t_eff_k) * np.ones_like(f_flat)
    ratio = profile.tphi_over_t1

    p = profile.prep_error
    rho = np.zeros(f_flat.shape + (2, 2), dtype=complex)
    rho[:, 0, 0], rho[:, 1, 1] = 1 - p, p
    u = drive_step_unitary(theta / (2 * tau), 0.0, dt)
    idle = delay_kraus(t1_s, t1_s * ratio, pth_s, dt)
    for _ in range(m):
        rho = qcore.evolve_unitary(rho, u)
        rho = qcore.evolve_kraus(rho, idle)

    confusion = confusion_matrix(profile.readout_error)
    t_ro = profile.readout_duration_us
    ro_s = qcore.evolve_kraus(rho, delay_kraus(t1_s, t1_s * ratio, pth_s, t_ro))
    pops = np.einsum("...ii->...i", ro_s).real
    p_base = pops @ confusion[1]

    anc = np.diag([1 - p, p]).astype(complex)
    state = np.einsum("ab,ncd->nacbd", anc, rho).reshape(-1, 4, 4)

    def idle_both(state, dur):
        ka = _embed_kraus_pair(delay_kraus(t1_a, t1_a * ratio, pth_a, dur), ANCILLA)
        ks = _embed_kraus_pair(delay_kraus(t1_s, t1_s * ratio, pth_s, dur), SENSING)
        return qcore.evolve_kraus(qcore.evolve_kraus(state, ka), ks)

    for moment in transpiled_moments(profile.beta, profile.transpile_basis):
        state = qcore.evolve_unitary(state, moment_unitary(moment))
        dur = moment_duration(moment, profile)
        if dur > 0:
            state = idle_both(state, dur)
    state = idle_both(state, t_ro)
    joint = np.einsum("...ii->...i", state).real.reshape(-1, 2, 2)
    observed = np.einsum("ab,nbc,dc->nad", confusion, joint, confusion)
    p_success = observed[:, 1, :].sum(axis=1)
    p_joint = observed[:, 1, 0]
    out = {"p_base": p_base, "p_tilde": p_joint / p_success, "p_success": p_success,
           "p_joint": p_joint}
    return {k: v.reshape(shape) for k, v in out.items()}
