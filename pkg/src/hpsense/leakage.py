"""Leakage to the second excited transmon level under a weak resonant drive.

The lab-frame Hamiltonian ``w a^dag a - (alpha/2) a^dag a^dag a a +
Omega cos(w t)(a + a^dag)`` is moved to the frame rotating at the drive
frequency ``w``. Counter-rotating terms are kept, so the rotating-frame
Hamiltonian is periodic with period ``pi / w``. One period is integrated with
a fourth-order Magnus scheme, which is exactly unitary, and the state at
every later period is read off the eigendecomposition of that propagator.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import expm, schur

_LOWER = np.diag(np.sqrt([1.0, 2.0]), 1).astype(complex)
_RAISE = _LOWER.conj().T
_NUMBER = _RAISE @ _LOWER
_GAUSS = (0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6)


class LeakageIntegrationError(RuntimeError):
    pass


def rotating_frame_hamiltonian(t: float, anharmonicity: float, drive: float,
                               omega_q: float) -> np.ndarray:
    static = -0.5 * anharmonicity * (_NUMBER @ _NUMBER - _NUMBER)
    rot = np.exp(-2j * omega_q * t)
    coupling = 0.5 * drive * ((1 + rot) * _LOWER + (1 + rot.conjugate()) * _RAISE)
    return static + coupling


def period_propagator(anharmonicity: float, drive: float, omega_q: float,
                      substeps: int = 64) -> np.ndarray:
    period = math.pi / omega_q
    h = period / substeps
    u = np.eye(3, dtype=complex)
    for k in range(substeps):
        t0 = k * h
        a1 = -1j * rotating_frame_hamiltonian(t0 + _GAUSS[0] * h, anharmonicity, drive, omega_q)
        a2 = -1j * rotating_frame_hamiltonian(t0 + _GAUSS[1] * h, anharmonicity, drive, omega_q)
        gen = 0.5 * h * (a1 + a2) + (math.sqrt(3) / 12) * h * h * (a2 @ a1 - a1 @ a2)
        u = expm(gen) @ u
    return u


def leakage_estimate(anharmonicity: float, drive: float, f_q: float, *,
                     substeps: int = 64, chunk: int = 1 << 20) -> float:
    """Maximum ``|2>`` population during one slow ``0 -> 1`` flop.

    ``anharmonicity`` and ``drive`` are angular rates in rad/us and ``f_q`` is
    in GHz. The flop lasts ``pi / drive``; the population is sampled once per
    drive half-period, which is far finer than both ``1/alpha`` and the flop.
    """
    if anharmonicity <= 0 or f_q <= 0:
        raise ValueError("anharmonicity and qubit frequency must be positive")
    if drive < 0:
        raise ValueError("drive amplitude must be non-negative")
    if drive == 0:
        return 0.0
    omega_q = 2 * math.pi * f_q * 1e3
    floquet = period_propagator(anharmonicity, drive, omega_q, substeps)
    # strip float roundoff so powers of the propagator stay on the unit circle
    left, _, right = np.linalg.svd(floquet)
    # complex Schur form of a unitary is diagonal with an orthonormal basis,
    # which stays accurate when quasienergies are nearly degenerate
    tri, vecs = schur(left @ right, output="complex")
    phases = np.angle(np.diag(tri))
    coeffs = vecs.conj().T @ np.array([1.0, 0.0, 0.0], dtype=complex)
    weights = vecs * coeffs
    n_periods = int(math.ceil((math.pi / drive) / (math.pi / omega_q)))

    best = 0.0
    worst_norm = 0.0
    for start in range(0, n_periods + 1, chunk):
        n = np.arange(start, min(start + chunk, n_periods + 1), dtype=float)
        amps = np.exp(1j * np.outer(n, phases)) @ weights.T
        pops = np.abs(amps) ** 2
        best = max(best, float(pops[:, 2].max()))
        worst_norm = max(worst_norm, float(np.abs(pops.sum(axis=1) - 1).max()))
    if worst_norm > 1e-9:
        raise LeakageIntegrationError(f"norm drift {worst_norm:.2e} exceeds 1e-9")
    return best
