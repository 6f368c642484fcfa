"""Physical constants and the single conversion from lab units to rad/us.

Everything outside this module works in microseconds, GHz and rad/us.
"""

import math

from scipy import constants as _c

PLANCK = _c.h
HBAR = _c.hbar
BOLTZMANN = _c.k
EPSILON_0 = _c.epsilon_0
ELECTRON_VOLT = _c.electron_volt

SECONDS_PER_YEAR = _c.Julian_year


def gev_per_cm3_to_si(rho: float) -> float:
    """Energy density in J/m^3."""
    return rho * 1e9 * ELECTRON_VOLT * 1e6


def dark_photon_rabi_rate(f_q_ghz: float, capacitance_pf: float, dm_density_gev_cm3: float,
                          dipole_length_um: float, kinetic_mixing: float,
                          package_coefficient: float = 1.0, cos_theta: float = 1.0) -> float:
    """Rabi rate ``eta`` in rad/us.

    In natural Heaviside-Lorentz units ``eta = sqrt(w C rho) d k eps cos(Theta) / 2``.
    Restoring SI factors (charge ``sqrt(hbar w C / 2)`` times dipole voltage,
    field amplitude ``k eps sqrt(2 rho / eps0)``) gives
    ``eta = 0.5 * sqrt(w C rho / (hbar eps0)) * d * k * eps * cos(Theta)``.
    """
    omega = 2 * math.pi * f_q_ghz * 1e9
    cap = capacitance_pf * 1e-12
    rho = gev_per_cm3_to_si(dm_density_gev_cm3)
    d = dipole_length_um * 1e-6
    eta_si = 0.5 * math.sqrt(omega * cap * rho / (HBAR * EPSILON_0)) * d
    eta_si *= package_coefficient * kinetic_mixing * cos_theta
    return eta_si * 1e-6
