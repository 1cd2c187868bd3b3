"""Unit conversions between config/IO units and the internal hbar = k_B = 1 system.

Internally every frequency, rate, coupling and temperature is an angular
frequency in rad/s. Config files and CSV output use ordinary frequencies
(Hz, kHz, MHz), amu, nm and mK.
"""

import numpy as np
from scipy import constants as const

TWO_PI = 2.0 * np.pi
HBAR = const.hbar
K_B = const.k
AMU = const.atomic_mass
E_CHARGE = const.e
EPS0 = const.epsilon_0

_PREFIX = {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6}


def to_rad(value, unit="Hz"):
    """Ordinary frequency in `unit` -> angular frequency in rad/s."""
    return TWO_PI * np.asarray(value, dtype=float) * _PREFIX[unit]


def from_rad(omega, unit="Hz"):
    return np.asarray(omega, dtype=float) / (TWO_PI * _PREFIX[unit])


def kelvin(temperature_rad):
    """Temperature expressed as an angular frequency (k_B T / hbar) -> kelvin."""
    return HBAR * np.asarray(temperature_rad, dtype=float) / K_B


def millikelvin(temperature_rad):
    return 1e3 * kelvin(temperature_rad)


def coulomb_length(mass_amu, omega_z):
    """Length scale where trap and Coulomb forces balance: (e^2 / 4 pi eps0 M w_z^2)^(1/3)."""
    m = mass_amu * AMU
    return (E_CHARGE**2 / (4.0 * np.pi * EPS0 * m * omega_z**2)) ** (1.0 / 3.0)


def zero_point_length(mass_amu, omega):
    """sqrt(hbar / 2 m w) in meters."""
    return np.sqrt(HBAR / (2.0 * mass_amu * AMU * omega))
