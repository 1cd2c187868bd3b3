"""Laser-cooled axial modes as effective thermal reservoirs.

Single-ion sideband rates follow the low-saturation travelling-wave result

    G_pm(w) = eta(w)^2 (Omega/2)^2 Gamma / ((Gamma/2)^2 + (Delta -+ w)^2),

with eta(w) = k cos(theta) sqrt(hbar / 2 m w); the optional recoil term
alpha eta^2 (Omega/2)^2 Gamma / ((Gamma/2)^2 + Delta^2), alpha = 2/5, is added to
both rates. Collective rates weight these by
the squared coolant displacement and w_z / w_n.
"""

import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import units

RECOIL_ALPHA = 2.0 / 5.0


class NoCoolingError(ValueError):
    """Heating outweighs cooling: no thermal steady state exists."""


@dataclass(frozen=True)
class CoolingLaser:
    rabi: float  # rad/s
    detuning: float  # rad/s, negative = red
    wavevector: float  # 1/m
    linewidth: float  # rad/s, coolant transition
    angle: float = 0.0  # rad between beam and trap axis
    recoil: bool = False

    def __post_init__(self):
        if self.rabi <= 0:
            raise ValueError("Rabi frequency must be positive")
        if self.wavevector <= 0:
            raise ValueError("wavevector must be positive")
        if self.linewidth <= 0:
            raise ValueError("linewidth must be positive")

    @classmethod
    def from_wavelength(cls, rabi, detuning, wavelength_m, linewidth, **kw):
        return cls(rabi, detuning, 2.0 * np.pi / wavelength_m, linewidth, **kw)

    def with_detuning(self, detuning):
        return replace(self, detuning=detuning)


def lamb_dicke(laser, mass, omega_t):
    return laser.wavevector * np.cos(laser.angle) * units.zero_point_length(mass, omega_t)


def single_ion_rates(laser, mass, omega_t):
    """Heating and cooling rates (G_plus, G_minus) of a single ion with trap frequency omega_t."""
    if np.any(np.asarray(omega_t) <= 0):
        raise ValueError("trap frequency must be positive")
    g = laser.linewidth
    pref = lamb_dicke(laser, mass, omega_t) ** 2 * (laser.rabi / 2.0) ** 2 * g
    plus = pref / ((g / 2.0) ** 2 + (laser.detuning - omega_t) ** 2)
    minus = pref / ((g / 2.0) ** 2 + (laser.detuning + omega_t) ** 2)
    if laser.recoil:
        # carrier scattering followed by spontaneous-emission recoil; enters both directions
        carrier = RECOIL_ALPHA * pref / ((g / 2.0) ** 2 + laser.detuning**2)
        plus, minus = plus + carrier, minus + carrier
    return plus, minus


def collective_rates(modes, laser):
    """Arrays (G_plus[n], G_minus[n]) over the axial modes, mode index n = 0..N-1."""
    arrangement = modes.arrangement
    coolants = arrangement.coolant_sites
    if not coolants:
        raise ValueError("no coolant ion in the crystal")
    omega_z = modes.trap.omega_z
    wn = modes.frequencies["z"]
    plus = np.zeros_like(wn)
    minus = np.zeros_like(wn)
    for i in coolants:
        disp = modes.vectors["z"][i, :]
        disp = np.where(np.abs(disp) < 1e-10, 0.0, disp)  # nodes are exact zeros
        weight = disp**2 * omega_z / wn
        gp, gm = single_ion_rates(laser, arrangement.species[i].mass, wn)
        plus += weight * gp
        minus += weight * gm
    return plus, minus


def reservoir_state(gamma_plus, gamma_minus, omega_r):
    """(nbar, T, kappa) of a cooled mode; T is an angular frequency (hbar = k_B = 1)."""
    diff = gamma_minus - gamma_plus
    if not diff > 0:
        raise NoCoolingError(
            f"no cooling: G_minus={gamma_minus:.4g} <= G_plus={gamma_plus:.4g}"
        )
    nbar = gamma_plus / diff
    if nbar == 0:
        temperature = 0.0
    else:
        temperature = omega_r / np.log((nbar + 1.0) / nbar)
    return nbar, temperature, 2.0 * diff


def dos(eps, detuning, kappa):
    """Lorentzian density of states of a damped reservoir mode (s/rad)."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    eps = np.asarray(eps, dtype=float)
    return kappa / (2.0 * np.pi) / ((eps - detuning) ** 2 + (kappa / 2.0) ** 2)


def bose(eps, temperature):
    """Bose-Einstein occupation 1 / (exp(eps/T) - 1)."""
    if temperature == 0:
        return 0.0
    return 1.0 / np.expm1(eps / temperature)


@dataclass(frozen=True)
class ReservoirSpec:
    """One effective reservoir: a cooled axial mode seen through its sideband drive."""

    label: str
    mode: int  # 1-based axial mode index
    omega: float  # mode frequency, rad/s
    gamma_plus: float
    gamma_minus: float
    kappa: float
    nbar: float
    temperature: float  # rad/s
    detuning: float  # sideband detuning delta_r, rad/s

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError(f"reservoir {self.label}: kappa must be positive")
        if self.nbar < 0:
            raise ValueError(f"reservoir {self.label}: occupation must be non-negative")

    @classmethod
    def from_rates(cls, label, mode, omega, gamma_plus, gamma_minus, detuning):
        nbar, temp, kappa = reservoir_state(gamma_plus, gamma_minus, omega)
        return cls(label, mode, omega, gamma_plus, gamma_minus, kappa, nbar, temp, detuning)

    @classmethod
    def thermal(cls, label, kappa, nbar, detuning, omega=1.0, mode=0):
        """Reservoir specified directly by width and occupation.

        The rates are those of the cooling dissipator that produces (kappa, nbar).
        """
        gp = kappa * nbar / 2.0
        gm = kappa * (nbar + 1.0) / 2.0
        temp = 0.0 if nbar == 0 else omega / np.log((nbar + 1.0) / nbar)
        return cls(label, mode, omega, gp, gm, kappa, nbar, temp, detuning)

    def with_(self, **changes):
        """Copy with some of (kappa, nbar, detuning) replaced, keeping rates consistent."""
        kappa = changes.pop("kappa", self.kappa)
        nbar = changes.pop("nbar", self.nbar)
        detuning = changes.pop("detuning", self.detuning)
        if changes:
            raise TypeError(f"unsupported fields {sorted(changes)}")
        return ReservoirSpec.thermal(self.label, kappa, nbar, detuning, self.omega, self.mode)

    def dos(self, eps):
        return dos(eps, self.detuning, self.kappa)


def temperature_sweep(detunings, modes, laser, source_mode=1, drain_mode=None,
                      kappa_floor=0.0, executor=None):
    """Reservoir temperatures against cooling-laser detuning.

    Returns one dict per grid point in grid order with keys
    detuning, T_S, T_D, dT (rad/s units; NaN when not cooled) and flags.
    """
    if drain_mode is None:
        drain_mode = modes.arrangement.n_ions

    def row(delta):
        plus, minus = collective_rates(modes, laser.with_detuning(delta))
        out = {"detuning": float(delta), "flags": []}
        for key, n in (("S", source_mode), ("D", drain_mode)):
            omega = modes.frequencies["z"][n - 1]
            try:
                nbar, temp, kappa = reservoir_state(plus[n - 1], minus[n - 1], omega)
            except NoCoolingError:
                nbar, temp, kappa = np.nan, np.nan, np.nan
                out["flags"].append(f"no_cooling_{key}")
            else:
                if kappa < kappa_floor:
                    out["flags"].append(f"weak_cooling_{key}")
                if nbar > 5:
                    out["flags"].append(f"high_nbar_{key}")
            out[f"T_{key}"] = temp
            out[f"nbar_{key}"] = nbar
            out[f"kappa_{key}"] = kappa
        out["dT"] = out["T_S"] - out["T_D"]
        return out

    detunings = list(np.asarray(detunings, dtype=float))
    if executor is None:
        return [row(d) for d in detunings]
    return list(executor.map(row, detunings))


def mode_table(modes, laser):
    """Per-axial-mode rates and reservoir parameters for one laser setting."""
    plus, minus = collective_rates(modes, laser)
    rows = []
    for n, omega in enumerate(modes.frequencies["z"], start=1):
        gp, gm = plus[n - 1], minus[n - 1]
        try:
            nbar, temp, kappa = reservoir_state(gp, gm, omega)
        except NoCoolingError:
            nbar, temp, kappa = np.nan, np.nan, np.nan
        rows.append(dict(mode=n, omega=omega, gamma_plus=gp, gamma_minus=gm,
                         kappa=kappa, nbar=nbar, temperature=temp))
    return rows


def check_validity(g, kappa, warn=0.1, error=0.5, what="coupling"):
    """Enforce |g| << kappa: warn above `warn`, raise above `error`."""
    ratio = abs(g) / kappa
    if ratio > error:
        raise ValueError(f"{what}/kappa = {ratio:.3g} exceeds {error}; reservoir picture invalid")
    if ratio > warn:
        warnings.warn(f"{what}/kappa = {ratio:.3g} exceeds {warn}", stacklevel=3)
    return ratio
