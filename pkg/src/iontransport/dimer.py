"""Closed-form Ising dimer (h = 0) coupled homogeneously to two reservoirs.

With homogeneous couplings the singlet is dark and the bright levels form a
V-scheme: |T> <-> |up up> probes the reservoir DOS at +2J and
|T> <-> |down down> probes it at -2J.
"""

from dataclasses import dataclass

import numpy as np

from . import reservoir as rsv

UP, DOWN = np.array([1.0, 0.0]), np.array([0.0, 1.0])


@dataclass(frozen=True)
class DimerConfig:
    """J > 0 (antiferromagnetic); per reservoir: g, delta, kappa, nbar (dicts keyed S, D)."""

    coupling: float
    g: dict
    delta: dict
    kappa: dict
    nbar: dict

    def __post_init__(self):
        if self.coupling <= 0:
            raise ValueError("dimer coupling J must be positive")
        for r in ("S", "D"):
            if self.kappa[r] <= 0:
                raise ValueError(f"kappa_{r} must be positive")
            if self.nbar[r] < 0:
                raise ValueError(f"nbar_{r} must be non-negative")

    def dos(self, r, eps):
        return float(rsv.dos(eps, self.delta[r], self.kappa[r]))


def dimer_spectrum(j):
    """Levels (sorted by energy, relative to the antiparallel pair) and their states."""
    trip = (np.kron(UP, DOWN) + np.kron(DOWN, UP)) / np.sqrt(2.0)
    sing = (np.kron(UP, DOWN) - np.kron(DOWN, UP)) / np.sqrt(2.0)
    return [
        dict(name="S", energy=0.0, state=sing, dark=True),
        dict(name="T", energy=0.0, state=trip, dark=False),
        dict(name="uu", energy=2.0 * j, state=np.kron(UP, UP), dark=False),
        dict(name="dd", energy=2.0 * j, state=np.kron(DOWN, DOWN), dark=False),
    ]


def channel_rates(cfg):
    """Per reservoir: the four V-scheme rates, keyed as in Gamma_{rM}, Gamma_{Mr}.

    'rM(T,uu)' is emission |uu> -> |T>, 'Mr(uu,T)' absorption |T> -> |uu>;
    'rM(dd,T)' emission |T> -> |dd>, 'Mr(T,dd)' absorption |dd> -> |T>.
    """
    out = {}
    j = cfg.coupling
    for r in ("S", "D"):
        pref = 4.0 * np.pi * abs(cfg.g[r]) ** 2
        dp, dm = cfg.dos(r, 2.0 * j), cfg.dos(r, -2.0 * j)
        n = cfg.nbar[r]
        out[r] = {
            "rM(T,uu)": pref * dp * (1.0 + n),
            "Mr(uu,T)": pref * dp * n,
            "rM(dd,T)": pref * dm * (1.0 + n),
            "Mr(T,dd)": pref * dm * n,
        }
    return out


def single_channel_validity(cfg):
    """Worst ratio D(+2J)/D(-2J) over the reservoirs; small means one active channel."""
    j = cfg.coupling
    return max(cfg.dos(r, 2.0 * j) / cfg.dos(r, -2.0 * j) for r in ("S", "D"))


def total_rate(cfg):
    rates = channel_rates(cfg)
    return sum(rates[r]["Mr(T,dd)"] + rates[r]["rM(dd,T)"] for r in ("S", "D"))


def eq_populations(cfg):
    """(rho_dd, rho_TT, validity) in the single-channel regime."""
    rates = channel_rates(cfg)
    tot = total_rate(cfg)
    down = sum(rates[r]["rM(dd,T)"] for r in ("S", "D")) / tot
    trip = sum(rates[r]["Mr(T,dd)"] for r in ("S", "D")) / tot
    return down, trip, single_channel_validity(cfg)


def analytic_current(cfg):
    """Single-channel quanta current drawn from the source."""
    j = cfg.coupling
    num = 4.0 * np.pi * abs(cfg.g["S"] * cfg.g["D"]) ** 2 * cfg.dos("S", -2 * j) * cfg.dos("D", -2 * j)
    den = sum(abs(cfg.g[r]) ** 2 * cfg.dos(r, -2 * j) * (1.0 + 2.0 * cfg.nbar[r]) for r in ("S", "D"))
    if den == 0:
        return 0.0
    return num / den * (cfg.nbar["S"] - cfg.nbar["D"])
