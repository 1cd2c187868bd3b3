"""Assemble physics objects (crystal, reservoirs, magnet, drive) from a RunConfig."""

from dataclasses import dataclass

import numpy as np

from . import crystal as cr
from . import magnet as mg
from . import reservoir as rsv
from . import transport as tp
from . import units


@dataclass(frozen=True)
class Setup:
    config: object
    modes: object  # NormalModes or None
    laser: object  # CoolingLaser or None
    model: mg.SpinModel
    coupling: float  # energy scale J (rad/s) used by *_over_J keys
    reservoirs: dict
    drive: mg.ExchangeDrive
    spectrum: mg.SpinSpectrum
    transitions: mg.TransitionData

    def generator(self, reservoirs=None):
        s = self.config.solver
        return tp.build_generator(self.transitions, reservoirs or self.reservoirs,
                                  s.mode, s.warn_ratio, s.error_ratio)

    @property
    def rho0(self):
        return tp.all_down(self.spectrum)


def build_crystal(cfg):
    c = cfg.crystal
    species = [cr.IonSpecies(s.name, s.mass_amu, s.role, float(units.to_rad(s.linewidth_MHz, "MHz")))
               for s in c.species]
    arrangement = cr.CrystalArrangement(species)
    ref = c.reference_mass_amu
    if ref is None:
        coolants = arrangement.coolant_sites
        ref = species[coolants[0]].mass if coolants else species[0].mass
    trap = cr.TrapConfig(*(float(units.to_rad(getattr(c, f"trap_{a}_MHz"), "MHz")) for a in "xyz"), ref)
    return cr.solve_crystal(trap, arrangement)


def coolant_linewidth(modes):
    arr = modes.arrangement
    widths = {arr.species[i].linewidth for i in arr.coolant_sites}
    if not widths or 0.0 in widths:
        raise ValueError("coolant species need a positive linewidth_MHz")
    if len(widths) > 1:
        raise ValueError("all coolant ions must share one transition linewidth")
    return widths.pop()


def build_laser(cfg, modes, rabi_over_linewidth=None, detuning=None):
    c = cfg.cooling
    gamma = coolant_linewidth(modes)
    rabi = (rabi_over_linewidth or c.rabi_over_linewidth) * gamma
    delta = c.detuning_over_linewidth * gamma if detuning is None else detuning
    return rsv.CoolingLaser.from_wavelength(rabi, delta, c.wavelength_nm * 1e-9, gamma,
                                            angle=np.deg2rad(c.angle_deg), recoil=c.recoil)


def _khz(value):
    if value is None:
        return None
    return units.to_rad(value, "kHz")


def build_model(cfg, modes):
    m = cfg.magnet
    if modes is not None:
        n = len(modes.arrangement.spin_sites)
    else:
        n = m.n_spins
    field = float(units.to_rad(m.field_kHz, "kHz"))
    if m.force is not None:
        f = m.force
        w = modes.trap.omega_x if f.branch == "x" else modes.trap.omega_y
        offset = f.beat_offset_over_trap * w
        j = mg.mediated_couplings(modes, f.force_over_beat_offset * offset, w + offset, f.branch,
                                  sites=modes.arrangement.spin_sites)
        return mg.SpinModel("ising", n, field, jz=j)
    return mg.SpinModel(m.kind, n, field, jx=_khz(m.jx_kHz), jy=_khz(m.jy_kHz), jz=_khz(m.jz_kHz))


def coupling_scale(model):
    """Largest spin-spin coupling magnitude; the unit J of *_over_J keys."""
    j = max(np.max(np.abs(model.jx)), np.max(np.abs(model.jy)), np.max(np.abs(model.jz)))
    if j == 0:
        raise ValueError("all spin couplings vanish; *_over_J keys are undefined")
    return float(j)


def cooled_modes(cfg, modes, laser):
    """Mode table rows for the configured source and drain modes."""
    c = cfg.cooling
    table = rsv.mode_table(modes, laser)
    drain = c.drain_mode or modes.arrangement.n_ions
    for n in (c.source_mode, drain):
        if n > len(table):
            raise ValueError(f"mode {n} does not exist in a {len(table)}-ion crystal")
    return {"S": table[c.source_mode - 1], "D": table[drain - 1]}


def build_reservoirs(cfg, modes, laser, j):
    out = {}
    rows = cooled_modes(cfg, modes, laser) if laser is not None else None
    for r in ("S", "D"):
        sec = getattr(cfg.drive, r)
        delta = sec.delta_over_J * j if sec.delta_over_J is not None else float(_khz(sec.delta_kHz))
        if rows is not None:
            row = rows[r]
            if not row["kappa"] > 0:
                raise rsv.NoCoolingError(f"reservoir {r}: mode {row['mode']} is not cooled")
            spec = rsv.ReservoirSpec.from_rates(r, row["mode"], row["omega"], row["gamma_plus"],
                                                row["gamma_minus"], delta)
        else:
            omega = float(units.to_rad(sec.mode_MHz, "MHz")) if sec.mode_MHz else float("nan")
            spec = rsv.ReservoirSpec.thermal(r, 1.0, sec.nbar, delta, omega)
        changes = {}
        if sec.kappa_over_J is not None:
            changes["kappa"] = sec.kappa_over_J * j
        elif sec.kappa_kHz is not None:
            changes["kappa"] = float(_khz(sec.kappa_kHz))
        if sec.nbar is not None:
            changes["nbar"] = sec.nbar
        out[r] = spec.with_(**changes) if changes else spec
    return out


def _site_couplings(value, n_sites, what):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return None
    if arr.shape != (n_sites,):
        raise ValueError(f"{what}: expected {n_sites} entries, got {arr.size}")
    return arr


def build_drive(cfg, modes, model, reservoirs):
    couplings, detunings = {}, {}
    arrangement = modes.arrangement if modes is not None else None
    n_sites = arrangement.n_ions if arrangement is not None else model.n_spins
    for r in ("S", "D"):
        sec = getattr(cfg.drive, r)
        if sec.g_over_kappa is not None:
            value, scale = sec.g_over_kappa, reservoirs[r].kappa
        else:
            value, scale = sec.g_kHz, float(units.to_rad(1.0, "kHz"))
        sites = _site_couplings(value, n_sites, f"drive.{r}")
        if sites is None:
            g = np.zeros(n_sites)
            idx = arrangement.spin_sites if arrangement is not None else range(n_sites)
            g[list(idx)] = float(value)
        else:
            g = sites
        couplings[r] = g * scale
        detunings[r] = reservoirs[r].detuning
    if arrangement is not None:
        return mg.ExchangeDrive.from_sites(arrangement, couplings, detunings)
    return mg.ExchangeDrive(couplings, detunings)


def build(cfg):
    modes = build_crystal(cfg) if cfg.crystal is not None else None
    laser = build_laser(cfg, modes) if cfg.cooling is not None else None
    model = build_model(cfg, modes)
    j = coupling_scale(model)
    reservoirs = build_reservoirs(cfg, modes, laser, j)
    drive = build_drive(cfg, modes, model, reservoirs)
    spectrum = mg.solve_magnet(model, drive, cfg.solver.spin_cap)
    transitions = mg.transition_data(spectrum, drive)
    return Setup(cfg, modes, laser, model, j, reservoirs, drive, spectrum, transitions)


def sweep_points(setup):
    """Grid points of the configured co-swept detuning scan, curve by curve.

    Each point carries a "curve" label naming its width setting. Without a
    sweep section the configured point is returned on its own.
    """
    sweep = setup.config.drive.sweep
    base = setup.reservoirs
    if sweep is None:
        return [{"curve": "base", **{f"{k}_{r}": getattr(base[r], a)
                                     for r in ("S", "D") for k, a in (("delta", "detuning"), ("kappa", "kappa"))}}]
    j = setup.coupling
    deltas = sweep.delta_over_J.array() * j
    settings = []
    if sweep.kappa_over_J is not None:
        for k in sweep.kappa_over_J:
            settings.append((f"kappa_over_J={k:g}", {"S": k * j, "D": k * j}))
    elif sweep.rabi_over_linewidth is not None:
        for x in sweep.rabi_over_linewidth:
            rows = cooled_modes(setup.config, setup.modes, build_laser(setup.config, setup.modes, x))
            settings.append((f"rabi_over_linewidth={x:g}", {r: rows[r]["kappa"] for r in ("S", "D")}))
    else:
        settings.append(("base", {r: base[r].kappa for r in ("S", "D")}))
    points = []
    for label, kap in settings:
        for d in deltas:
            p = {"curve": label, "delta_S": float(d), "delta_D": float(d),
                 "kappa_S": float(kap["S"]), "kappa_D": float(kap["D"])}
            if sweep.fixed_g_over_kappa:
                p["g_S"] = kap["S"] / base["S"].kappa
                p["g_D"] = kap["D"] / base["D"].kappa
            points.append(p)
    return points
