"""Command line front end: ``iontransport <subcommand> CONFIG [options]``.

Every subcommand writes CSV files (header row, fixed column order) into the
output directory; ``--plot`` also renders PNG figures next to them. Failures
print a JSON error object on stderr and exit with status 1.
"""

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import config as cf
from . import dimer as dm
from . import experiment as ex
from . import oracle as orc
from . import protocol as pr
from . import reservoir as rsv
from . import transport as tp
from . import units

SUBCOMMANDS = ("modes", "reservoirs", "dos", "spectrum", "steady", "sweep", "dimer", "oracle", "protocol")
THREADS_ENV = "IONTRANSPORT_THREADS"


def write_csv(path, columns, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row[c]) for c in columns])
    return path


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return ";".join(map(str, v))
    return v


class Run:
    """Per-invocation context: config, output location and executor."""

    def __init__(self, args):
        self.config_path = Path(args.config)
        self.cfg = cf.parse_config(self.config_path)
        out = args.out or self.cfg.output.directory
        out = Path(out)
        if not out.is_absolute() and not args.out:
            out = self.config_path.resolve().parent / out
        self.out = out
        self.plot = args.plot or self.cfg.output.plot
        self.threads = args.threads
        self.written = []
        self._setup = None

    @property
    def setup(self):
        if self._setup is None:
            self._setup = ex.build(self.cfg)
        return self._setup

    def path(self, name, suffix=".csv"):
        return self.out / f"{self.cfg.output.prefix}{name}{suffix}"

    def csv(self, name, columns, rows):
        self.written.append(str(write_csv(self.path(name), columns, rows)))

    def figure(self, func, name, *a, **kw):
        if self.plot:
            self.out.mkdir(parents=True, exist_ok=True)
            self.written.append(str(func(*a, self.path(name, ".png"), **kw)))

    def executor(self):
        if self.threads > 1:
            return ThreadPoolExecutor(self.threads)
        return nullcontext(None)


def _plotting():
    from . import plotting
    return plotting


# -- subcommands -------------------------------------------------------------

def cmd_modes(run):
    if run.cfg.crystal is None:
        raise ValueError("modes needs a crystal section")
    modes = ex.build_crystal(run.cfg)
    n = modes.arrangement.n_ions
    cols = ["branch", "n", "frequency_Hz"] + [f"M_{i + 1}" for i in range(n)]
    rows = []
    for b in ("x", "y", "z"):
        for k in range(n):
            row = {"branch": b, "n": k + 1, "frequency_Hz": float(units.from_rad(modes.frequencies[b][k]))}
            row.update({f"M_{i + 1}": float(modes.vectors[b][i, k]) for i in range(n)})
            rows.append(row)
    run.csv("modes", cols, rows)
    run.figure(_plotting().modes, "modes", rows)


def cmd_reservoirs(run):
    cfg = run.cfg
    if cfg.cooling is None:
        raise ValueError("reservoirs needs crystal and cooling sections")
    modes = ex.build_crystal(cfg)
    gamma = ex.coolant_linewidth(modes)
    scan = cfg.cooling.scan_over_linewidth
    grid = scan.array() if scan is not None else np.array([cfg.cooling.detuning_over_linewidth])
    laser = ex.build_laser(cfg, modes)
    rows = []
    for x in grid:
        for r in rsv.mode_table(modes, laser.with_detuning(x * gamma)):
            rows.append({
                "detuning_Hz": float(units.from_rad(x * gamma)), "mode": r["mode"],
                "gamma_plus_per_s": r["gamma_plus"], "gamma_minus_per_s": r["gamma_minus"],
                "kappa_per_s": r["kappa"], "nbar": r["nbar"],
                "T_mK": float(units.millikelvin(r["temperature"])),
                "flag": "no_cooling" if np.isnan(r["kappa"]) else ("high_nbar" if r["nbar"] > 5 else ""),
            })
    run.csv("reservoirs", ["detuning_Hz", "mode", "gamma_plus_per_s", "gamma_minus_per_s",
                           "kappa_per_s", "nbar", "T_mK", "flag"], rows)
    floor = float(units.to_rad(cfg.cooling.kappa_floor_kHz, "kHz"))
    with run.executor() as pool:
        temps = rsv.temperature_sweep(grid * gamma, modes, laser, cfg.cooling.source_mode,
                                      cfg.cooling.drain_mode, floor, pool)
    trows = [{
        "detuning_Hz": float(units.from_rad(t["detuning"])),
        "detuning_over_linewidth": t["detuning"] / gamma,
        "T_S_mK": float(units.millikelvin(t["T_S"])), "T_D_mK": float(units.millikelvin(t["T_D"])),
        "dT_mK": float(units.millikelvin(t["dT"])), "flags": t["flags"],
    } for t in temps]
    run.csv("temperatures", ["detuning_Hz", "detuning_over_linewidth", "T_S_mK", "T_D_mK", "dT_mK", "flags"], trows)
    run.figure(_plotting().temperatures, "temperatures", trows)


def cmd_dos(run):
    s = run.setup
    j = s.coupling
    res = s.reservoirs
    reach = max(abs(r.detuning) + 10 * r.kappa for r in res.values())
    reach = max(reach, 3 * j)
    eps = np.linspace(-reach, reach, 801)
    rows = [{"eps_Hz": float(units.from_rad(e)), "eps_over_J": e / j,
             "dos_S": float(res["S"].dos(e)), "dos_D": float(res["D"].dos(e))} for e in eps]
    run.csv("dos", ["eps_Hz", "eps_over_J", "dos_S", "dos_D"], rows)
    run.figure(_plotting().dos, "dos", rows)


def _dark_levels(s):
    gt = [tp.clean_couplings(s.transitions.dressed[r]) for r in s.drive.labels]
    return [not any(np.any(g[l, :]) or np.any(g[:, l]) for g in gt) for l in range(s.spectrum.dim)]


def cmd_spectrum(run):
    s = run.setup
    block_of = {int(l): b for b, blk in enumerate(s.spectrum.blocks) for l in blk}
    dark = _dark_levels(s)
    rows = [{"level": l, "energy_Hz": float(units.from_rad(e)), "energy_over_J": e / s.coupling,
             "block": block_of[l], "dark": dark[l]} for l, e in enumerate(s.spectrum.energies)]
    run.csv("spectrum", ["level", "energy_Hz", "energy_over_J", "block", "dark"], rows)
    crow = []
    for r in s.drive.labels:
        gt = tp.clean_couplings(s.transitions.dressed[r])
        for l, lp in np.argwhere(gt != 0):
            crow.append({"reservoir": r, "upper": int(l), "lower": int(lp),
                         "omega_Hz": float(units.from_rad(s.transitions.omega[l, lp])),
                         "abs_g_Hz": float(units.from_rad(abs(gt[l, lp])))})
    run.csv("couplings", ["reservoir", "upper", "lower", "omega_Hz", "abs_g_Hz"], crow)
    run.figure(_plotting().spectrum, "spectrum", rows)


def _state(run, gen, rho0):
    sol = run.cfg.solver
    if sol.state == "steady":
        return tp.steady_state(gen, rho0)
    rate = tp.relaxation_rate(gen)
    return tp.asymptotic_state(gen, rho0, sol.horizon_rates / rate if rate > 0 else 0.0)


def cmd_steady(run):
    s = run.setup
    gen = s.generator()
    rho = _state(run, gen, s.rho0)
    pop = np.real(np.diag(rho))
    rows = [{"level": l, "energy_Hz": float(units.from_rad(e)), "population": pop[l]}
            for l, e in enumerate(s.spectrum.energies)]
    run.csv("populations", ["level", "energy_Hz", "population"], rows)
    cur = tp.current(gen, rho)
    crow = [{"upper": c[0], "lower": c[1], "I_S": c[2]} for c in cur.channels]
    crow.append({"upper": "total", "lower": "", "I_S": cur.source})
    run.csv("current", ["upper", "lower", "I_S"], crow)
    summary = {"I_S": cur.source, "I_D": cur.drain, "energy_current": cur.energy,
               "state": run.cfg.solver.state}
    run.csv("current_summary", list(summary), [summary])


def _sweep_rows(run):
    s = run.setup
    sol = run.cfg.solver
    points = ex.sweep_points(s)
    with run.executor() as pool:
        rows = tp.current_sweep(s.transitions, s.reservoirs, points, s.rho0, None, sol.horizon_rates,
                                sol.mode, sol.state, pool, sol.warn_ratio, sol.error_ratio)
    out = []
    for r in rows:
        row = {"curve": r["curve"], "delta_Hz": float(units.from_rad(r["delta_S"])),
               "delta_over_J": r["delta_S"] / s.coupling,
               "kappa_S_per_s": r["kappa_S"], "kappa_D_per_s": r["kappa_D"],
               "I_S": r["I_S"], "I_D": r["I_D"], "error": r["error"]}
        pops = r.get("populations", np.full(s.spectrum.dim, np.nan))
        row.update({f"p_{l}": float(p) for l, p in enumerate(pops)})
        if run.cfg.output.energy_column:
            row["energy_current"] = r["I_S"] * s.reservoirs["S"].omega
        out.append(row)
    cols = ["curve", "delta_Hz", "delta_over_J", "kappa_S_per_s", "kappa_D_per_s", "I_S", "I_D"]
    if run.cfg.output.energy_column:
        cols.append("energy_current")
    cols += [f"p_{l}" for l in range(s.spectrum.dim)] + ["error"]
    return cols, out


def cmd_sweep(run):
    cols, rows = _sweep_rows(run)
    run.csv("sweep", cols, rows)
    run.figure(_plotting().sweep, "sweep", rows)


def dimer_config(setup, point=None):
    m = setup.model
    if m.kind != "ising" or m.n_spins != 2 or m.field != 0:
        raise ValueError("the dimer closed form needs a two-spin Ising model without field")
    point = point or {}
    g, kap, delta, nbar = {}, {}, {}, {}
    for r in ("S", "D"):
        c = np.asarray(setup.drive.couplings[r])
        if not np.isclose(c[0], c[1]):
            raise ValueError("the dimer closed form needs homogeneous couplings")
        res = setup.reservoirs[r]
        kap[r] = point.get(f"kappa_{r}", res.kappa)
        g[r] = abs(c[0]) * point.get(f"g_{r}", 1.0)
        delta[r] = point.get(f"delta_{r}", res.detuning)
        nbar[r] = res.nbar
    return dm.DimerConfig(float(m.jz[0, 1]), g, delta, kap, nbar)


def cmd_dimer(run):
    s = run.setup
    cols, rows = _sweep_rows(run)
    points = ex.sweep_points(s)
    out = []
    for p, r in zip(points, rows):
        dc = dimer_config(s, p)
        out.append({"curve": r["curve"], "delta_over_J": r["delta_over_J"],
                    "I_analytic": dm.analytic_current(dc), "I_numeric": r["I_S"],
                    "validity": dm.single_channel_validity(dc)})
    run.csv("dimer", ["curve", "delta_over_J", "I_analytic", "I_numeric", "validity"], out)
    run.figure(_plotting().sweep, "dimer", rows, analytic=out)


def cmd_oracle(run):
    s = run.setup
    oc = run.cfg.oracle
    rows = []
    for ratio in oc.g_over_kappa:
        drive = orc.scaled_drive(s.drive, s.reservoirs, ratio)
        res = orc.compare(s.model, drive, s.reservoirs, oc.n_max, oc.cap, oc.top_fock_tol)
        base = {"g_over_kappa": ratio, "n_max": res["n_max"], "top_fock": res["top_fock"]}
        pe, pf = res["populations_eff"], res["populations_full"]
        for l in range(len(pe)):
            rows.append({**base, "quantity": f"p_{l}", "effective": pe[l], "full": pf[l]})
        for k, name in enumerate(("I_S", "I_D")):
            rows.append({**base, "quantity": name, "effective": res["current_eff"][k],
                         "full": res["current_full"][k]})
    for r in rows:
        r["rel_error"] = abs(r["full"] - r["effective"]) / abs(r["effective"]) if r["effective"] else float("nan")
    run.csv("oracle", ["g_over_kappa", "n_max", "top_fock", "quantity", "effective", "full", "rel_error"], rows)


def cmd_protocol(run):
    s = run.setup
    pc = run.cfg.protocol
    gen = s.generator()
    gtot = pr.total_rate(gen)
    base = pr.ProtocolConfig(gen, pc.t_q_rates / gtot, pc.dt_rates / gtot, None, pc.repetitions,
                             pc.flip_prob, pc.seed, pc.min_equilibration)
    results = []
    if pc.t_q_scan_rates is not None:
        results += pr.equilibration_scan(base, pc.t_q_scan_rates.array() / gtot)
    if pc.dt_scan_rates is not None:
        for dt in pc.dt_scan_rates.array() / gtot:
            results.append(pr.run_protocol(pr.replace(base, dt=float(dt))))
    if not results:
        results.append(pr.run_protocol(base))
    rows = [{"t_q_s": r.t_q, "dt_s": r.dt, "rho_dd_tq": r.p_q, "rho_dd_tq_dt": r.p_probe,
             "I_est": r.estimate, "I_S": r.reference, "bias": r.bias, "bias_bound": r.bias_bound,
             "gamma_tot_per_s": r.gamma_tot} for r in results]
    run.csv("protocol", ["t_q_s", "dt_s", "rho_dd_tq", "rho_dd_tq_dt", "I_est", "I_S", "bias",
                         "bias_bound", "gamma_tot_per_s"], rows)
    if pc.dt_scan_rates is not None:
        run.figure(_plotting().protocol, "protocol", rows[-len(pc.dt_scan_rates.array()):])


COMMANDS = {name: globals()[f"cmd_{name}"] for name in SUBCOMMANDS}


def _default_threads():
    value = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def make_parser():
    p = argparse.ArgumentParser(prog="iontransport", description="Energy transport through trapped-ion quantum magnets.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("config", help="YAML run configuration")
    p.add_argument("--out", help="output directory (overrides output.directory)")
    p.add_argument("--threads", type=int, default=_default_threads(),
                   help=f"worker threads for grid evaluations (default ${THREADS_ENV} or 1)")
    p.add_argument("--plot", action="store_true", help="also render PNG figures")
    return p


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        run = Run(args)
        COMMANDS[args.subcommand](run)
    except cf.ConfigError as exc:
        json.dump({"error": "ConfigError", "message": str(exc),
                   "errors": [{"field": loc, "reason": msg} for loc, msg in exc.errors]}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    except Exception as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc), "subcommand": args.subcommand},
                  sys.stderr)
        sys.stderr.write("\n")
        return 1
    print(json.dumps({"subcommand": args.subcommand, "outputs": run.written}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
