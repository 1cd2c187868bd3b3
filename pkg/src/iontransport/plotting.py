"""Figures rendered next to the CSV outputs (``--plot``)."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def modes(rows, path):
    fig, ax = plt.subplots(figsize=(5, 3))
    for k, branch in enumerate(("x", "y", "z")):
        f = [r["frequency_Hz"] / 1e6 for r in rows if r["branch"] == branch]
        ax.plot([k] * len(f), f, "_", ms=30, mew=2)
    ax.set_xticks([0, 1, 2], ["x", "y", "z"])
    ax.set_ylabel("mode frequency (MHz)")
    return _save(fig, path)


def temperatures(rows, path):
    d = np.array([r["detuning_over_linewidth"] for r in rows])
    ts = np.array([r["T_S_mK"] for r in rows])
    dt = np.array([r["dT_mK"] for r in rows])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(d, ts)
    ax.set_xlabel(r"$\Delta_L/\Gamma$")
    ax.set_ylabel(r"$T_S$ (mK)")
    inset = ax.inset_axes([0.5, 0.5, 0.45, 0.4])
    inset.plot(d, dt, color="C1")
    inset.set_ylabel(r"$T_S-T_D$ (mK)", fontsize=7)
    inset.tick_params(labelsize=7)
    return _save(fig, path)


def dos(rows, path):
    e = np.array([r["eps_over_J"] for r in rows])
    fig, ax = plt.subplots(figsize=(5, 3))
    for r in ("S", "D"):
        ax.plot(e, [row[f"dos_{r}"] for row in rows], label=r)
    ax.set_xlabel(r"$\epsilon/J$")
    ax.set_ylabel("density of states (s/rad)")
    ax.legend()
    return _save(fig, path)


def spectrum(rows, path):
    fig, ax = plt.subplots(figsize=(3, 4))
    for r in rows:
        ax.hlines(r["energy_over_J"], 0, 1, color="C3" if r["dark"] else "C0")
    ax.set_xticks([])
    ax.set_ylabel(r"$\epsilon_\ell/J$")
    return _save(fig, path)


def sweep(rows, path, analytic=None):
    """Current against the inverted detuning -delta/J, one line per curve."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for curve in dict.fromkeys(r["curve"] for r in rows):
        sel = [r for r in rows if r["curve"] == curve]
        ax.plot([-r["delta_over_J"] for r in sel], [r["I_S"] for r in sel], label=curve)
    if analytic is not None:
        ax.plot([-r["delta_over_J"] for r in analytic], [r["I_analytic"] for r in analytic],
                "k--", lw=1, label="single channel")
    ax.set_xlabel(r"$-\delta/J$")
    ax.set_ylabel(r"$I_S$ (quanta/s)")
    ax.legend(fontsize=7)
    return _save(fig, path)


def protocol(rows, path):
    fig, ax = plt.subplots(figsize=(5, 3))
    x = np.array([r["dt_s"] for r in rows])
    ax.loglog(x, np.abs([r["bias"] for r in rows]) + 1e-300, "o-")
    ax.set_xlabel(r"$\Delta t$ (s)")
    ax.set_ylabel(r"$|I_{est}-I_S|$")
    return _save(fig, path)
