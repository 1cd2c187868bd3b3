"""Quench-based current measurement.

The magnet equilibrates under both reservoirs until t_q, the drain coupling is
then switched off and the all-down population is read out twice, at t_q and
at t_q + dt. Its short-time decay under the source alone estimates the current

    I_est = (rho_dd(t_q) - rho_dd(t_q + dt)) / dt.
"""

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg
from scipy.integrate import solve_ivp

from . import transport as tp


class ProtocolWarning(UserWarning):
    pass


def probe_level(gen):
    """Eigen-index carrying the all-down product state."""
    return int(np.argmax(np.real(np.diag(tp.all_down(gen.transitions.spectrum)))))


def probe_rates(gen, level, label):
    """(rate into `level` from reservoir `label`, rate out of it), summed over partners."""
    r = gen.absorb[label] + gen.emit[label]
    rin = r[level, :].sum() - r[level, level]
    rout = r[:, level].sum() - r[level, level]
    return float(rin), float(rout)


def total_rate(gen, level=None):
    """Gamma_tot: all rates into and out of the probed level."""
    level = probe_level(gen) if level is None else level
    return sum(sum(probe_rates(gen, level, r)) for r in gen.labels)


@dataclass(frozen=True)
class ProtocolConfig:
    generator: object  # TransportGenerator with source and drain
    t_q: float  # s
    dt: float  # s
    rho0: np.ndarray = None  # eigenbasis; default all-down
    repetitions: int = None  # None: exact populations
    flip_prob: float = 0.0
    seed: int = 0
    min_equilibration: float = 20.0  # t_q * Gamma_tot lower bound
    max_dt_rate: float = 0.1
    source: str = "S"
    drain: str = "D"

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("probe interval must be positive")
        if self.t_q < 0:
            raise ValueError("t_q must be non-negative")
        if not 0.0 <= self.flip_prob < 0.5:
            raise ValueError("flip probability must lie in [0, 0.5)")
        if self.repetitions is not None and self.repetitions < 1:
            raise ValueError("repetitions must be positive")

    @property
    def initial(self):
        if self.rho0 is None:
            return tp.all_down(self.generator.transitions.spectrum)
        return np.asarray(self.rho0, dtype=complex)

    def check(self):
        """Enforce t_q >= min_equilibration / Gamma_tot; warn if dt is not short."""
        gen = self.generator
        level = probe_level(gen)
        gtot = total_rate(gen, level)
        if self.t_q * gtot < self.min_equilibration:
            raise ValueError(
                f"t_q * Gamma_tot = {self.t_q * gtot:.3g} < {self.min_equilibration}; "
                "the magnet has not equilibrated")
        fastest = max(probe_rates(gen, level, self.source))
        if self.dt * fastest >= self.max_dt_rate:
            warnings.warn(
                f"dt * Gamma = {self.dt * fastest:.3g} >= {self.max_dt_rate}; "
                f"estimator bias up to ~{0.5 * self.dt * fastest:.1%}", ProtocolWarning, stacklevel=3)
        return gtot


@dataclass(frozen=True)
class ProtocolResult:
    t_q: float
    dt: float
    p_q: float  # rho_dd(t_q)
    p_probe: float  # rho_dd(t_q + dt)
    estimate: float
    derivative: float  # exact -d rho_dd/dt just after the quench (dt -> 0 limit)
    reference: float  # I_S of the pre-quench state
    bias_bound: float  # 0.5 dt |d^2 rho_dd / dt^2|
    gamma_tot: float

    @property
    def bias(self):
        return self.estimate - self.reference


def _observed(p, flip):
    return p * (1.0 - flip) + (1.0 - p) * flip


def sampled_populations(p_q, p_probe, repetitions, flip_prob=0.0, seed=0):
    """Shot-noise readout: one projective shot per repetition index and time.

    Each repetition draws from its own stream spawned from `seed`, so results
    do not depend on evaluation order. Flip errors are corrected on average.
    """
    hits = np.zeros(2)
    for child in np.random.SeedSequence(seed).spawn(repetitions):
        u = np.random.default_rng(child).random(2)
        hits += u < [_observed(p_q, flip_prob), _observed(p_probe, flip_prob)]
    frac = hits / repetitions
    est = (frac - flip_prob) / (1.0 - 2.0 * flip_prob)
    return float(est[0]), float(est[1])


def run_protocol(cfg):
    gen = cfg.generator
    gtot = cfg.check()
    level = probe_level(gen)
    rho_q = tp.asymptotic_state(gen, cfg.initial, cfg.t_q)
    quenched = gen.without(cfg.drain)
    rho_p = tp.asymptotic_state(quenched, rho_q, cfg.dt)
    p_q = float(np.real(rho_q[level, level]))
    p_p = float(np.real(rho_p[level, level]))
    if cfg.repetitions is not None:
        p_q, p_p = sampled_populations(p_q, p_p, cfg.repetitions, cfg.flip_prob, cfg.seed)

    g = _full_population_generator(quenched)
    pop = np.real(np.diag(rho_q))
    first = (g @ pop)[level]
    second = (g @ (g @ pop))[level]
    return ProtocolResult(
        t_q=cfg.t_q, dt=cfg.dt, p_q=p_q, p_probe=p_p,
        estimate=(p_q - p_p) / cfg.dt,
        derivative=float(-first),
        reference=tp.current(gen, rho_q, cfg.source, cfg.drain).source,
        bias_bound=0.5 * cfg.dt * abs(float(second)),
        gamma_tot=gtot,
    )


def _full_population_generator(gen):
    r = gen.rate_matrix().copy()
    np.fill_diagonal(r, 0.0)
    return r - np.diag(r.sum(axis=0))


def bias_order(cfg, dts):
    """Log-log slope of |I_est - I_exact| against dt (deterministic readout)."""
    errs = []
    for dt in dts:
        res = run_protocol(replace(cfg, dt=float(dt), repetitions=None))
        errs.append(abs(res.estimate - res.derivative))
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    return float(slope), np.array(errs)


def equilibration_scan(cfg, t_qs):
    """Protocol outputs against t_q (transient equilibration)."""
    return [run_protocol(replace(cfg, t_q=float(t), min_equilibration=0.0)) for t in t_qs]


def quench_rates(gen, source="S"):
    """(Gamma_MS, Gamma_SM) of the dominant source channel of the probed level.

    Gamma_MS pumps the probed level up into its partner, Gamma_SM returns it.
    """
    level = probe_level(gen)
    a, e = gen.absorb[source], gen.emit[source]
    partner = int(np.argmax(a[:, level]))
    return float(a[partner, level]), float(e[level, partner])


def quench_rate_equations(gamma_ms, gamma_sm, p0, times, t_q=0.0, method="closed"):
    """Two-level populations (rho_dd, rho_TT) after the quench with source rates only.

    method="closed" uses the exponential solution, "ode" integrates the rate
    equations (regression against the closed form).
    """
    times = np.asarray(times, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    if np.any(times < t_q):
        raise ValueError("times must not precede the quench")
    s = gamma_ms + gamma_sm
    if method == "closed":
        if s == 0:
            return np.tile(p0, (len(times), 1))
        trip_inf = gamma_ms / s
        trip = trip_inf + (p0[1] - trip_inf) * np.exp(-s * (times - t_q))
        down = p0.sum() - trip
        return np.column_stack([down, trip])
    if method == "ode":
        m = np.array([[-gamma_ms, gamma_sm], [gamma_ms, -gamma_sm]])
        if len(times) == 0:
            return np.zeros((0, 2))
        sol = solve_ivp(lambda _, p: m @ p, (t_q, times.max()), p0, t_eval=times,
                        method="DOP853", rtol=1e-12, atol=1e-14)
        return sol.y.T
    if method == "expm":
        m = np.array([[-gamma_ms, gamma_sm], [gamma_ms, -gamma_sm]])
        return np.array([linalg.expm(m * (t - t_q)) @ p0 for t in times])
    raise ValueError(f"unknown method {method!r}")
