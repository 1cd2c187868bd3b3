"""Transport master equation of the magnet after eliminating the reservoir modes.

All density matrices handled here are expressed in the magnet eigenbasis
(the columns of ``SpinSpectrum.vectors``) and in the interaction picture of
the spin Hamiltonian, so the only coherent term is the Lamb shift.

Rate convention: ``absorb[r][l, l']`` and ``emit[r][l, l']`` are the rates of
the jump |l'> -> |l> that take a quantum from / give a quantum to reservoir r.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.integrate import solve_ivp

from . import reservoir as rsv

SECULAR = "secular"
BOHR = "bohr"
DEPHASED_TOL = 1e-12


class StiffnessError(RuntimeError):
    pass


class SteadyStateError(RuntimeError):
    pass


@dataclass(frozen=True)
class TransportGenerator:
    transitions: object
    reservoirs: dict
    lamb: dict
    absorb: dict
    emit: dict
    mode: str = SECULAR

    @property
    def dim(self):
        return len(self.transitions.spectrum.energies)

    @property
    def labels(self):
        return tuple(self.reservoirs)

    @property
    def lamb_total(self):
        return sum(self.lamb.values())

    def nbar(self, label):
        return self.reservoirs[label].nbar

    def rate_matrix(self):
        """R[l, l'] = total rate of the jump |l'> -> |l> (secular structure)."""
        return sum(self.absorb[r] + self.emit[r] for r in self.labels)

    def total_rate(self):
        """Sum of all transition rates; the scale used in convergence criteria."""
        return float(np.sum(self.rate_matrix()))

    def without(self, label):
        """Generator with one reservoir's coupling switched off (quench)."""
        zero = np.zeros((self.dim, self.dim))
        return TransportGenerator(
            self.transitions, self.reservoirs,
            {**self.lamb, label: np.zeros(self.dim)},
            {**self.absorb, label: zero}, {**self.emit, label: zero}, self.mode)


def clean_couplings(gt):
    """Zero dressed couplings that are numerical noise so dark states stay exactly dark."""
    gt = np.array(gt, dtype=complex)
    scale = np.max(np.abs(gt)) if gt.size else 0.0
    gt[np.abs(gt) <= 1e-12 * scale] = 0.0
    return gt


def relaxation_rate(gen):
    """Largest total escape rate of any level: the fastest population relaxation."""
    r = gen.rate_matrix().copy()
    np.fill_diagonal(r, 0.0)
    return float(np.max(r.sum(axis=0))) if r.size else 0.0


def peak_rate(transitions, reservoirs):
    """Total rate of the strongest channel when it sits at a reservoir's DOS maximum."""
    total = 0.0
    for r, res in reservoirs.items():
        g2 = np.max(np.abs(transitions.dressed[r]) ** 2)
        total += 4.0 * g2 * (1.0 + 2.0 * res.nbar) / res.kappa
    return total


def build_generator(transitions, reservoirs, mode=SECULAR, warn=0.1, error=0.5):
    """Lamb shifts and jump rates from dressed couplings and reservoir parameters."""
    if mode not in (SECULAR, BOHR):
        raise ValueError(f"unknown mode {mode!r}")
    w = transitions.omega
    lamb, absorb, emit = {}, {}, {}
    for r, res in reservoirs.items():
        gt = clean_couplings(transitions.dressed[r])
        if gt.size:
            rsv.check_validity(np.max(np.abs(gt)), res.kappa, warn, error,
                               what=f"dressed coupling ({r})")
        g2 = np.abs(gt) ** 2
        base = 2.0 * np.pi * g2 * res.dos(w)
        absorb[r] = base * res.nbar
        emit[r] = base.T * (1.0 + res.nbar)
        x = res.detuning - w
        lamb[r] = -np.sum(g2 * x / (x**2 + (res.kappa / 2.0) ** 2), axis=1)
    return TransportGenerator(transitions, dict(reservoirs), lamb, absorb, emit, mode)


# -- density matrices -------------------------------------------------------

def validate_density(rho, herm_tol=1e-12, trace_tol=1e-10, pos_tol=1e-9):
    rho = np.asarray(rho)
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > trace_tol:
        raise ValueError(f"density matrix trace {np.trace(rho).real:.12g} != 1")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0] < -pos_tol:
        raise ValueError("density matrix is not positive")
    return rho


def to_eigenbasis(spectrum, rho_comp):
    v = spectrum.vectors
    return v.conj().T @ rho_comp @ v


def to_computational(spectrum, rho_eig):
    v = spectrum.vectors
    return v @ rho_eig @ v.conj().T


def all_down(spectrum):
    """|down...down><down...down| in the eigenbasis (default initial state)."""
    psi = np.zeros(spectrum.dim, dtype=complex)
    psi[-1] = 1.0
    return to_eigenbasis(spectrum, np.outer(psi, psi.conj()))


# -- Liouvillian ------------------------------------------------------------

def _bohr_groups(omega, mask, tol):
    pairs = np.argwhere(mask)
    groups = []
    for l, lp in sorted(map(tuple, pairs), key=lambda p: omega[p]):
        w = omega[l, lp]
        if groups and abs(w - groups[-1][0]) <= tol:
            groups[-1][1].append((l, lp))
        else:
            groups.append([w, [(l, lp)]])
    return groups


def jump_operators(gen):
    """Lindblad jump operators in the eigenbasis."""
    d = gen.dim
    ops = []
    if gen.mode == SECULAR:
        for rates in (sum(gen.absorb.values()), sum(gen.emit.values())):
            for l, lp in np.argwhere(rates > 0):
                op = np.zeros((d, d), dtype=complex)
                op[l, lp] = np.sqrt(rates[l, lp])
                ops.append(op)
        return ops
    omega = gen.transitions.omega
    scale = max(np.max(np.abs(omega)), 1.0)
    for r, res in gen.reservoirs.items():
        gt = clean_couplings(gen.transitions.dressed[r])
        for w, members in _bohr_groups(omega, gt != 0, 1e-9 * scale):
            a = np.zeros((d, d), dtype=complex)
            for l, lp in members:
                a[l, lp] = gt[l, lp]
            k = 2.0 * np.pi * float(res.dos(w))
            if res.nbar > 0:
                ops.append(np.sqrt(k * res.nbar) * a)
            ops.append(np.sqrt(k * (1.0 + res.nbar)) * a.conj().T)
    return ops


def rhs(gen, rho, ops=None):
    """d rho / dt in the eigenbasis."""
    h = gen.lamb_total
    out = -1j * (h[:, None] - h[None, :]) * rho
    if gen.mode == SECULAR:
        r = gen.rate_matrix()
        gamma = r.sum(axis=0)
        out = out + np.diag(r @ np.real(np.diag(rho))) - 0.5 * (gamma[:, None] + gamma[None, :]) * rho
        return out
    if ops is None:
        ops = jump_operators(gen)
    for op in ops:
        opd = op.conj().T
        ld = opd @ op
        out = out + op @ rho @ opd - 0.5 * (ld @ rho + rho @ ld)
    return out


def superoperator(gen, subset=None):
    """Row-major vectorized Liouvillian, optionally restricted to a level subset."""
    d = gen.dim
    idx = np.arange(d) if subset is None else np.asarray(subset)
    n = len(idx)
    eye = np.eye(n)
    h = np.diag(gen.lamb_total[idx]).astype(complex)
    sup = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for op in jump_operators(gen):
        o = op[np.ix_(idx, idx)]
        if not np.any(o):
            continue
        ld = o.conj().T @ o
        sup += np.kron(o, o.conj()) - 0.5 * np.kron(ld, eye) - 0.5 * np.kron(eye, ld.T)
    return sup


def _connectivity(gen):
    """Boolean matrix C[l, l'] = some jump maps |l'> into |l>."""
    if gen.mode == SECULAR:
        return gen.rate_matrix() > 0
    c = np.zeros((gen.dim, gen.dim), dtype=bool)
    for op in jump_operators(gen):
        c |= op != 0
    return c


def reachable(gen, rho0, tol=1e-14):
    """Levels reachable from the support of rho0 by quantum jumps (sorted)."""
    conn = _connectivity(gen)
    seen = set(np.flatnonzero(np.real(np.diag(rho0)) > tol))
    frontier = list(seen)
    while frontier:
        lp = frontier.pop()
        for l in np.flatnonzero(conn[:, lp]):
            if l not in seen:
                seen.add(int(l))
                frontier.append(int(l))
    return np.array(sorted(seen), dtype=int)


# -- stationary and long-time states ----------------------------------------

def _population_generator(gen, subset):
    r = gen.rate_matrix()[np.ix_(subset, subset)].copy()
    np.fill_diagonal(r, 0.0)
    return r - np.diag(r.sum(axis=0))


def _null_projector(mat, rel=1e-12):
    """Projection onto ker(mat) along range(mat), from SVDs of mat and mat^H."""
    n = mat.shape[0]
    norm = np.linalg.norm(mat, 2) if mat.size else 0.0
    if norm == 0:
        return np.eye(n, dtype=mat.dtype)
    _, s, vh = np.linalg.svd(mat)
    right = vh[s <= rel * norm].conj().T
    _, s2, vh2 = np.linalg.svd(mat.conj().T)
    left = vh2[s2 <= rel * norm].conj().T
    if right.shape[1] == 0 or right.shape[1] != left.shape[1]:
        raise SteadyStateError(f"kernel dimension mismatch ({right.shape[1]} vs {left.shape[1]})")
    return right @ np.linalg.solve(left.conj().T @ right, left.conj().T)


def _coherence_rates(gen):
    gamma = gen.rate_matrix().sum(axis=0)
    h = gen.lamb_total
    return 0.5 * (gamma[:, None] + gamma[None, :]) + 1j * (h[:, None] - h[None, :])


def _stationary_coherences(gen, rho0, subset):
    """Only coherences with neither decay nor rotation survive at long times."""
    c = _coherence_rates(gen)[np.ix_(subset, subset)]
    keep = np.abs(c) <= DEPHASED_TOL * max(gen.total_rate(), np.finfo(float).tiny)
    return np.where(keep, rho0[np.ix_(subset, subset)], 0.0)


def _assemble(gen, subset, block):
    rho = np.zeros((gen.dim, gen.dim), dtype=complex)
    rho[np.ix_(subset, subset)] = block
    return 0.5 * (rho + rho.conj().T)


def _steady_nullspace(gen, rho0, subset):
    if gen.mode == SECULAR:
        g = _population_generator(gen, subset)
        p0 = np.real(np.diag(rho0))[subset]
        p = np.real(_null_projector(g) @ p0)
        block = _stationary_coherences(gen, rho0, subset)
        np.fill_diagonal(block, p)
        return _assemble(gen, subset, block)
    sup = superoperator(gen, subset)
    vec = rho0[np.ix_(subset, subset)].reshape(-1)
    block = (_null_projector(sup) @ vec).reshape(len(subset), len(subset))
    return _assemble(gen, subset, block)


def _steady_doubling(gen, rho0, subset, max_doublings=200):
    total = gen.total_rate()
    if total == 0:
        return np.array(rho0, dtype=complex)
    if gen.mode == SECULAR:
        g = _population_generator(gen, subset)
        p = np.real(np.diag(rho0))[subset]
        step = linalg.expm(g / total)
        t = 1.0 / total
        for _ in range(max_doublings):
            p = step @ p
            t *= 2.0
            if np.linalg.norm(g @ p, np.inf) < 1e-12 * total:
                break
            step = step @ step
        else:
            raise SteadyStateError("propagation did not converge to a stationary state")
        block = rho0[np.ix_(subset, subset)] * np.exp(-_coherence_rates(gen)[np.ix_(subset, subset)] * t)
        block = np.where(np.abs(block) < 1e-300, 0.0, block)
        np.fill_diagonal(block, p)
        return _assemble(gen, subset, block)
    sup = superoperator(gen, subset)
    n = len(subset)
    vec = rho0[np.ix_(subset, subset)].reshape(-1).astype(complex)
    step = linalg.expm(sup / total)
    for _ in range(max_doublings):
        vec = step @ vec
        if np.linalg.norm(sup @ vec, np.inf) < 1e-12 * total:
            break
        step = step @ step
    else:
        raise SteadyStateError("propagation did not converge to a stationary state")
    return _assemble(gen, subset, vec.reshape(n, n))


def steady_state(gen, rho0, method="nullspace", agree=1e-8):
    """Exact stationary state reached from rho0.

    method: "nullspace" (kernel projection on the subspace reachable from
    rho0), "propagate" (exact propagator doubling until |d rho/dt| falls below
    1e-12 of the total rate), or "both" (cross-check to `agree`).
    """
    rho0 = np.asarray(rho0, dtype=complex)
    subset = reachable(gen, rho0)
    if method == "nullspace":
        return _steady_nullspace(gen, rho0, subset)
    if method == "propagate":
        return _steady_doubling(gen, rho0, subset)
    if method == "both":
        a = _steady_nullspace(gen, rho0, subset)
        b = _steady_doubling(gen, rho0, subset)
        diff = np.max(np.abs(a - b))
        if diff > agree:
            raise SteadyStateError(f"null-space and propagated states differ by {diff:.3e}")
        return a
    raise ValueError(f"unknown method {method!r}")


def asymptotic_state(gen, rho0, horizon):
    """State after evolving rho0 for a fixed time `horizon` (s), by exact exponentiation.

    This is the long-time state seen by an experiment of finite duration: fast
    channels have relaxed while channels slower than 1/horizon have not.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    if horizon == 0:
        return rho0.copy()
    subset = reachable(gen, rho0)
    if gen.mode == SECULAR:
        g = _population_generator(gen, subset)
        p = linalg.expm(g * horizon) @ np.real(np.diag(rho0))[subset]
        block = rho0[np.ix_(subset, subset)] * np.exp(-_coherence_rates(gen)[np.ix_(subset, subset)] * horizon)
        np.fill_diagonal(block, p)
    else:
        n = len(subset)
        vec = rho0[np.ix_(subset, subset)].reshape(-1)
        block = (linalg.expm(superoperator(gen, subset) * horizon) @ vec).reshape(n, n)
    out = rho0.copy()
    out[np.ix_(subset, subset)] = block
    return 0.5 * (out + out.conj().T)


def propagate(gen, rho0, t, rtol=1e-10, atol=1e-13, t_eval=None, method="DOP853"):
    """Integrate the master equation with an adaptive explicit Runge-Kutta scheme.

    Returns the state at time t, or a list of states at `t_eval`.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    if t == 0 and t_eval is None:
        return rho0.copy()
    d = gen.dim
    ops = jump_operators(gen) if gen.mode == BOHR else None

    def f(_, y):
        rho = (y[: d * d] + 1j * y[d * d:]).reshape(d, d)
        dr = rhs(gen, rho, ops).reshape(-1)
        return np.concatenate([dr.real, dr.imag])

    y0 = np.concatenate([rho0.real.reshape(-1), rho0.imag.reshape(-1)])
    sol = solve_ivp(f, (0.0, t), y0, method=method, rtol=rtol, atol=atol, t_eval=t_eval)
    if sol.status != 0:
        raise StiffnessError(f"integration failed ({sol.message}); use steady_state for long times")
    states = [(sol.y[: d * d, k] + 1j * sol.y[d * d:, k]).reshape(d, d) for k in range(sol.y.shape[1])]
    for s in states:
        if abs(np.trace(s) - np.trace(rho0)) > 1e-9:
            raise StiffnessError("trace drifted during integration; tighten tolerances")
    return states if t_eval is not None else states[-1]


# -- currents ---------------------------------------------------------------

@dataclass(frozen=True)
class CurrentResult:
    source: float  # quanta/s absorbed from the source
    drain: float  # quanta/s emitted into the drain
    channels: list = field(default_factory=list)  # (l_upper, l_lower, source contribution)
    omega_source: float = float("nan")

    @property
    def energy(self):
        return self.source * self.omega_source


def _net_absorbed(gen, label, rho):
    p = np.real(np.diag(rho))
    if gen.mode == SECULAR:
        gt = clean_couplings(gen.transitions.dressed[label])
        a, e = gen.absorb[label], gen.emit[label]
        chans = []
        for l, lp in np.argwhere(gt != 0):
            chans.append((int(l), int(lp), a[l, lp] * p[lp] - e[lp, l] * p[l]))
        return chans
    res = gen.reservoirs[label]
    omega = gen.transitions.omega
    gt = clean_couplings(gen.transitions.dressed[label])
    scale = max(np.max(np.abs(omega)), 1.0)
    chans = []
    for w, members in _bohr_groups(omega, gt != 0, 1e-9 * scale):
        a = np.zeros_like(rho)
        for l, lp in members:
            a[l, lp] = gt[l, lp]
        k = 2.0 * np.pi * float(res.dos(w))
        up = np.real(np.trace(a.conj().T @ a @ rho))
        down = np.real(np.trace(a @ a.conj().T @ rho))
        l, lp = members[0]
        chans.append((int(l), int(lp), k * (res.nbar * up - (1.0 + res.nbar) * down)))
    return chans


def current(gen, rho, source="S", drain="D"):
    chans = _net_absorbed(gen, source, rho)
    i_s = math.fsum(c[2] for c in chans)
    i_d = -math.fsum(c[2] for c in _net_absorbed(gen, drain, rho)) if drain in gen.reservoirs else 0.0
    return CurrentResult(i_s, i_d, chans, gen.reservoirs[source].omega)


# -- sweeps -----------------------------------------------------------------

def scale_couplings(transitions, factors):
    """Copy of TransitionData with each reservoir's dressed couplings multiplied."""
    dressed = {r: g * factors.get(r, 1.0) for r, g in transitions.dressed.items()}
    return type(transitions)(transitions.spectrum, transitions.omega, dressed, transitions.detunings)


def sweep_point(transitions, reservoirs, point, rho0, horizon=None, mode=SECULAR,
                state="asymptotic", horizon_rates=50.0, warn=0.1, error=0.5):
    """Current for one grid point.

    `point` maps optional keys delta_S, delta_D, kappa_S, kappa_D, g_S, g_D
    (the latter multiply the dressed couplings) onto the base configuration.
    With state="asymptotic" and no fixed `horizon`, the state is taken after
    `horizon_rates` relaxation times of the point's fastest channel.
    """
    res = {}
    for r, spec in reservoirs.items():
        changes = {}
        if f"delta_{r}" in point:
            changes["detuning"] = point[f"delta_{r}"]
        if f"kappa_{r}" in point:
            changes["kappa"] = point[f"kappa_{r}"]
        res[r] = spec.with_(**changes) if changes else spec
    td = scale_couplings(transitions, {r: point.get(f"g_{r}", 1.0) for r in reservoirs})
    gen = build_generator(td, res, mode, warn, error)
    if state == "asymptotic":
        if horizon is None:
            rate = relaxation_rate(gen)
            horizon = horizon_rates / rate if rate > 0 else 0.0
        rho = asymptotic_state(gen, rho0, horizon)
    elif state == "steady":
        rho = steady_state(gen, rho0)
    else:
        raise ValueError(f"unknown state {state!r}")
    return gen, rho, current(gen, rho)


def current_sweep(transitions, reservoirs, points, rho0, horizon=None, horizon_rates=50.0,
                  mode=SECULAR, state="asymptotic", executor=None, warn=0.1, error=0.5):
    """Evaluate the source current over a list of grid points (order preserved).

    Rows repeat the point keys and add I_S, I_D, error, channels, populations.
    """
    points = list(points)

    def run(point):
        row = dict(point)
        try:
            _, rho, cur = sweep_point(transitions, reservoirs, point, rho0, horizon, mode, state,
                                      horizon_rates, warn, error)
        except Exception as exc:  # per-point failure is reported, sweep continues
            row.update(I_S=float("nan"), I_D=float("nan"), error=str(exc))
            return row
        row.update(I_S=cur.source, I_D=cur.drain, error="")
        row["channels"] = cur.channels
        row["populations"] = np.real(np.diag(rho)).copy()
        return row

    if executor is not None:
        return list(executor.map(run, points))
    return [run(p) for p in points]
