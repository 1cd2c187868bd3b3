"""Brute-force reference: spins x two truncated reservoir modes under a full Lindblad equation.

Frame: each reservoir mode rotates with its own sideband drive, leaving the
static Hamiltonian

    H = H_m + sum_r delta_r a_r^+ a_r + sum_r (X_r a_r + X_r^+ a_r^+),
    X_r = sum_i g_ir sigma_i^+,

and cooling jump operators sqrt(kappa (nbar+1)) a_r and sqrt(kappa nbar) a_r^+,
which damp the mode amplitude at kappa/2 (Lorentzian DOS of full width kappa).

Only the spin subspace reachable from the initial state is kept, which also
removes the dark singlet sector whose presence would make the steady state
non-unique.
"""

import time
from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse
from scipy.sparse.linalg import spsolve

from . import magnet as mg

DEFAULT_NMAX = 6
NMAX_CAP = 14
TOP_FOCK_TOL = 1e-4


class OracleError(RuntimeError):
    pass


def destroy(n_max):
    return sparse.diags(np.sqrt(np.arange(1, n_max + 1)), 1, shape=(n_max + 1, n_max + 1), format="csr")


def invariant_subspace(rho0, ops, tol=1e-12):
    """Orthonormal basis of the smallest subspace holding rho0's range and closed under ops."""
    w, v = np.linalg.eigh(0.5 * (rho0 + rho0.conj().T))
    basis = v[:, w > tol]
    while True:
        cand = np.hstack([basis] + [op @ basis for op in ops])
        u, s, _ = np.linalg.svd(cand, full_matrices=False)
        new = u[:, s > tol * max(s[0], 1.0)]
        if new.shape[1] == basis.shape[1]:
            return new
        basis = new


def _number_basis(q, hm, n_spins):
    """Re-express the sector in eigenvectors of the spin-up count when the dynamics conserve it.

    Returns (basis, counts) or (q, None) if the count is not conserved.
    """
    diag = np.zeros(1)
    for _ in range(n_spins):
        diag = np.add.outer(diag, np.array([1.0, 0.0])).reshape(-1)
    nup = np.diag(diag)
    if np.linalg.norm(hm @ nup - nup @ hm) > 1e-12 * max(np.linalg.norm(hm), 1.0):
        return q, None
    if np.linalg.norm(nup @ q - q @ (q.conj().T @ nup @ q)) > 1e-10:
        return q, None
    w, u = np.linalg.eigh(q.conj().T @ nup @ q)
    return q @ u, np.round(w).astype(int)


@dataclass(frozen=True)
class FullModel:
    n_max: int
    sector: np.ndarray  # spin basis (columns, computational) of the simulated sector
    hamiltonian: sparse.csr_matrix
    jumps: tuple
    annihilators: dict  # label -> a_r on the composite space
    reservoirs: dict
    spin_dim: int
    number: np.ndarray = None  # conserved excitation count per basis state, if any

    @property
    def dim(self):
        return self.hamiltonian.shape[0]


def build_full(model, drive, reservoirs, n_max=DEFAULT_NMAX, rho0=None, cap=NMAX_CAP):
    """Composite model on (spin sector) x Fock(n_max) x Fock(n_max) for reservoirs S, D."""
    if n_max > cap:
        raise OracleError(f"n_max={n_max} exceeds cap {cap}")
    labels = tuple(drive.labels)
    if len(labels) != 2:
        raise OracleError("the oracle handles exactly two reservoirs")
    hm = mg.build_hamiltonian(model)
    xs = dict(zip(labels, drive.operators()))
    if rho0 is None:
        psi = np.zeros(hm.shape[0])
        psi[-1] = 1.0
        rho0 = np.outer(psi, psi)
    ops = [hm] + [x for x in xs.values() if np.any(x)] + [x.conj().T for x in xs.values() if np.any(x)]
    q = invariant_subspace(rho0, ops)
    q, spin_number = _number_basis(q, hm, model.n_spins)
    k = q.shape[1]
    nf = n_max + 1
    eye_f = sparse.identity(nf, format="csr")
    eye_s = sparse.identity(k, format="csr")
    a = destroy(n_max)
    num = a.T @ a

    def embed(spin_op, f1, f2):
        return sparse.kron(sparse.kron(spin_op, f1), f2, format="csr")

    hs = sparse.csr_matrix(q.conj().T @ hm @ q)
    ann = {labels[0]: embed(eye_s, a, eye_f), labels[1]: embed(eye_s, eye_f, a)}
    numbers = {labels[0]: embed(eye_s, num, eye_f), labels[1]: embed(eye_s, eye_f, num)}
    h = embed(hs, eye_f, eye_f).astype(complex)
    jumps = []
    for r in labels:
        res = reservoirs[r]
        xr = sparse.csr_matrix(q.conj().T @ xs[r] @ q)
        xr_full = embed(xr, eye_f, eye_f)
        h = h + res.detuning * numbers[r] + xr_full @ ann[r] + (xr_full @ ann[r]).conj().T
        jumps.append(np.sqrt(res.kappa * (res.nbar + 1.0)) * ann[r])
        if res.nbar > 0:
            jumps.append(np.sqrt(res.kappa * res.nbar) * ann[r].T.tocsr())
    if spin_number is None:
        number = None
    else:
        phon = np.arange(nf)
        number = (spin_number[:, None, None] + phon[None, :, None] + phon[None, None, :]).reshape(-1)
    return FullModel(n_max, q, h.tocsr(), tuple(jumps), ann, dict(reservoirs), hm.shape[0], number)


def liouvillian(fm):
    """Row-major vectorized Lindblad generator (sparse)."""
    d = fm.dim
    eye = sparse.identity(d, format="csr")
    h = fm.hamiltonian
    out = -1j * (sparse.kron(h, eye) - sparse.kron(eye, h.T))
    for op in fm.jumps:
        ld = (op.conj().T @ op).tocsr()
        out = out + sparse.kron(op, op.conj()) - 0.5 * sparse.kron(ld, eye) - 0.5 * sparse.kron(eye, ld.T)
    return out.tocsc()


def full_steady_state(fm):
    """Unique stationary state of the composite model within its spin sector.

    When an excitation count is conserved by H and shifted by +-1 by every jump,
    the stationary state only has coherences between equal counts, so the
    solve is restricted to those matrix elements.
    """
    d = fm.dim
    if fm.n_max == 0:
        raise OracleError("n_max = 0: exchange is inert and every spin state is stationary")
    lv = liouvillian(fm)
    if fm.number is None:
        keep = np.arange(d * d)
    else:
        keep = np.flatnonzero((fm.number[:, None] == fm.number[None, :]).reshape(-1))
    sub = lv[keep, :][:, keep].tolil()
    diag_pos = np.flatnonzero(np.isin(keep, np.arange(d) * (d + 1)))
    sub[0, :] = 0
    sub[0, diag_pos] = 1.0
    b = np.zeros(len(keep), dtype=complex)
    b[0] = 1.0
    x = spsolve(sub.tocsc(), b)
    if not np.all(np.isfinite(x)):
        raise OracleError("steady-state solve failed (singular generator)")
    full = np.zeros(d * d, dtype=complex)
    full[keep] = x
    rho = full.reshape(d, d)
    return 0.5 * (rho + rho.conj().T)


def reduced_spin(fm, rho):
    """Spin state on the full register (computational basis)."""
    k = fm.sector.shape[1]
    nf = fm.n_max + 1
    r = rho.reshape(k, nf * nf, k, nf * nf)
    rs = np.einsum("aibi->ab", r)
    return fm.sector @ rs @ fm.sector.conj().T


def reduced_mode(fm, rho, which):
    k = fm.sector.shape[1]
    nf = fm.n_max + 1
    r = rho.reshape(k, nf, nf, k, nf, nf)
    if which == 0:
        return np.einsum("aibajb->ij", r)
    return np.einsum("aibaic->bc", r)


def top_fock_population(fm, rho):
    return max(np.real(reduced_mode(fm, rho, m)[-1, -1]) for m in (0, 1))


def thermal_state(nbar, n_max):
    if nbar == 0:
        p = np.zeros(n_max + 1)
        p[0] = 1.0
    else:
        p = (nbar / (1.0 + nbar)) ** np.arange(n_max + 1) / (1.0 + nbar)
    return np.diag(p / p.sum())


def fidelity(rho, sigma):
    s = linalg.sqrtm(rho)
    return float(np.real(np.trace(linalg.sqrtm(s @ sigma @ s))) ** 2)


def mode_occupation(fm, rho, label):
    a = fm.annihilators[label]
    return _expect(a.conj().T @ a, rho)


def _expect(op, rho):
    return float(np.real(np.sum(op.multiply(rho.T))))


def jump_flux(fm, rho, label):
    """Net quanta removed from mode `label` by its cooling laser, per unit time.

    Uses the truncated a a^+ so that the bookkeeping is exact within the
    simulated space (quanta are conserved by H, so the fluxes balance).
    """
    a = fm.annihilators[label]
    res = fm.reservoirs[label]
    return res.kappa * ((res.nbar + 1.0) * _expect(a.conj().T @ a, rho) - res.nbar * _expect(a @ a.conj().T, rho))


def full_current(fm, rho):
    """(I_S, I_D): quanta injected by the source laser and dumped by the drain laser."""
    s, d = tuple(fm.annihilators)
    return -jump_flux(fm, rho, s), jump_flux(fm, rho, d)


def solve_adequate(model, drive, reservoirs, n_max=DEFAULT_NMAX, rho0=None,
                   cap=NMAX_CAP, tol=TOP_FOCK_TOL):
    """Steady state with n_max raised until the top Fock level is nearly empty."""
    while True:
        fm = build_full(model, drive, reservoirs, n_max, rho0, cap)
        rho = full_steady_state(fm)
        if top_fock_population(fm, rho) < tol:
            return fm, rho
        n_max += 1
        if n_max > cap:
            raise OracleError(f"truncation inadequate up to cap {cap}")


def scaled_drive(drive, reservoirs, ratio):
    """Drive with each reservoir's largest coupling set to `ratio` * kappa_r."""
    out = {}
    for r in drive.labels:
        g = np.asarray(drive.couplings[r], dtype=complex)
        peak = np.max(np.abs(g))
        out[r] = g * (ratio * reservoirs[r].kappa / peak) if peak > 0 else g
    return mg.ExchangeDrive(out, dict(drive.detunings))


def compare(model, drive, reservoirs, n_max=DEFAULT_NMAX, cap=NMAX_CAP, tol=TOP_FOCK_TOL,
            adequate=True):
    """Effective master equation vs the full model for one drive.

    Returns populations in the magnet eigenbasis (effective, full), the
    currents (I_S, I_D) of both, and truncation diagnostics.
    """
    from . import transport as tp

    spectrum = mg.solve_magnet(model, drive)
    gen = tp.build_generator(mg.transition_data(spectrum, drive), reservoirs)
    rho0 = tp.all_down(spectrum)
    eff = tp.steady_state(gen, rho0)
    cur = tp.current(gen, eff)
    t0 = time.perf_counter()
    if adequate:
        fm, rho = solve_adequate(model, drive, reservoirs, n_max, None, cap, tol)
    else:
        fm = build_full(model, drive, reservoirs, n_max, None, cap)
        rho = full_steady_state(fm)
    elapsed = time.perf_counter() - t0
    full_pop = np.real(np.diag(tp.to_eigenbasis(spectrum, reduced_spin(fm, rho))))
    return dict(
        populations_eff=np.real(np.diag(eff)), populations_full=full_pop,
        current_eff=(cur.source, cur.drain), current_full=full_current(fm, rho),
        n_max=fm.n_max, top_fock=top_fock_population(fm, rho), seconds=elapsed,
        model=fm, state=rho,
    )


def discrepancies(result, floor=1e-3):
    """(max relative population error over levels above `floor`, relative drain-current error)."""
    pe, pf = result["populations_eff"], result["populations_full"]
    keep = pe >= floor
    pop = float(np.max(np.abs(pf[keep] - pe[keep]) / pe[keep]))
    ie, jf = result["current_eff"][1], result["current_full"][1]
    return pop, abs(jf - ie) / abs(ie)
