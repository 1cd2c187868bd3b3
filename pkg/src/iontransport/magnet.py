"""Synthetic spin Hamiltonians, their eigenbasis, and reservoir transition data.

Basis convention: site 0 is the most significant tensor factor and each spin
uses (|up>, |down>) with sigma^z = diag(1, -1), so sigma^+ = |up><down|.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

KINDS = ("ising", "xy", "xxz", "xyz")
DEFAULT_SPIN_CAP = 12

SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SY = np.array([[0.0, -1.0j], [1.0j, 0.0]])
SZ = np.array([[1.0, 0.0], [0.0, -1.0]])
SPLUS = np.array([[0.0, 1.0], [0.0, 0.0]])


class ResonanceError(ValueError):
    pass


def _coupling_matrix(value, n):
    """Scalar -> uniform nearest-neighbour chain; array -> validated symmetric matrix."""
    if value is None:
        return np.zeros((n, n))
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        m = np.zeros((n, n))
        idx = np.arange(n - 1)
        m[idx, idx + 1] = m[idx + 1, idx] = float(arr)
        return m
    if arr.shape != (n, n):
        raise ValueError(f"coupling matrix must be {n}x{n}, got {arr.shape}")
    if not np.allclose(arr, arr.T, rtol=0, atol=1e-12 * max(1.0, np.abs(arr).max())):
        raise ValueError("coupling matrix must be symmetric")
    if np.any(np.diag(arr) != 0):
        raise ValueError("coupling matrix must have zero diagonal")
    return arr.copy()


@dataclass(frozen=True)
class SpinModel:
    """Ising (x field, zz), XY / XXZ / XYZ (z field) spin chains; all couplings in rad/s."""

    kind: str
    n_spins: int
    field: float = 0.0
    jx: np.ndarray = None
    jy: np.ndarray = None
    jz: np.ndarray = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.n_spins < 1:
            raise ValueError("need at least one spin")
        n = self.n_spins
        for name in ("jx", "jy", "jz"):
            object.__setattr__(self, name, _coupling_matrix(getattr(self, name), n))
        zero = lambda m: not np.any(m)
        if self.kind == "ising" and not (zero(self.jx) and zero(self.jy)):
            raise ValueError("Ising model only has zz couplings")
        if self.kind == "xy" and not zero(self.jz):
            raise ValueError("XY model has no zz couplings")
        if self.kind == "xxz" and not np.array_equal(self.jx, self.jy):
            raise ValueError("XXZ model needs equal xx and yy couplings")

    @property
    def field_axis(self):
        return "x" if self.kind == "ising" else "z"

    @classmethod
    def ising(cls, n, j, field=0.0):
        return cls("ising", n, field, jz=j)

    @classmethod
    def xy(cls, n, jx, jy, field=0.0):
        return cls("xy", n, field, jx=jx, jy=jy)

    @classmethod
    def xxz(cls, n, jperp, jpar, field=0.0):
        return cls("xxz", n, field, jx=jperp, jy=jperp, jz=jpar)

    @classmethod
    def xyz(cls, n, jx, jy, jz, field=0.0):
        return cls("xyz", n, field, jx=jx, jy=jy, jz=jz)


def site_operator(op, site, n):
    """Embed a single-site 2x2 operator at `site` of an n-spin register (sparse)."""
    out = sparse.identity(1, format="csr")
    for k in range(n):
        out = sparse.kron(out, sparse.csr_matrix(op) if k == site else sparse.identity(2), format="csr")
    return out


def build_hamiltonian(model, cap=DEFAULT_SPIN_CAP):
    n = model.n_spins
    if n > cap:
        raise ValueError(f"{n} spins exceeds the dense cap of {cap}")
    dim = 2**n
    h = sparse.csr_matrix((dim, dim), dtype=complex)
    field_op = SX if model.field_axis == "x" else SZ
    if model.field:
        for i in range(n):
            h = h - model.field * site_operator(field_op, i, n)
    for mat, op in ((model.jx, SX), (model.jy, SY), (model.jz, SZ)):
        for i in range(n):
            for j in range(i + 1, n):
                if mat[i, j]:
                    h = h + mat[i, j] * (site_operator(op, i, n) @ site_operator(op, j, n))
    h = h.toarray()
    if not np.iscomplexobj(h) or not np.any(h.imag):
        h = h.real.copy()
    return h


def raising_operator(couplings):
    """sum_i g_i sigma_i^+ as a dense matrix on the spin register."""
    couplings = np.asarray(couplings)
    n = len(couplings)
    out = sparse.csr_matrix((2**n, 2**n), dtype=complex)
    for i, g in enumerate(couplings):
        if g:
            out = out + g * site_operator(SPLUS, i, n)
    return out.toarray()


def parity_operator(n):
    """prod_i sigma_i^z."""
    diag = np.ones(1)
    for _ in range(n):
        diag = np.kron(diag, np.array([1.0, -1.0]))
    return np.diag(diag)


@dataclass(frozen=True)
class SpinSpectrum:
    energies: np.ndarray
    vectors: np.ndarray  # columns are eigenvectors in the computational basis
    blocks: tuple  # index arrays of degenerate levels

    @property
    def dim(self):
        return len(self.energies)


def _fix_phases(vectors):
    out = vectors.astype(complex)
    for k in range(out.shape[1]):
        col = out[:, k]
        mag = np.abs(col)
        lead = int(np.flatnonzero(mag >= mag.max() - 1e-9)[0])
        out[:, k] = col * (np.abs(col[lead]) / col[lead])
    return out


def degeneracy_blocks(energies, scale=None, rtol=1e-9):
    energies = np.asarray(energies)
    if scale is None:
        scale = np.max(np.abs(energies)) if len(energies) else 1.0
    tol = rtol * max(np.max(np.abs(energies)), scale, np.finfo(float).tiny)
    blocks, start = [], 0
    for k in range(1, len(energies) + 1):
        if k == len(energies) or energies[k] - energies[k - 1] >= tol:
            blocks.append(np.arange(start, k))
            start = k
    return tuple(blocks)


def diagonalize(h, coupling_ops=(), scale=None):
    """Eigen-decomposition with a reproducible basis inside degenerate blocks.

    Inside each block the basis diagonalizes sum_r (A_r A_r^+ + C_r^+ C_r),
    where A_r (C_r) is the part of the raising operator feeding (leaving) the
    block. Levels dark to every reservoir come first within their block.
    """
    energies, vectors = np.linalg.eigh(h)
    blocks = degeneracy_blocks(energies, scale)
    vectors = vectors.astype(complex)
    ops = [np.asarray(x) for x in coupling_ops]
    if ops:
        for block in blocks:
            if len(block) < 2:
                continue
            vb = vectors[:, block]
            other = np.setdiff1d(np.arange(len(energies)), block)
            vo = vectors[:, other]
            m = np.zeros((len(block), len(block)), dtype=complex)
            for x in ops:
                a = vb.conj().T @ x @ vo  # other -> block
                c = vo.conj().T @ x @ vb  # block -> other
                m += a @ a.conj().T + c.conj().T @ c
            _, u = np.linalg.eigh(0.5 * (m + m.conj().T))
            vectors[:, block] = vb @ u
    vectors = _fix_phases(vectors)
    return SpinSpectrum(energies, vectors, blocks)


def spectrum_residual(h, spectrum):
    r = h @ spectrum.vectors - spectrum.vectors * spectrum.energies
    return np.linalg.norm(r) / max(np.linalg.norm(h), np.finfo(float).tiny)


@dataclass(frozen=True)
class ExchangeDrive:
    """Red-sideband exchange couplings g[label] over the spin register and detunings delta[label]."""

    couplings: dict
    detunings: dict

    def __post_init__(self):
        if set(self.couplings) != set(self.detunings):
            raise ValueError("couplings and detunings must name the same reservoirs")
        sizes = {len(np.atleast_1d(g)) for g in self.couplings.values()}
        if len(sizes) != 1:
            raise ValueError("all reservoirs must address the same spin register")

    @classmethod
    def from_sites(cls, arrangement, site_couplings, detunings):
        """Build from couplings listed over all crystal sites; coolant sites must be zero."""
        spins = arrangement.spin_sites
        out = {}
        for label, g in site_couplings.items():
            g = np.asarray(g)
            bad = [i for i in arrangement.coolant_sites if g[i] != 0]
            if bad:
                raise ValueError(f"reservoir {label}: coupling on coolant sites {bad}")
            out[label] = g[spins]
        return cls(out, dict(detunings))

    @property
    def labels(self):
        return tuple(self.couplings)

    @property
    def n_spins(self):
        return len(np.atleast_1d(next(iter(self.couplings.values()))))

    def operators(self):
        return [raising_operator(self.couplings[r]) for r in self.labels]


@dataclass(frozen=True)
class TransitionData:
    """omega[l, l'] = e_l - e_l' and gt[r][l, l'] = <l| sum_i g_ir s_i^+ |l'>."""

    spectrum: SpinSpectrum
    omega: np.ndarray
    dressed: dict
    detunings: dict = field(default_factory=dict)

    def operator(self, l, lp):
        """Transition operator |e_l><e_l'| in the computational basis."""
        v = self.spectrum.vectors
        return np.outer(v[:, l], v[:, lp].conj())


def transition_data(spectrum, drive):
    if 2**drive.n_spins != spectrum.dim:
        raise ValueError("drive and spectrum act on different registers")
    v = spectrum.vectors
    e = spectrum.energies
    dressed = {}
    for label, x in zip(drive.labels, drive.operators()):
        dressed[label] = v.conj().T @ x @ v
    return TransitionData(spectrum, e[:, None] - e[None, :], dressed, dict(drive.detunings))


def solve_magnet(model, drive=None, cap=DEFAULT_SPIN_CAP, scale=None):
    h = build_hamiltonian(model, cap)
    ops = drive.operators() if drive is not None else ()
    return diagonalize(h, ops, scale)


def mediated_couplings(modes, force, beat, branch="x", sites=None, guard=1e-3):
    """Spin-spin couplings mediated by a far-detuned force on a radial branch.

    J_ij = force^2 / 2 * sum_n M_in M_jn (w_r / w_n) / (beat - w_n), with `force`
    the product F x0 in rad/s and `beat` the force beat frequency. Positive J
    (antiferromagnetic) for a drive detuned above the branch.
    """
    wn = modes.frequencies[branch]
    m = modes.vectors[branch]
    w_ref = modes.trap.omega_x if branch == "x" else modes.trap.omega_y
    detuning = beat - wn
    close = np.abs(detuning) < guard * wn
    if np.any(close):
        k = int(np.flatnonzero(close)[0])
        raise ResonanceError(f"force beat within guard band of {branch} mode {k + 1}")
    if sites is not None:
        m = m[list(sites), :]
    j = 0.5 * force**2 * (m * (w_ref / wn) / detuning) @ m.T
    np.fill_diagonal(j, 0.0)
    return j
