"""Equilibrium positions and normal modes of a linear mixed-species ion crystal.

Lengths are measured internally in units of the Coulomb length of the
reference mass and energies in M_ref * w_z^2 * l^2, so the potential reads

    V = sum_i z_i^2 / 2 + sum_{i<j} 1 / |z_i - z_j|.

The axial spring constant is mass independent (static confinement). The radial
confinement is a pseudopotential whose frequency scales as 1/m, minus the
static defocusing that accompanies the axial confinement.
"""

from dataclasses import dataclass, field

import numpy as np

from . import units

BRANCHES = ("x", "y", "z")


class CrystalError(RuntimeError):
    pass


class InstabilityError(CrystalError):
    """The linear configuration is not a minimum of the potential."""


@dataclass(frozen=True)
class IonSpecies:
    name: str
    mass: float  # amu
    role: str = "spin"  # "coolant" | "spin"
    linewidth: float = 0.0  # rad/s, coolant dipole transition

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError(f"{self.name}: mass must be positive")
        if self.linewidth < 0:
            raise ValueError(f"{self.name}: linewidth must be non-negative")
        if self.role not in ("coolant", "spin"):
            raise ValueError(f"{self.name}: role must be 'coolant' or 'spin', got {self.role!r}")


@dataclass(frozen=True)
class TrapConfig:
    """Trap frequencies in rad/s, quoted for an ion of `reference_mass` amu."""

    omega_x: float
    omega_y: float
    omega_z: float
    reference_mass: float

    def __post_init__(self):
        if min(self.omega_x, self.omega_y, self.omega_z) <= 0:
            raise ValueError("trap frequencies must be positive")
        if self.omega_z >= min(self.omega_x, self.omega_y):
            raise ValueError("axial frequency must be below both radial frequencies")
        if self.reference_mass <= 0:
            raise ValueError("reference mass must be positive")

    @property
    def length_scale(self):
        return units.coulomb_length(self.reference_mass, self.omega_z)


@dataclass(frozen=True)
class CrystalArrangement:
    species: tuple

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        if len(self.species) == 0:
            raise ValueError("empty crystal")

    @property
    def n_ions(self):
        return len(self.species)

    @property
    def masses(self):
        return np.array([s.mass for s in self.species])

    @property
    def coolant_sites(self):
        return [i for i, s in enumerate(self.species) if s.role == "coolant"]

    @property
    def spin_sites(self):
        return [i for i, s in enumerate(self.species) if s.role == "spin"]

    def check_transport(self):
        if self.n_ions < 2:
            raise ValueError("transport needs at least two ions")
        if not self.coolant_sites:
            raise ValueError("transport needs at least one coolant ion")
        if len(self.spin_sites) < 2:
            raise ValueError("transport needs at least two spin ions")


@dataclass(frozen=True)
class NormalModes:
    """Per-branch frequencies (ascending, rad/s) and displacement matrices M[i, n]."""

    frequencies: dict
    vectors: dict
    positions: np.ndarray  # meters
    trap: TrapConfig = field(repr=False)
    arrangement: CrystalArrangement = field(repr=False)

    def axial(self, n):
        """(frequency, displacement column) of axial mode n, 1-based as in the literature."""
        return self.frequencies["z"][n - 1], self.vectors["z"][:, n - 1]


def _gradient(z):
    d = z[:, None] - z[None, :]
    np.fill_diagonal(d, np.inf)
    return z - np.sum(np.sign(d) / d**2, axis=1)


def _potential(z):
    d = np.abs(z[:, None] - z[None, :])
    iu = np.triu_indices(len(z), 1)
    return 0.5 * np.sum(z**2) + np.sum(1.0 / d[iu])


def _coulomb_kernel(z):
    """1/|z_i - z_j|^3 with zero diagonal."""
    d = np.abs(z[:, None] - z[None, :])
    np.fill_diagonal(d, np.inf)
    return 1.0 / d**3


def _axial_hessian(z):
    c = _coulomb_kernel(z)
    return np.diag(1.0 + 2.0 * c.sum(axis=1)) - 2.0 * c


def _radial_hessian(z, omega_r, trap, masses):
    c = _coulomb_kernel(z)
    ratio = (omega_r / trap.omega_z) ** 2
    confinement = (trap.reference_mass / masses) * (ratio + 0.5) - 0.5
    return np.diag(confinement - c.sum(axis=1)) + c


def equilibrium_positions(trap, arrangement, tol=1e-13, max_iter=200):
    """Axial equilibrium positions in meters, ascending.

    Damped Newton iteration on the dimensionless potential, started from a
    uniform spacing. Raises InstabilityError if a radial Hessian eigenvalue
    is not positive (zig-zag transition) and CrystalError on non-convergence.
    """
    n = arrangement.n_ions
    if n == 1:
        z = np.zeros(1)
    else:
        # uniform guess spanning roughly the known chain length
        half = 0.5 * 2.0 * n ** (0.56)
        z = np.linspace(-half, half, n)
        for _ in range(max_iter):
            g = _gradient(z)
            if np.max(np.abs(g)) < tol:
                break
            step = np.linalg.solve(_axial_hessian(z), g)
            v0 = _potential(z)
            t = 1.0
            # near the minimum the potential no longer resolves decreases; take full steps
            while t > 1e-8 and np.max(np.abs(g)) > 1e-6:
                trial = z - t * step
                if np.all(np.diff(trial) > 0) and _potential(trial) <= v0:
                    break
                t *= 0.5
            z = z - t * step
        else:
            raise CrystalError(
                f"equilibrium search did not converge, residual {np.max(np.abs(_gradient(z))):.3e}"
            )
    _check_radial(z, trap, arrangement)
    return z * trap.length_scale


def _check_radial(z, trap, arrangement):
    for branch, omega in (("x", trap.omega_x), ("y", trap.omega_y)):
        lam = np.linalg.eigvalsh(_radial_hessian(z, omega, trap, arrangement.masses))
        if lam[0] <= 0:
            k = int(np.argmin(lam))
            raise InstabilityError(
                f"radial branch {branch} unstable: mode {k + 1} has Hessian eigenvalue {lam[k]:.3e}"
            )


def _fix_signs(vectors):
    out = vectors.copy()
    for n in range(out.shape[1]):
        col = out[:, n]
        mag = np.abs(col)
        lead = int(np.flatnonzero(mag >= mag.max() - 1e-9)[0])
        if col[lead] < 0:
            out[:, n] = -col
    return out


def normal_modes(trap, arrangement, positions):
    z = np.asarray(positions, dtype=float) / trap.length_scale
    mu = arrangement.masses / trap.reference_mass
    weight = 1.0 / np.sqrt(np.outer(mu, mu))
    hessians = {
        "x": _radial_hessian(z, trap.omega_x, trap, arrangement.masses),
        "y": _radial_hessian(z, trap.omega_y, trap, arrangement.masses),
        "z": _axial_hessian(z),
    }
    freqs, vecs = {}, {}
    for branch in BRANCHES:
        lam, v = np.linalg.eigh(hessians[branch] * weight)
        if lam[0] <= 0:
            raise InstabilityError(
                f"branch {branch}: mode 1 has non-positive eigenvalue {lam[0]:.3e}"
            )
        freqs[branch] = trap.omega_z * np.sqrt(lam)
        vecs[branch] = _fix_signs(v)
    return NormalModes(freqs, vecs, np.asarray(positions, dtype=float), trap, arrangement)


def solve_crystal(trap, arrangement):
    return normal_modes(trap, arrangement, equilibrium_positions(trap, arrangement))
