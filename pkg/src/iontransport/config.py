"""Run configuration: a YAML file validated against a strict schema.

Keys carry their units (trap_z_MHz, jz_kHz, wavelength_nm); ratios use
``_over_`` names. Unknown keys are rejected and all schema errors are
reported together.
"""

from pathlib import Path
from typing import List, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

Scalar = float
Matrix = List[List[float]]
Couplings = Union[float, List[float]]


class ConfigError(ValueError):
    """Schema or file problem; `errors` lists (location, message) pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{loc}: {msg}" for loc, msg in self.errors))


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class Grid(Strict):
    """Either explicit `values` or `start`/`stop`/`points` (inclusive, linear)."""

    values: Optional[List[float]] = None
    start: Optional[float] = None
    stop: Optional[float] = None
    points: Optional[int] = Field(None, ge=0)

    @model_validator(mode="after")
    def _shape(self):
        ranged = (self.start, self.stop, self.points)
        if self.values is not None:
            if any(v is not None for v in ranged):
                raise ValueError("give either values or start/stop/points, not both")
            d = np.diff(self.values)
            if len(d) and not (np.all(d > 0) or np.all(d < 0)):
                raise ValueError("grid values must be strictly monotone")
        elif any(v is None for v in ranged):
            raise ValueError("grid needs values or all of start, stop, points")
        elif self.points > 1 and self.start == self.stop:
            raise ValueError("grid start and stop coincide")
        return self

    def array(self):
        if self.values is not None:
            return np.asarray(self.values, dtype=float)
        return np.linspace(self.start, self.stop, self.points)


class Species(Strict):
    name: str
    mass_amu: float = Field(gt=0)
    role: Literal["coolant", "spin"]
    linewidth_MHz: float = Field(0.0, ge=0)


class CrystalSection(Strict):
    species: List[Species] = Field(min_length=1)
    trap_x_MHz: float = Field(gt=0)
    trap_y_MHz: float = Field(gt=0)
    trap_z_MHz: float = Field(gt=0)
    reference_mass_amu: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def _axial_softest(self):
        if self.trap_z_MHz >= min(self.trap_x_MHz, self.trap_y_MHz):
            raise ValueError("trap_z_MHz must be below both radial frequencies")
        return self


class CoolingSection(Strict):
    rabi_over_linewidth: float = Field(0.5, gt=0)
    detuning_over_linewidth: float = -0.5
    wavelength_nm: float = Field(gt=0)
    angle_deg: float = 0.0
    recoil: bool = False
    source_mode: int = Field(1, ge=1)
    drain_mode: Optional[int] = Field(None, ge=1)
    kappa_floor_kHz: float = Field(0.0, ge=0)
    scan_over_linewidth: Optional[Grid] = None


class ForceSection(Strict):
    branch: Literal["x", "y"] = "x"
    beat_offset_over_trap: float = 0.1  # (mu - w_x) / w_x
    force_over_beat_offset: float = Field(0.1, ge=0)  # F x0 / (mu - w_x)


class MagnetSection(Strict):
    kind: Literal["ising", "xy", "xxz", "xyz"] = "ising"
    n_spins: Optional[int] = Field(None, ge=1)
    field_kHz: float = 0.0
    jx_kHz: Optional[Union[Scalar, Matrix]] = None
    jy_kHz: Optional[Union[Scalar, Matrix]] = None
    jz_kHz: Optional[Union[Scalar, Matrix]] = None
    force: Optional[ForceSection] = None

    @model_validator(mode="after")
    def _couplings(self):
        given = [k for k in ("jx_kHz", "jy_kHz", "jz_kHz") if getattr(self, k) is not None]
        if self.force is not None:
            if self.kind != "ising":
                raise ValueError("mediated couplings (force) are only wired for the Ising kind")
            if given:
                raise ValueError("give either a force section or explicit couplings")
        elif not given:
            raise ValueError("no spin couplings given (jx_kHz/jy_kHz/jz_kHz or force)")
        return self


class ReservoirSection(Strict):
    g_over_kappa: Optional[Couplings] = None
    g_kHz: Optional[Couplings] = None
    delta_over_J: Optional[float] = None
    delta_kHz: Optional[float] = None
    kappa_over_J: Optional[float] = Field(None, gt=0)
    kappa_kHz: Optional[float] = Field(None, gt=0)
    nbar: Optional[float] = Field(None, ge=0)
    mode_MHz: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def _one_of(self):
        for a, b in (("g_over_kappa", "g_kHz"), ("delta_over_J", "delta_kHz")):
            if (getattr(self, a) is None) == (getattr(self, b) is None):
                raise ValueError(f"give exactly one of {a}, {b}")
        if self.kappa_over_J is not None and self.kappa_kHz is not None:
            raise ValueError("give at most one of kappa_over_J, kappa_kHz")
        return self


class SweepSection(Strict):
    """Co-swept detuning delta_S = delta_D (units of J) for one or more widths."""

    delta_over_J: Grid
    kappa_over_J: Optional[List[float]] = None
    rabi_over_linewidth: Optional[List[float]] = None
    fixed_g_over_kappa: bool = True

    @model_validator(mode="after")
    def _curves(self):
        if self.kappa_over_J is not None and self.rabi_over_linewidth is not None:
            raise ValueError("give at most one of kappa_over_J, rabi_over_linewidth")
        for key in ("kappa_over_J", "rabi_over_linewidth"):
            vals = getattr(self, key)
            if vals is not None:
                if any(v <= 0 for v in vals):
                    raise ValueError(f"{key} entries must be positive")
                if len(vals) > 1 and not np.all(np.diff(vals) > 0):
                    raise ValueError(f"{key} must be strictly increasing")
        return self


class DriveSection(Strict):
    S: ReservoirSection
    D: ReservoirSection
    sweep: Optional[SweepSection] = None


class SolverSection(Strict):
    mode: Literal["secular", "bohr"] = "secular"
    state: Literal["asymptotic", "steady"] = "asymptotic"
    horizon_rates: float = Field(50.0, gt=0)
    warn_ratio: float = Field(0.1, gt=0)
    error_ratio: float = Field(0.5, gt=0)
    spin_cap: int = Field(12, ge=1)
    rtol: float = Field(1e-10, gt=0)
    atol: float = Field(1e-13, gt=0)


class ProtocolSection(Strict):
    t_q_rates: float = Field(40.0, gt=0)  # t_q * Gamma_tot
    dt_rates: float = Field(1e-3, gt=0)  # dt * Gamma_tot
    min_equilibration: float = Field(20.0, ge=0)
    repetitions: Optional[int] = Field(None, ge=1)
    flip_prob: float = Field(0.0, ge=0, lt=0.5)
    seed: int = 0
    t_q_scan_rates: Optional[Grid] = None
    dt_scan_rates: Optional[Grid] = None


class OracleSection(Strict):
    n_max: int = Field(6, ge=0)
    cap: int = Field(14, ge=0)
    top_fock_tol: float = Field(1e-4, gt=0)
    g_over_kappa: List[float] = Field(default_factory=lambda: [0.1, 0.05])


class OutputSection(Strict):
    directory: str = "out"
    prefix: str = ""
    plot: bool = False
    energy_column: bool = False


class RunConfig(Strict):
    crystal: Optional[CrystalSection] = None
    cooling: Optional[CoolingSection] = None
    magnet: MagnetSection
    drive: DriveSection
    solver: SolverSection = Field(default_factory=SolverSection)
    protocol: ProtocolSection = Field(default_factory=ProtocolSection)
    oracle: OracleSection = Field(default_factory=OracleSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def _consistency(self):
        if self.cooling is not None and self.crystal is None:
            raise ValueError("cooling section needs a crystal section")
        if self.magnet.force is not None and self.crystal is None:
            raise ValueError("mediated couplings need a crystal section")
        if self.crystal is None:
            if self.magnet.n_spins is None:
                raise ValueError("magnet.n_spins is required without a crystal section")
        else:
            spins = sum(s.role == "spin" for s in self.crystal.species)
            if self.magnet.n_spins is not None and self.magnet.n_spins != spins:
                raise ValueError(f"magnet.n_spins={self.magnet.n_spins} but the crystal has {spins} spin ions")
        if self.cooling is None:
            for r in ("S", "D"):
                res = getattr(self.drive, r)
                if res.nbar is None or (res.kappa_over_J is None and res.kappa_kHz is None):
                    raise ValueError(f"drive.{r}: kappa and nbar are required without a cooling section")
        sweep = self.drive.sweep
        if sweep is not None and sweep.rabi_over_linewidth is not None and self.cooling is None:
            raise ValueError("drive.sweep.rabi_over_linewidth needs a cooling section")
        return self


def _format(err):
    loc = ".".join(str(p) for p in err["loc"]) or "<root>"
    return loc, err["msg"]


def from_dict(data):
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError([_format(e) for e in exc.errors()]) from None


def parse_config(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError([(str(path), "config file not found")])
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError([(str(path), f"invalid YAML: {exc}")]) from None
    if not isinstance(data, dict):
        raise ConfigError([(str(path), "top level must be a mapping")])
    return from_dict(data)


def to_dict(cfg):
    return cfg.model_dump(mode="json")


def dump_config(cfg):
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)
