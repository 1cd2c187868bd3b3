"""Full spin x phonon model against the effective master equation.

Expected numbers below were produced once by the sector-restricted sparse
solve and are frozen; they guard the oracle itself against regressions.
"""

import warnings

import numpy as np
import pytest

from _common import CONFIGS, J, dimer_setup
from iontransport import config as cf
from iontransport import dimer as dm
from iontransport import experiment as ex
from iontransport import oracle as orc
from iontransport import transport as tp

FROZEN = {
    0.1: dict(full_pop=[0.0, 5.989104349425e-02, 3.104472358698e-03, 9.370044841470e-01],
              full_current=0.10119818535481993, eff_current=0.10548644871570975,
              errors=(0.02235111050874849, 0.04065226778508853)),
    0.05: dict(full_pop=[0.0, 6.085163525623e-02, 3.156271450198e-03, 9.359920932936e-01],
               full_current=0.026096974658600242, eff_current=0.026371612178927438,
               errors=(0.00603873325741149, 0.010414134655928735)),
}
EFF_POP = [0.0, 0.061208525176, 0.003175447128, 0.935616027695]


@pytest.fixture(scope="module")
def setup():
    return ex.build(cf.parse_config(CONFIGS / "oracle.yaml"))


@pytest.fixture(scope="module")
def results(setup):
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for ratio in FROZEN:
            out[ratio] = orc.compare(setup.model, orc.scaled_drive(setup.drive, setup.reservoirs, ratio),
                                     setup.reservoirs, n_max=6)
    return out


@pytest.mark.parametrize("ratio", sorted(FROZEN))
def test_frozen_oracle_values(results, ratio):
    res, exp = results[ratio], FROZEN[ratio]
    assert res["n_max"] == 6
    assert res["populations_eff"] == pytest.approx(EFF_POP, abs=1e-11)
    assert res["populations_full"] == pytest.approx(exp["full_pop"], abs=1e-11)
    assert res["current_full"][1] == pytest.approx(exp["full_current"], rel=1e-8)
    assert res["current_eff"][1] == pytest.approx(exp["eff_current"], rel=1e-10)
    assert orc.discrepancies(res) == pytest.approx(exp["errors"], rel=1e-6)


def test_truncation_adequate(results):
    for res in results.values():
        assert res["top_fock"] < 1e-4


def test_source_and_drain_fluxes_balance(results):
    for res in results.values():
        i_s, i_d = res["current_full"]
        assert abs(i_s - i_d) <= 1e-8 * abs(i_d)


def test_composite_state_is_valid(results):
    rho = results[0.1]["state"]
    assert abs(np.trace(rho) - 1) < 1e-10
    assert np.max(np.abs(rho - rho.conj().T)) < 1e-12
    assert np.linalg.eigvalsh(rho)[0] > -1e-9


def test_current_converged_in_nmax(setup):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        drive = orc.scaled_drive(setup.drive, setup.reservoirs, 0.1)
        a = orc.compare(setup.model, drive, setup.reservoirs, n_max=6, adequate=False)
        b = orc.compare(setup.model, drive, setup.reservoirs, n_max=8, adequate=False)
    assert abs(b["current_full"][1] / a["current_full"][1] - 1) < 0.01


def test_matches_closed_form_current(setup, results):
    assert setup.coupling == pytest.approx(J)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = dimer_setup(kappa=J / 20, delta=(-2 * J, -1.975 * J), g_over_kappa=(0.1, 0.1))
    assert results[0.1]["current_full"][1] == pytest.approx(dm.analytic_current(s.dimer), rel=0.1)


def test_decoupled_modes_are_thermal(setup):
    drive = orc.scaled_drive(setup.drive, setup.reservoirs, 0.0)
    fm = orc.build_full(setup.model, drive, setup.reservoirs, n_max=6)
    rho = orc.full_steady_state(fm)
    for k, r in enumerate("SD"):
        therm = orc.thermal_state(setup.reservoirs[r].nbar, 6)
        assert np.allclose(orc.reduced_mode(fm, rho, k), therm, atol=1e-12)
    assert orc.full_current(fm, rho) == pytest.approx((0.0, 0.0), abs=1e-14)


def test_weak_exchange_keeps_modes_thermal(setup):
    drive = orc.scaled_drive(setup.drive, setup.reservoirs, 0.05)
    fm, rho = orc.solve_adequate(setup.model, drive, setup.reservoirs)
    for k, r in enumerate("SD"):
        therm = orc.thermal_state(setup.reservoirs[r].nbar, fm.n_max)
        assert orc.fidelity(orc.reduced_mode(fm, rho, k), therm) > 0.999


def test_zero_bias_gives_no_current(setup):
    res = {r: setup.reservoirs[r].with_(nbar=0.1) for r in "SD"}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = orc.compare(setup.model, orc.scaled_drive(setup.drive, res, 0.1), res, n_max=6)
    assert abs(out["current_full"][1]) < 1e-12 * out["model"].reservoirs["S"].kappa
    spin = orc.reduced_spin(out["model"], out["state"])
    spin_eig = tp.to_eigenbasis(ex.build(cf.parse_config(CONFIGS / "oracle.yaml")).spectrum, spin)
    assert np.max(np.abs(spin_eig - np.diag(np.diag(spin_eig)))) < 1e-10


def test_zero_phonons_freeze_the_spins(setup):
    fm = orc.build_full(setup.model, setup.drive, setup.reservoirs, n_max=0)
    assert fm.dim == fm.sector.shape[1]
    psi = np.zeros(fm.dim)
    psi[-1] = 1.0
    vec = np.outer(psi, psi).reshape(-1)
    assert np.max(np.abs(orc.liouvillian(fm) @ vec)) < 1e-14
    with pytest.raises(orc.OracleError):
        orc.full_steady_state(fm)


def test_dimension_cap(setup):
    with pytest.raises(orc.OracleError, match="cap"):
        orc.build_full(setup.model, setup.drive, setup.reservoirs, n_max=15)
