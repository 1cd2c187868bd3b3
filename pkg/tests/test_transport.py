from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from scipy.linalg import expm
from hypothesis import given, settings
from hypothesis import strategies as st

from _common import J, dimer_setup, levels, random_density
from iontransport import dimer as dm
from iontransport import magnet as mg
from iontransport import reservoir as rsv
from iontransport import transport as tp


def test_dimer_channel_rates():
    s = dimer_setup(kappa=J / 5, nbar=(0.3, 0.05))
    lv = levels(s)
    rates = dm.channel_rates(s.dimer)
    for r in "SD":
        g, res = s.drive.couplings[r][0], s.reservoirs[r]
        assert s.gen.emit[r][lv["dd"], lv["T"]] == pytest.approx(
            4 * np.pi * g**2 * res.dos(-2 * J) * (1 + res.nbar), rel=1e-12)
        assert s.gen.absorb[r][lv["uu"], lv["T"]] == pytest.approx(rates[r]["Mr(uu,T)"], rel=1e-12)
        assert s.gen.emit[r][lv["T"], lv["uu"]] == pytest.approx(rates[r]["rM(T,uu)"], rel=1e-12)
        assert s.gen.absorb[r][lv["T"], lv["dd"]] == pytest.approx(rates[r]["Mr(T,dd)"], rel=1e-12)


def test_lamb_shift_vanishes_on_resonance():
    # the triplet is reached from |dd> through the -2J channel only
    s = dimer_setup(delta=(-2 * J, -2 * J))
    lv = levels(s)
    for r in "SD":
        assert s.gen.lamb[r][lv["T"]] == 0.0
        assert s.gen.lamb[r][lv["dd"]] == 0.0
        assert s.gen.lamb[r][lv["uu"]] != 0.0  # +2J channel, 4J off resonance
    off = dimer_setup(delta=(-1.9 * J, -1.9 * J))
    assert off.gen.lamb["S"][levels(off)["T"]] != 0.0


def test_validity_limits():
    with pytest.warns(UserWarning, match="exceeds 0.1"):
        dimer_setup(g_over_kappa=(0.1, 0.1))
    with pytest.raises(ValueError, match="reservoir picture invalid"):
        dimer_setup(g_over_kappa=(0.4, 0.1))
    with pytest.raises(ValueError):
        tp.build_generator(dimer_setup().transitions, dimer_setup().reservoirs, mode="magic")


def test_rates_nonnegative_and_detailed_balance():
    s = dimer_setup(kappa=J / 2, nbar=(0.7, 0.2), delta=(-1.3 * J, 0.4 * J))
    for r in "SD":
        a, e = s.gen.absorb[r], s.gen.emit[r]
        assert np.all(a >= 0) and np.all(e >= 0)
        n = s.reservoirs[r].nbar
        nz = a > 0
        assert np.allclose(a[nz] * (1 + n), e.T[nz] * n, rtol=1e-12, atol=0)


def test_propagate_without_rates_is_static():
    s = dimer_setup(g_over_kappa=(0.0, 0.0))
    rho0 = random_density(4, np.random.default_rng(0))
    rho = tp.propagate(s.gen, rho0, 100.0)
    assert np.allclose(rho, rho0, atol=1e-12)


def test_propagate_zero_time_exact():
    s = dimer_setup()
    rho0 = random_density(4, np.random.default_rng(1))
    assert np.array_equal(tp.propagate(s.gen, rho0, 0.0), rho0)
    assert np.array_equal(tp.asymptotic_state(s.gen, rho0, 0.0), rho0)


def test_dimer_relaxes_exponentially():
    s = dimer_setup()
    lv = levels(s)
    gtot = dm.total_rate(s.dimer)
    dd_eq, tt_eq, _ = dm.eq_populations(s.dimer)
    ts = np.array([0.5, 1.0, 2.0]) / gtot
    for t, rho in zip(ts, tp.propagate(s.gen, s.rho0, ts[-1], t_eval=ts)):
        expect = tt_eq * (1 - np.exp(-gtot * t))
        assert rho[lv["T"], lv["T"]].real == pytest.approx(expect, rel=2e-3)


def test_propagate_matches_exact_exponential():
    for mode in (tp.SECULAR, tp.BOHR):
        s = dimer_setup(kappa=J / 2, mode=mode, nbar=(0.5, 0.1))
        rho0 = random_density(4, np.random.default_rng(2))
        t = 3 / tp.relaxation_rate(s.gen)
        a = tp.propagate(s.gen, rho0, t)
        if mode == tp.SECULAR:
            b = tp.asymptotic_state(s.gen, rho0, t)
        else:
            b = (expm(tp.superoperator(s.gen) * t) @ rho0.reshape(-1)).reshape(4, 4)
        assert np.max(np.abs(a - b)) < 1e-8


def test_steady_state_matches_populations_formula():
    s = dimer_setup()
    lv = levels(s)
    rho = tp.steady_state(s.gen, s.rho0, method="both")
    dd, tt, _ = dm.eq_populations(s.dimer)
    assert rho[lv["dd"], lv["dd"]].real == pytest.approx(dd, rel=1e-2)
    assert rho[lv["T"], lv["T"]].real == pytest.approx(tt, rel=1e-2)
    tp.validate_density(rho)


def test_singlet_is_stationary():
    s = dimer_setup()
    lv = levels(s)
    sing = np.zeros((4, 4), complex)
    sing[lv["S"], lv["S"]] = 1
    for method in ("nullspace", "propagate"):
        assert np.allclose(tp.steady_state(s.gen, sing, method=method), sing, atol=1e-12)


def test_zero_bias_is_thermal():
    s = dimer_setup(nbar=(0.2, 0.2), kappa=J / 2)
    rho = tp.steady_state(s.gen, s.rho0)
    assert np.max(np.abs(rho - np.diag(np.diag(rho)))) < 1e-12
    lv = levels(s)
    n = 0.2
    assert rho[lv["T"], lv["T"]].real / rho[lv["dd"], lv["dd"]].real == pytest.approx(n / (1 + n), rel=1e-9)
    assert abs(tp.current(s.gen, rho).source) < 1e-12


def test_current_examples():
    s = dimer_setup()
    rho = tp.steady_state(s.gen, s.rho0)
    cur = tp.current(s.gen, rho)
    assert cur.source > 0
    assert cur.source == pytest.approx(dm.analytic_current(s.dimer), rel=1e-2)
    assert abs(sum(c[2] for c in cur.channels) - cur.source) <= 1e-12 * abs(cur.source)
    assert cur.energy == cur.source * s.reservoirs["S"].omega


@pytest.mark.parametrize("mode", [tp.SECULAR, tp.BOHR])
def test_quanta_bookkeeping(mode):
    s = dimer_setup(kappa=J / 2, nbar=(0.6, 0.1), mode=mode, delta=(-1.5 * J, -2.2 * J))
    cur = tp.current(s.gen, tp.steady_state(s.gen, s.rho0))
    assert abs(cur.source - cur.drain) < 1e-10 * abs(cur.source)


def test_secular_and_bohr_agree_in_the_resolved_regime():
    a = dimer_setup(mode=tp.SECULAR)
    b = dimer_setup(mode=tp.BOHR)
    ia = tp.current(a.gen, tp.steady_state(a.gen, a.rho0)).source
    ib = tp.current(b.gen, tp.steady_state(b.gen, b.rho0)).source
    assert ia == pytest.approx(ib, rel=1e-9)


def test_validate_density():
    rho = random_density(3, np.random.default_rng(4))
    tp.validate_density(rho)
    with pytest.raises(ValueError, match="Hermitian"):
        tp.validate_density(rho + 1e-6 * np.triu(np.ones((3, 3)), 1))
    with pytest.raises(ValueError, match="trace"):
        tp.validate_density(2 * rho)
    with pytest.raises(ValueError, match="positive"):
        tp.validate_density(np.diag([1.5, -0.5, 0.0]))


def test_without_switches_off_a_reservoir():
    s = dimer_setup()
    q = s.gen.without("D")
    assert not np.any(q.absorb["D"]) and not np.any(q.emit["D"])
    assert np.array_equal(q.absorb["S"], s.gen.absorb["S"])


def test_empty_sweep():
    s = dimer_setup()
    assert tp.current_sweep(s.transitions, s.reservoirs, [], s.rho0) == []


def sweep(s, factor=1.0, executor=None, n=41):
    pts = [{"delta_S": d, "delta_D": d, "g_S": factor, "g_D": factor} for d in np.linspace(-4, 2, n) * J]
    return tp.current_sweep(s.transitions, s.reservoirs, pts, s.rho0, executor=executor)


def test_sweep_peak_and_argmax_stability():
    s = dimer_setup()
    base = [r["I_S"] for r in sweep(s)]
    scaled = [r["I_S"] for r in sweep(s, 0.5)]
    deltas = np.linspace(-4, 2, 41)
    assert deltas[np.argmax(base)] == pytest.approx(-2.0, abs=0.15 + 1e-12)
    assert np.argmax(base) == np.argmax(scaled)


def test_sweep_parallel_is_bit_identical():
    s = dimer_setup()
    serial = sweep(s)
    with ThreadPoolExecutor(4) as pool:
        parallel = sweep(s, executor=pool)
    for a, b in zip(serial, parallel):
        assert a["I_S"] == b["I_S"] and np.array_equal(a["populations"], b["populations"])
    assert [r["I_S"] for r in sweep(s)] == [r["I_S"] for r in serial]


def test_sweep_flags_failed_points():
    s = dimer_setup()
    rows = tp.current_sweep(s.transitions, s.reservoirs, [{"kappa_S": 1e-3 * J}, {}], s.rho0)
    assert "invalid" in rows[0]["error"] and np.isnan(rows[0]["I_S"])
    assert rows[1]["error"] == ""


def random_generator(seed, n_spins, mode):
    rng = np.random.default_rng(seed)
    model = mg.SpinModel.xxz(n_spins, rng.uniform(0.2, 1.0), rng.uniform(-1, 1), rng.uniform(-0.5, 0.5))
    kappa = {r: rng.uniform(0.5, 3.0) for r in "SD"}
    g = {r: 0.09 * kappa[r] * rng.uniform(-1, 1, n_spins) for r in "SD"}
    delta = {r: rng.uniform(-3, 3) for r in "SD"}
    drive = mg.ExchangeDrive(g, delta)
    res = {r: rsv.ReservoirSpec.thermal(r, kappa[r], rng.uniform(0, 2), delta[r]) for r in "SD"}
    spec = mg.solve_magnet(model, drive)
    return tp.build_generator(mg.transition_data(spec, drive), res, mode, warn=0.5), rng


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 3), st.sampled_from([tp.SECULAR, tp.BOHR]))
def test_lindblad_structure(seed, n_spins, mode):
    gen, rng = random_generator(seed, n_spins, mode)
    rho0 = random_density(gen.dim, rng, rank=int(rng.integers(1, gen.dim + 1)))
    rate = max(tp.relaxation_rate(gen), 1e-12)
    for rho in tp.propagate(gen, rho0, 3 / rate, t_eval=np.linspace(0, 3 / rate, 4)):
        assert abs(np.trace(rho) - 1) < 1e-9
        assert np.max(np.abs(rho - rho.conj().T)) < 1e-12
        assert np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0] > -1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_dark_state_conserved(seed, n_s, n_d):
    rng = np.random.default_rng(seed)
    s = dimer_setup(kappa=J * rng.uniform(0.05, 1.0), nbar=(n_s, n_d),
                    delta=tuple(rng.uniform(-3, 3, 2) * J), g_over_kappa=tuple(rng.uniform(0, 0.07, 2)))
    lv = levels(s)
    rho0 = random_density(4, rng)
    rate = max(tp.relaxation_rate(s.gen), 1e-12)
    p0 = rho0[lv["S"], lv["S"]].real
    for rho in tp.propagate(s.gen, rho0, 5 / rate, t_eval=np.linspace(0, 5 / rate, 5)):
        assert abs(rho[lv["S"], lv["S"]].real - p0) < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0), st.floats(-4, 4))
def test_current_sign_follows_bias(n_s, n_d, delta):
    s = dimer_setup(kappa=J / 3, nbar=(n_s, n_d), delta=(delta * J, delta * J))
    i = tp.current(s.gen, tp.steady_state(s.gen, s.rho0)).source
    if abs(n_s - n_d) < 1e-9:
        assert abs(i) < 1e-12
    elif abs(i) > 1e-14:
        assert np.sign(i) == np.sign(n_s - n_d)
