import math

import numpy as np
import pytest

from mqclab.errors import Aliasing, BadConfig, Degenerate, TooShort, ValidationError
from mqclab.evolution import thermal_state
from mqclab.mqc import ClusterEstimate
from mqclab.protocols import (
    DEFAULT_P_LIST,
    ClusterSeries,
    ProtocolConfig,
    detect_plateau,
    fit_power_law,
    run_equilibrium,
    run_growth,
    run_perturbed,
    sweep_kloc,
)
from mqclab.spin_core import make_network


def series_of(values):
    s = ClusterSeries()
    for i, v in enumerate(values):
        s.append(i, float(i), ClusterEstimate(float(v), math.nan, math.nan, math.sqrt(v), math.nan), 1.0)
    return s


@pytest.fixture(scope="module")
def net8():
    return make_network("complete_random", 8, 1.0, seed=4)


def test_config_derivation():
    cfg = ProtocolConfig()
    assert cfg.tau0 == 57.6e-6 and cfg.p == 0.0
    c = cfg.with_p(0.108)
    assert c.p == pytest.approx(0.108, abs=1e-15)
    assert c.p == c.tau_sigma / (c.tau0 + c.tau_sigma)
    assert c.tau_c == c.tau0 + c.tau_sigma
    with pytest.raises(BadConfig):
        cfg.with_p(1.0)
    with pytest.raises(BadConfig):
        ProtocolConfig(tau0=0)
    with pytest.raises(BadConfig):
        ProtocolConfig(mode="trotter")
    with pytest.raises(Aliasing):
        ProtocolConfig(n_phases=8).phases_for(4)
    assert ProtocolConfig().phases_for(5) == 20
    assert DEFAULT_P_LIST == (0.025, 0.034, 0.065, 0.080, 0.108)


def test_growth_run(net8):
    series = run_growth(net8, ProtocolConfig(tau0=0.1, n_cycles=20), cross_check=True)
    assert len(series) == 21
    assert np.all(np.diff(series.times) > 0)
    assert max(abs(t - 1) for t in series.totals) < 1e-9
    assert math.isnan(series.k0) and math.isnan(series.k_width[0])
    k = series.k_width[1:]
    assert k[-1] > k[0]
    with pytest.raises(BadConfig):
        run_growth(net8, ProtocolConfig(tau0=0.1).with_p(0.1))


def test_perturbed_run_decays_total(net8):
    cfg = ProtocolConfig(tau0=0.1, n_cycles=20).with_p(0.2)
    series = run_perturbed(net8, cfg, cross_check=True)
    assert series.p == cfg.p
    assert series.totals[0] == pytest.approx(1.0)
    assert series.totals[-1] < 1.0
    np.testing.assert_allclose(series.times, np.arange(21) * cfg.tau_c)
    with pytest.raises(BadConfig):
        run_perturbed(net8, ProtocolConfig(tau0=0.1))


def test_equilibrium_zero_prep_is_perturbed(net8):
    cfg = ProtocolConfig(tau0=0.1, n_cycles=8).with_p(0.3)
    a = run_perturbed(net8, cfg)
    b = run_equilibrium(net8, cfg, 0)
    np.testing.assert_array_equal(a.k_width, b.k_width)
    assert a.totals == b.totals
    c = run_equilibrium(net8, cfg, 10)
    assert c.k0 > 0 and c.k_width[0] == c.k0
    with pytest.raises(BadConfig):
        run_equilibrium(net8, cfg, -1)


def test_sampling_is_read_only(net8):
    base = ProtocolConfig(tau0=0.1, n_cycles=12).with_p(0.2)
    every = run_perturbed(net8, base)
    sparse = run_perturbed(net8, ProtocolConfig(tau0=0.1, tau_sigma=base.tau_sigma, n_cycles=12, sample_every=3))
    assert sparse.cycles == [0, 3, 6, 9, 12]
    np.testing.assert_array_equal(sparse.k_width[1:], every.k_width[3::3])


def test_spectrum_sink(net8):
    seen = []
    run_growth(net8, ProtocolConfig(tau0=0.1, n_cycles=4, sample_every=2), on_spectrum=lambda n, s: seen.append((n, s)))
    assert [n for n, _ in seen] == [0, 2, 4]
    spec = seen[-1][1]
    assert spec.q_max == 8 and spec.asymmetry() < 1e-12


def test_plateau_rules():
    r = detect_plateau(series_of([7.0] * 10))
    assert r.reached and r.k_loc == 7.0 and r.onset_cycle == 0
    assert not detect_plateau(series_of(np.exp(0.1 * np.arange(30)))).reached
    with pytest.raises(TooShort):
        detect_plateau(series_of([1.0] * 5))
    with pytest.raises(ValidationError):
        detect_plateau(series_of([1.0] * 5), window=2)
    withnan = detect_plateau(series_of([1.0] * 9 + [math.nan]))
    assert not withnan.reached


def test_plateau_synthetic_convergence():
    rng = np.random.default_rng(0)
    t = np.arange(120)
    k = 25 * (1 - np.exp(-t / 12)) + 0.5
    k = k * (1 + rng.uniform(-0.01, 0.01, t.size))
    r = detect_plateau(series_of(k), window=10, epsilon=0.02)
    assert r.reached
    assert abs(r.k_loc - 25) < 0.5
    assert 20 < r.onset_cycle < 80


def test_power_law():
    p = np.array(DEFAULT_P_LIST)
    exponent, prefactor, err = fit_power_law(list(zip(p, p**-2.0)))
    assert abs(exponent + 2) < 1e-10 and prefactor == pytest.approx(1.0) and err < 1e-8
    alpha, b = 1.3, 0.7
    exponent, _, _ = fit_power_law(list(zip(p, (alpha / (2 * b * p)) ** 2)))
    assert abs(exponent + 2) < 1e-10
    with pytest.raises(Degenerate):
        fit_power_law([(0.1, 1.0), (0.1, 2.0), (0.1, 3.0)])
    with pytest.raises(ValidationError):
        fit_power_law([(0.1, 1.0), (0.2, 2.0)])
    with pytest.raises(ValidationError):
        fit_power_law([(0.1, 1.0), (0.2, -2.0), (0.3, 1.0)])


def test_sweep_order_duplicates_and_threads():
    sys = make_network("complete_random", 6, 1.0, seed=1)
    cfg = ProtocolConfig(tau0=0.3, n_cycles=12)
    p_list = [0.3, 0.1, 0.3]
    serial = sweep_kloc(sys, cfg, p_list, window=5)
    assert [r.p for r in serial] == [0.1, 0.3, 0.3]
    np.testing.assert_array_equal(serial[1].series.k_width, serial[2].series.k_width)
    threaded = sweep_kloc(sys, cfg, p_list, window=5, threads=3)
    for a, b in zip(serial, threaded):
        np.testing.assert_array_equal(a.series.k_width, b.series.k_width)
    with pytest.raises(BadConfig):
        sweep_kloc(sys, cfg, [0.0])


def test_sweep_reports_short_series():
    sys = make_network("chain", 4, 1.0)
    results = sweep_kloc(sys, ProtocolConfig(tau0=0.3, n_cycles=3), [0.2])
    assert not results[0].report.reached


def test_saturating_limit_keeps_orders_empty():
    # p close to 1 with tiny tau0: the state stays diagonal
    sys = make_network("complete_random", 6, 1.0, seed=2)
    cfg = ProtocolConfig(tau0=1e-9, tau_sigma=5.0, n_cycles=5)
    seen = []
    run_perturbed(sys, cfg, on_spectrum=lambda n, s: seen.append(s))
    for s in seen:
        assert np.max(np.delete(s.amplitudes, s.q_max)) < 1e-9
    assert thermal_state(sys.basis).purity == pytest.approx(1.0)
