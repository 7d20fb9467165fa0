import math

import numpy as np
import pytest

from mqclab.errors import BadParams, FitFailure
from mqclab.mqc import ClusterEstimate
from mqclab.pheno import (
    PhenoParams,
    fit_alpha_b,
    fit_alpha_b_joint,
    simulate_model,
    stationary_kloc,
    update_map_step,
)
from mqclab.protocols import ClusterSeries


def synthetic_series(k, tau, p, start=0):
    s = ClusterSeries(p=p)
    for i, value in enumerate(k):
        est = ClusterEstimate(float(value), math.nan, math.nan, math.sqrt(value), math.nan)
        s.append(start + i, (start + i) * tau, est, 1.0)
    return s


def noisy_trajectory(params, k0, steps, noise, seed):
    clean = simulate_model(k0, params, steps).trajectory
    rng = np.random.default_rng(seed)
    return clean * (1 + noise * rng.standard_normal(clean.size))


def test_params_validation():
    for kwargs in (dict(alpha=0), dict(b=-1), dict(p=0), dict(p=1.5), dict(tau=0)):
        base = dict(alpha=1.0, b=1.0, p=0.1, tau=1e-3)
        base.update(kwargs)
        with pytest.raises(BadParams):
            PhenoParams(**base)


def test_fixed_point():
    params = PhenoParams(alpha=1.0, b=1.0, p=0.1, tau=1e-3)
    assert stationary_kloc(params) == 25.0
    for k0 in (2.0, 80.0):
        traj = simulate_model(k0, params, 100_000).trajectory
        assert abs(traj[-1] - 25) / 25 < 0.01
    pred = simulate_model(140.0, params, 10)
    assert np.all(np.diff(pred.trajectory) < 0)
    assert pred.k_loc == 25.0


def test_single_step():
    params = PhenoParams(alpha=2.0, b=0.5, p=0.2, tau=0.01)
    k1 = 9.0 * 1.02
    assert update_map_step(9.0, params) == pytest.approx(k1 / (1 + math.sqrt(k1) * 0.001) ** 2)
    with pytest.raises(BadParams):
        update_map_step(0.0, params)


def test_fit_recovers_parameters():
    # tau chosen so the trajectory saturates inside the sampled window
    params = PhenoParams(alpha=1.0, b=0.8, p=0.1, tau=0.02)
    k = noisy_trajectory(params, 1.0, 400, 0.01, seed=1)
    alpha, b, rms = fit_alpha_b(synthetic_series(k, params.tau, params.p))
    assert abs(alpha - 1.0) < 0.05
    assert abs(b - 0.8) / 0.8 < 0.05
    assert rms < 0.02


def test_joint_fit_over_weights():
    items = []
    for i, p in enumerate((0.05, 0.1, 0.2)):
        params = PhenoParams(alpha=1.5, b=1.2, p=p, tau=0.02)
        k = noisy_trajectory(params, 1.0, 500, 0.01, seed=10 + i)
        items.append((synthetic_series(k, params.tau, p), None))
    alpha, b, _ = fit_alpha_b_joint(items)
    assert abs(alpha - 1.5) / 1.5 < 0.05
    assert abs(b - 1.2) / 1.2 < 0.05


def test_fit_from_above_fixed_point():
    params = PhenoParams(alpha=1.0, b=1.0, p=0.1, tau=0.02)
    k = noisy_trajectory(params, 120.0, 400, 0.005, seed=3)
    alpha, b, _ = fit_alpha_b(synthetic_series(k, params.tau, params.p))
    assert abs(alpha - 1.0) < 0.05 and abs(b - 1.0) < 0.05


def test_fit_failures():
    k = np.linspace(1, 5, 30)
    with pytest.raises(FitFailure, match="b unidentifiable"):
        fit_alpha_b(synthetic_series(k, 0.1, 0.0))
    with pytest.raises(FitFailure):
        fit_alpha_b(synthetic_series(k[:5], 0.1, 0.1))
    lumpy = synthetic_series(k, 0.1, 0.1)
    lumpy.times[3] += 0.05
    with pytest.raises(FitFailure):
        fit_alpha_b(lumpy)
