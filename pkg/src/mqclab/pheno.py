"""Phenomenological growth/decay model of the cluster size.

The MQC profile is taken as ``A(q) ~ exp(-|q| / sqrt(K))``. Over one step of
length ``tau`` the cluster grows as ``K -> K (1 + alpha tau)`` while the
perturbation adds ``p b tau`` to the profile's decay exponent ``1/sqrt(K)``.
The stationary size of that map, to first order in ``tau``, is
``(alpha / (2 b p))**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import BadParams, FitFailure

MAX_LOG_RESIDUAL = 0.5


@dataclass(frozen=True)
class PhenoParams:
    alpha: float
    b: float
    p: float
    tau: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise BadParams(f"growth rate must be positive, got {self.alpha}", "alpha")
        if not self.b > 0:
            raise BadParams(f"decay rate must be positive, got {self.b}", "b")
        if not 0 < self.p <= 1:
            raise BadParams(f"perturbation weight must lie in (0, 1], got {self.p}", "p")
        if not self.tau > 0:
            raise BadParams(f"step must be positive, got {self.tau}", "tau")


@dataclass(frozen=True)
class PhenoPrediction:
    k_loc: float
    trajectory: np.ndarray


def update_map_step(k: float, params: PhenoParams) -> float:
    """One step of the full (unexpanded) map ``K1 / (1 + sqrt(K1) p b tau)**2``."""
    if not k > 0:
        raise BadParams(f"cluster size must be positive, got {k}", "k")
    grown = k * (1.0 + params.alpha * params.tau)
    return grown / (1.0 + math.sqrt(grown) * params.p * params.b * params.tau) ** 2


def stationary_kloc(params: PhenoParams) -> float:
    return (params.alpha / (2.0 * params.b * params.p)) ** 2


def simulate_model(k0: float, params: PhenoParams, steps: int) -> PhenoPrediction:
    if not k0 > 0:
        raise BadParams(f"initial cluster size must be positive, got {k0}", "k0")
    traj = np.empty(steps + 1)
    traj[0] = k = float(k0)
    for i in range(1, steps + 1):
        k = update_map_step(k, params)
        traj[i] = k
    return PhenoPrediction(stationary_kloc(params), traj)


def _model_path(k0: float, alpha: float, b: float, p: float, tau: float, steps: int) -> np.ndarray:
    """Vector-free fast iteration used inside the optimizer."""
    out = np.empty(steps + 1)
    out[0] = k = k0
    growth = 1.0 + alpha * tau
    damp = p * b * tau
    for i in range(1, steps + 1):
        g = k * growth
        k = g / (1.0 + math.sqrt(g) * damp) ** 2
        out[i] = k
    return out


def _series_data(series):
    """Valid ``(step_index, k_width)`` pairs and the common sample interval."""
    times = np.asarray(series.times, dtype=float)
    k = np.asarray(series.k_width, dtype=float)
    ok = np.isfinite(k) & (k > 0)
    if np.count_nonzero(ok) < 8:
        raise FitFailure(f"need at least 8 samples with a width estimate, got {np.count_nonzero(ok)}")
    dt = np.diff(times)
    if dt.size == 0 or not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise FitFailure("fit needs uniformly spaced samples")
    tau = float(dt[0])
    idx = np.nonzero(ok)[0]
    first = idx[0]
    return idx - first, k[ok], tau


def _initial_guess(steps, k, p, tau):
    # growth rate from the early log-slope, decay from the plateau via the closed form
    tail = max(3, k.size // 4)
    k_loc = float(np.mean(k[-tail:]))
    early = k < k[0] + 0.5 * (k_loc - k[0]) if k_loc > k[0] else np.ones_like(k, bool)
    early[:2] = True
    sel = np.nonzero(early)[0]
    sel = sel[: max(2, min(sel.size, tail))]
    if sel.size >= 2 and steps[sel[-1]] > steps[sel[0]]:
        slope = np.polyfit(steps[sel] * tau, np.log(k[sel]), 1)[0]
    else:
        slope = 0.0
    alpha = slope if slope > 0 else 1.0 / (tau * max(steps[-1], 1))
    b = alpha / (2.0 * p * math.sqrt(max(k_loc, 1e-6)))
    return alpha, b


def fit_alpha_b_joint(items):
    """Fit one ``(alpha, b)`` to several ``(series, p)`` pairs.

    Residuals are log-ratios of model and measured ``k_width``; each series is
    started from its first valid sample. Returns ``(alpha, b, rms_residual)``.
    """
    data = []
    for series, p in items:
        if p is None:
            p = series.p
        if not p > 0:
            raise FitFailure("b unidentifiable: the series has no perturbation (p = 0)")
        steps, k, tau = _series_data(series)
        data.append((steps, k, tau, float(p)))

    guesses = [_initial_guess(s, k, p, tau) for s, k, tau, p in data]
    alpha0 = float(np.exp(np.mean([math.log(a) for a, _ in guesses])))
    b0 = float(np.exp(np.mean([math.log(b) for _, b in guesses])))

    def residuals(theta):
        alpha, b = np.exp(theta)
        out = []
        for steps, k, tau, p in data:
            path = _model_path(k[0], alpha, b, p, tau, int(steps[-1]))
            out.append(np.log(path[steps]) - np.log(k))
        return np.concatenate(out)

    result = least_squares(residuals, np.log([alpha0, b0]), method="lm", xtol=1e-12, ftol=1e-12)
    if not result.success:
        raise FitFailure(f"least squares did not converge: {result.message}")
    rms = float(np.sqrt(np.mean(result.fun**2)))
    if not np.isfinite(rms) or rms > MAX_LOG_RESIDUAL:
        raise FitFailure(f"fit residual stalled at {rms:.3g} (log units)")
    alpha, b = np.exp(result.x)
    return float(alpha), float(b), rms


def fit_alpha_b(series, p: float | None = None):
    """Fit growth rate and decay rate to one cluster-size series."""
    return fit_alpha_b_joint([(series, p)])
