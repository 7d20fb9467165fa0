"""End-to-end experiment runners.

Every run samples the cluster size every ``sample_every`` cycles. Perturbed
runs compare the actual state against the ideal pure-``H0`` trajectory at
the same number of cycles: the spectrum is the blockwise overlap
``Tr{rho_ref_q^dagger rho_q}``, normalized per sample.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .errors import Aliasing, BadConfig, Degenerate, NumericalError, TooShort, ValidationError
from .evolution import CONCATENATED, MODES, DensityOperator, sector_evolver, thermal_state
from .mqc import (
    ClusterEstimate,
    MqcSpectrum,
    cluster_size,
    overlap_amplitudes_direct,
    overlap_amplitudes_phase,
)
from .spin_core import SpinSystem

log = logging.getLogger(__name__)

TAU0_DEFAULT = 57.6e-6
DEFAULT_P_LIST = (0.025, 0.034, 0.065, 0.080, 0.108)
CROSS_CHECK_TOLERANCE = 1e-9

NAN_ESTIMATE = ClusterEstimate(math.nan, math.nan, math.nan, math.nan, math.nan)

SpectrumSink = Callable[[int, MqcSpectrum], None]


@dataclass(frozen=True)
class ProtocolConfig:
    """Cycle timings (seconds) and sampling of one run.

    ``p`` is derived from the timings and never set directly; use
    :meth:`with_p` to pick ``tau_sigma`` for a target weight.
    """

    tau0: float = TAU0_DEFAULT
    tau_sigma: float = 0.0
    n_cycles: int = 40
    n0_cycles: int = 0
    n_phases: int | None = None
    sample_every: int = 1
    mode: str = CONCATENATED
    p: float = field(init=False)

    def __post_init__(self):
        if not self.tau0 > 0:
            raise BadConfig(f"must be positive, got {self.tau0}", "protocol.tau0")
        if not self.tau_sigma >= 0:
            raise BadConfig(f"must be non-negative, got {self.tau_sigma}", "protocol.tau_sigma")
        if self.n_cycles < 0 or self.n0_cycles < 0:
            raise BadConfig("cycle counts must be non-negative", "protocol.n_cycles")
        if self.sample_every < 1:
            raise BadConfig(f"must be >= 1, got {self.sample_every}", "protocol.sample_every")
        if self.mode not in MODES:
            raise BadConfig(f"must be one of {MODES}, got {self.mode!r}", "protocol.mode")
        object.__setattr__(self, "p", self.tau_sigma / (self.tau0 + self.tau_sigma))

    @property
    def tau_c(self) -> float:
        return self.tau0 + self.tau_sigma

    def with_p(self, p: float) -> "ProtocolConfig":
        if not 0 <= p < 1:
            raise BadConfig(f"perturbation weight must lie in [0, 1), got {p}", "p")
        return replace(self, tau_sigma=p * self.tau0 / (1.0 - p))

    def phases_for(self, n_spins: int) -> int:
        n = 4 * n_spins if self.n_phases is None else self.n_phases
        if n <= 2 * n_spins:
            raise Aliasing(f"n_phases={n} must exceed 2*n_spins={2 * n_spins}", "protocol.n_phases")
        return n


@dataclass
class ClusterSeries:
    """Sampled cluster-size history of one run."""

    cycles: list[int] = field(default_factory=list)
    times: list[float] = field(default_factory=list)
    estimates: list[ClusterEstimate] = field(default_factory=list)
    totals: list[float] = field(default_factory=list)
    p: float = 0.0
    k0: float = math.nan

    def __len__(self):
        return len(self.cycles)

    def append(self, cycle: int, time: float, estimate: ClusterEstimate, total: float):
        self.cycles.append(int(cycle))
        self.times.append(float(time))
        self.estimates.append(estimate)
        self.totals.append(float(total))

    @property
    def k_width(self) -> np.ndarray:
        return np.array([e.k_width for e in self.estimates], dtype=float)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(e, name) for e in self.estimates], dtype=float)


@dataclass(frozen=True)
class PlateauReport:
    reached: bool
    k_loc: float
    onset_cycle: int
    window: int
    epsilon: float


@dataclass(frozen=True)
class SweepResult:
    p: float
    report: PlateauReport
    series: ClusterSeries


def _estimate(spec: MqcSpectrum) -> ClusterEstimate:
    if not (spec.amplitudes.sum() > 0 and spec[0] > 0):
        return NAN_ESTIMATE
    return cluster_size(spec.normalize())


def _check_routes(rho_ref: DensityOperator, rho: DensityOperator, n_phases: int, cycle: int):
    direct = overlap_amplitudes_direct(rho_ref, rho)
    phase = overlap_amplitudes_phase(rho_ref, rho, n_phases)
    gap = float(np.max(np.abs(direct - phase)))
    if gap > CROSS_CHECK_TOLERANCE:
        raise NumericalError(f"cycle {cycle}: phase route differs from direct route by {gap:.3e}")


def _overlap_spectrum(a: np.ndarray) -> MqcSpectrum:
    # Overlaps of strongly decayed high orders can come out negative; they are
    # below the echo noise floor and are treated as unpopulated.
    return MqcSpectrum(np.where(a > 0, a, 0.0), total=float(a.sum()))


def run_growth(
    sys: SpinSystem,
    cfg: ProtocolConfig,
    *,
    cross_check: bool = False,
    on_spectrum: SpectrumSink | None = None,
) -> ClusterSeries:
    """Unperturbed growth under ``H0`` from the thermal state."""
    if cfg.p != 0:
        raise BadConfig(f"growth runs need p = 0, got {cfg.p}", "protocol.tau_sigma")
    return _run(sys, cfg, 0, cross_check, on_spectrum)


def run_perturbed(
    sys: SpinSystem,
    cfg: ProtocolConfig,
    *,
    cross_check: bool = False,
    on_spectrum: SpectrumSink | None = None,
) -> ClusterSeries:
    """Perturbed cycles from the thermal state, measured against ideal ``H0`` evolution."""
    if not cfg.p > 0:
        raise BadConfig("perturbed runs need p > 0", "protocol.tau_sigma")
    return _run(sys, cfg, 0, cross_check, on_spectrum)


def run_equilibrium(
    sys: SpinSystem,
    cfg: ProtocolConfig,
    k0_cycles: int | None = None,
    *,
    cross_check: bool = False,
    on_spectrum: SpectrumSink | None = None,
) -> ClusterSeries:
    """Prepare clusters with ``k0_cycles`` of ``H0``, then run perturbed cycles."""
    k0_cycles = cfg.n0_cycles if k0_cycles is None else k0_cycles
    if k0_cycles < 0:
        raise BadConfig(f"must be non-negative, got {k0_cycles}", "k0_cycles")
    return _run(sys, cfg, k0_cycles, cross_check, on_spectrum)


def _run(sys, cfg, k0_cycles, cross_check, on_spectrum):
    return _run_many(sys, [cfg], k0_cycles, cross_check, on_spectrum)[0]


def _run_many(sys, cfgs, k0_cycles, cross_check=False, on_spectrum=None):
    """Runs sharing ``tau0`` and sampling, advanced in lockstep behind one reference.

    Each series is bit-identical to a separate run of its configuration.
    """
    first = cfgs[0]
    for cfg in cfgs:
        if (cfg.tau0, cfg.n_cycles, cfg.sample_every) != (first.tau0, first.n_cycles, first.sample_every):
            raise BadConfig("lockstep runs need equal tau0, n_cycles and sample_every")
    n_phases = [cfg.phases_for(sys.n_spins) for cfg in cfgs]
    ev = sector_evolver(sys)
    h0_step = ev.h0_step(first.tau0)
    ref = ev.reduce_state(thermal_state(sys.basis))
    for _ in range(k0_cycles):
        ref = ev.step(ref, h0_step)

    steps = [ev.cycle_step(cfg, cfg.mode) if cfg.p > 0 else None for cfg in cfgs]
    series = [ClusterSeries(p=cfg.p) for cfg in cfgs]
    states = [ref] * len(cfgs)
    for n in range(first.n_cycles + 1):
        if n % first.sample_every == 0:
            for cfg, pert, out, phases in zip(cfgs, states, series, n_phases):
                # with p = 0 the overlap of the state with itself is sum |rho_ij|^2
                spec = _overlap_spectrum(ev.overlap_amplitudes(ref, pert))
                if cross_check:
                    _check_routes(ev.expand_state(ref), ev.expand_state(pert), phases, n)
                est = _estimate(spec)
                if n == 0:
                    out.k0 = est.k_width
                out.append(n, n * cfg.tau_c, est, spec.total)
                if on_spectrum is not None:
                    on_spectrum(n, spec)
                log.debug("p=%g cycle=%d K=%.4g total=%.4g", cfg.p, n, est.k_width, spec.total)
        if n < first.n_cycles:
            ref = ev.step(ref, h0_step)
            states = [ev.step(pert, step) if step is not None else ref for pert, step in zip(states, steps)]
    return series


def detect_plateau(series: ClusterSeries, window: int = 10, epsilon: float = 0.02) -> PlateauReport:
    """Stationarity of ``k_width`` over trailing windows.

    The plateau is reached when the last ``window`` samples all lie within
    ``epsilon`` (relative) of their mean; ``onset_cycle`` is the first cycle
    from which every later window passes the same test.
    """
    if window < 3:
        raise ValidationError(f"window must be >= 3, got {window}", "analysis.plateau_window")
    k = series.k_width
    if k.size < window:
        raise TooShort(f"series has {k.size} samples, window needs {window}")

    def passes(start):
        w = k[start : start + window]
        if not np.all(np.isfinite(w)):
            return False
        mean = float(np.mean(w))
        return mean > 0 and float(np.max(np.abs(w - mean))) <= epsilon * mean

    last = k.size - window
    if not passes(last):
        return PlateauReport(False, math.nan, -1, window, epsilon)
    start = last
    while start > 0 and passes(start - 1):
        start -= 1
    k_loc = float(np.mean(k[last:]))
    return PlateauReport(True, k_loc, series.cycles[start], window, epsilon)


def sweep_kloc(
    sys: SpinSystem,
    cfg_template: ProtocolConfig,
    p_list: Sequence[float] = DEFAULT_P_LIST,
    *,
    window: int = 10,
    epsilon: float = 0.02,
    threads: int = 1,
) -> list[SweepResult]:
    """Perturbed run and plateau detection for each ``p``, sorted by ``p``.

    With one thread the runs advance in lockstep behind a shared reference
    trajectory; with more, each ``p`` is a separate job. Both give identical
    series.
    """
    for p in p_list:
        if not p > 0:
            raise BadConfig(f"sweep weights must be positive, got {p}", "sweep.p_list")
    cfgs = [cfg_template.with_p(p) for p in p_list]

    def report(series):
        try:
            return detect_plateau(series, window, epsilon)
        except TooShort as exc:
            log.warning("p=%g: %s", series.p, exc)
            return PlateauReport(False, math.nan, -1, window, epsilon)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(lambda cfg: run_perturbed(sys, cfg), cfgs))
    else:
        runs = _run_many(sys, cfgs, 0)
    outcomes = [(series, report(series)) for series in runs]
    results = [SweepResult(p, report, series) for p, (series, report) in zip(p_list, outcomes)]
    return sorted(results, key=lambda r: r.p)


def fit_power_law(points: Sequence[tuple[float, float]]):
    """Least-squares line through ``(log p, log K_loc)``.

    Returns ``(exponent, prefactor, exponent_stderr)``.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise ValidationError("need at least 3 (p, k_loc) points")
    if np.any(~np.isfinite(pts)) or np.any(pts <= 0):
        raise ValidationError("all p and k_loc values must be positive and finite")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    if np.all(x == x[0]):
        raise Degenerate("all p values are equal")
    fit = stats.linregress(x, y)
    return float(fit.slope), float(np.exp(fit.intercept)), float(fit.stderr)
