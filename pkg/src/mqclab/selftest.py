"""Built-in invariant checks run by ``mqclab selftest``.

Each check prints one ``PASS``/``FAIL`` line. The quick set covers the exact
small-system identities; the full set adds a short N=12 growth run.
"""

from __future__ import annotations

import math
import time
import traceback

import numpy as np

from .evolution import backward_evolve, forward_evolve, run_cycles, thermal_state
from .mqc import mqc_spectrum_direct, overlap_amplitudes_direct, overlap_amplitudes_phase
from .pheno import PhenoParams, simulate_model, stationary_kloc
from .protocols import ProtocolConfig, fit_power_law, run_growth, run_perturbed
from .spin_core import build_h0, build_hdd, make_network, total_iz


def _two_spin_oracle():
    sys = make_network("chain", 2, 1.0)
    rho0 = thermal_state(sys.basis)
    worst = 0.0
    for t in np.linspace(0.05, 3.0, 20):
        spec = mqc_spectrum_direct(forward_evolve(rho0, sys, t)).normalize()
        worst = max(worst, abs(spec[0] - math.cos(t) ** 2), abs(spec[2] - math.sin(t) ** 2 / 2))
    return worst < 1e-10, f"max error {worst:.2e}"


def _sum_rule_and_echo():
    sys = make_network("complete_random", 8, 1.0, seed=7)
    cfg = ProtocolConfig(tau0=0.1, n_cycles=50)
    series = run_growth(sys, cfg)
    drift = max(abs(t - 1.0) for t in series.totals)
    rho0 = thermal_state(sys.basis)
    back = backward_evolve(forward_evolve(rho0, sys, 5.0), sys, 5.0)
    echo = float(np.max(np.abs(back.matrix - rho0.matrix)))
    return drift < 1e-9 and echo < 1e-9, f"sum drift {drift:.2e}, echo error {echo:.2e}"


def _commutation():
    sys = make_network("complete_random", 6, 1.0, seed=1)
    iz = total_iz(sys.basis).matrix
    hdd = build_hdd(sys).matrix
    h0 = build_h0(sys).matrix
    c = float(np.max(np.abs(hdd @ iz - iz @ hdd)))
    q = sys.basis.order_matrix()
    stray = float(np.max(np.abs(np.where(np.isin(q, (-2, 2)), 0, h0))))
    return c < 1e-12 * max(np.linalg.norm(hdd), 1) and stray == 0, f"[Hdd, Iz] {c:.1e}, H0 off-rule {stray:.1e}"


def _routes_and_selection():
    sys = make_network("complete_random", 6, 1.0, seed=2)
    cfg = ProtocolConfig(tau0=0.2, n_cycles=6).with_p(0.3)
    worst_gap = worst_odd = worst_sym = 0.0
    rho_ref = rho = thermal_state(sys.basis)
    for _ in range(cfg.n_cycles):
        rho_ref = run_cycles(rho_ref, sys, ProtocolConfig(tau0=cfg.tau0), 1)
        rho = run_cycles(rho, sys, cfg, 1)
        direct = overlap_amplitudes_direct(rho_ref, rho)
        phase = overlap_amplitudes_phase(rho_ref, rho, 4 * sys.n_spins)
        worst_gap = max(worst_gap, float(np.max(np.abs(direct - phase))))
        worst_odd = max(worst_odd, float(np.max(np.abs(direct[1::2]))))
        worst_sym = max(worst_sym, float(np.max(np.abs(direct - direct[::-1]))))
    ok = worst_gap < 1e-9 and worst_odd < 1e-12 and worst_sym < 1e-12
    return ok, f"route gap {worst_gap:.1e}, odd {worst_odd:.1e}, asymmetry {worst_sym:.1e}"


def _perturbed_runs():
    sys = make_network("complete_random", 8, 1.0, seed=3)
    series = run_perturbed(sys, ProtocolConfig(tau0=0.1, n_cycles=10, sample_every=2).with_p(0.2), cross_check=True)
    return len(series) == 6, f"{len(series)} samples, cross-checked"


def _pheno_fixed_point():
    params = PhenoParams(alpha=1.0, b=1.0, p=0.1, tau=1e-3)
    k_end = simulate_model(5.0, params, 200_000).trajectory[-1]
    ok = stationary_kloc(params) == 25.0 and abs(k_end - 25.0) < 0.25
    return ok, f"iterated {k_end:.4f}"


def _power_law():
    p = np.array([0.025, 0.034, 0.065, 0.080, 0.108])
    exponent, _, _ = fit_power_law(list(zip(p, p**-2.0)))
    return abs(exponent + 2) < 1e-10, f"exponent {exponent:.12f}"


def _n12_growth():
    sys = make_network("complete_random", 12, 1.0, seed=1)
    series = run_growth(sys, ProtocolConfig(tau0=0.05, n_cycles=10))
    drift = max(abs(t - 1.0) for t in series.totals)
    return drift < 1e-9, f"10 cycles, sum drift {drift:.2e}"


QUICK = (
    ("two-spin oracle", _two_spin_oracle),
    ("sum rule and echo", _sum_rule_and_echo),
    ("order selection of H0 and Hdd", _commutation),
    ("route equivalence and selection rules", _routes_and_selection),
    ("perturbed run with cross-check", _perturbed_runs),
    ("phenomenological fixed point", _pheno_fixed_point),
    ("power-law fit", _power_law),
)
FULL = QUICK + (("N=12 growth", _n12_growth),)


def run_selftest(quick: bool = False) -> bool:
    checks = QUICK if quick else FULL
    all_ok = True
    for name, check in checks:
        start = time.perf_counter()
        try:
            ok, detail = check()
        except Exception:
            ok, detail = False, traceback.format_exc(limit=3).strip().splitlines()[-1]
        all_ok &= ok
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail} ({time.perf_counter() - start:.1f}s)", flush=True)
    return all_ok
