"""Command-line entry point: ``mqclab <subcommand> [options]``.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import io
from .config import RunConfig, load_config, parse_config
from .errors import FitFailure, NumericalError, ValidationError
from .pheno import fit_alpha_b
from .protocols import detect_plateau, fit_power_law, run_equilibrium, run_growth, run_perturbed, sweep_kloc

log = logging.getLogger("mqclab")

SUBCOMMANDS = ("grow", "perturb", "equilibrium", "sweep", "fit", "selftest")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mqclab", description="Exact MQC cluster-growth and localization simulator.")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON run configuration")
        p.add_argument("--out", help="output directory (overrides output.directory)")
        p.add_argument("--format", choices=("csv", "json"), help="output format (overrides output.format)")
        p.add_argument("--seed", type=int, help="network seed (overrides network.seed)")
        p.add_argument("--dump-spectra", action="store_true", help="write spectrum_<cycle>.csv per sample")
        p.add_argument("--cross-check", action="store_true", help="verify phase route against direct route at every sample")

    common(sub.add_parser("grow", help="unperturbed cluster growth"))
    p = sub.add_parser("perturb", help="perturbed growth and saturation")
    common(p)
    p.add_argument("-p", type=float, help="perturbation weight (overrides protocol.tau_sigma_us)")
    p = sub.add_parser("equilibrium", help="prepared clusters under perturbation")
    common(p)
    p.add_argument("-p", type=float, help="perturbation weight")
    p.add_argument("--k0-cycles", type=int, help="preparation cycles under H0 (overrides protocol.n0_cycles)")
    p = sub.add_parser("sweep", help="K_loc versus p and power-law fit")
    common(p)
    p.add_argument("--threads", type=int, default=1, help="worker threads over independent p values")
    p.add_argument("--fit", action="store_true", help="also fit (alpha, b) per p")
    p = sub.add_parser("fit", help="fit the phenomenological model to a series file")
    p.add_argument("--input", required=True, help="series CSV or JSON")
    p.add_argument("-p", type=float, help="perturbation weight (default: the series' p column)")
    p.add_argument("--out", help="directory for fit.json")
    p = sub.add_parser("selftest", help="run the built-in invariant checks")
    p.add_argument("--quick", action="store_true", help="skip the slower checks")
    return ap


def _resolve(args) -> tuple[RunConfig, Path, str]:
    cfg = parse_config(args.config)
    if args.dump_spectra and not cfg.analysis.dump_spectra:
        data = cfg.model_dump()
        data["analysis"]["dump_spectra"] = True
        cfg = load_config(data)
    out = Path(args.out or cfg.output.directory)
    fmt = args.format or cfg.output.format
    return cfg, out, fmt


def _protocol(cfg: RunConfig, args):
    proto = cfg.protocol_config()
    p = getattr(args, "p", None)
    if p is not None:
        proto = proto.with_p(p)
    return proto


def _spectrum_sink(directory: Path | None):
    if directory is None:
        return None

    def sink(cycle, spec):
        io.write_spectrum(spec, directory / f"spectrum_{cycle}.csv")

    return sink


def _cmd_single(args, runner) -> int:
    cfg, out, fmt = _resolve(args)
    system = cfg.spin_system(args.seed)
    proto = _protocol(cfg, args)
    sink = _spectrum_sink(out if cfg.analysis.dump_spectra else None)
    kwargs = dict(cross_check=args.cross_check, on_spectrum=sink)
    if runner is run_equilibrium:
        k0 = args.k0_cycles if args.k0_cycles is not None else proto.n0_cycles
        series = runner(system, proto, k0, **kwargs)
    else:
        series = runner(system, proto, **kwargs)
    path = io.write_series(series, out / f"series.{fmt}", fmt)
    report = detect_plateau(series, cfg.analysis.plateau_window, cfg.analysis.plateau_epsilon) if len(series) >= cfg.analysis.plateau_window else None
    log.info("wrote %s", path)
    summary = {"series": str(path), "p": series.p, "k0": series.k0}
    if report is not None:
        summary.update(plateau_reached=report.reached, k_loc=report.k_loc, onset_cycle=report.onset_cycle)
    print(json.dumps(_clean(summary)))
    return 0


def _clean(d):
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}


def _cmd_grow(args):
    return _cmd_single(args, run_growth)


def _cmd_perturb(args):
    return _cmd_single(args, run_perturbed)


def _cmd_equilibrium(args):
    return _cmd_single(args, run_equilibrium)


def _cmd_sweep(args) -> int:
    cfg, out, fmt = _resolve(args)
    if args.threads < 1:
        raise ValidationError("must be >= 1", "--threads")
    system = cfg.spin_system(args.seed)
    proto = cfg.protocol_config()
    results = sweep_kloc(
        system,
        proto,
        cfg.sweep.p_list,
        window=cfg.analysis.plateau_window,
        epsilon=cfg.analysis.plateau_epsilon,
        threads=args.threads,
    )
    for i, r in enumerate(results):
        io.write_series(r.series, out / f"series_{i:03d}.{fmt}", fmt)
        if cfg.analysis.dump_spectra:
            log.warning("spectrum dumps are written only by single-run subcommands")
            break

    fits = None
    if args.fit or cfg.sweep.fit:
        fits = {}
        for i, r in enumerate(results):
            try:
                fits[i] = fit_alpha_b(r.series, r.p)
            except FitFailure as exc:
                log.warning("p=%g: %s", r.p, exc)
    io.write_sweep(results, out / f"sweep.{fmt}", fmt, fits)

    points = [(r.p, r.report.k_loc) for r in results if r.report.reached]
    summary = {"n_p": len(results), "n_reached": len(points)}
    if len({p for p, _ in points}) >= 2 and len(points) >= 3:
        exponent, prefactor, stderr = fit_power_law(points)
        summary.update(exponent=exponent, prefactor=prefactor, stderr=stderr)
    else:
        log.warning("power law needs 3 plateaus at 2+ distinct p; got %d", len(points))
    (out / "powerlaw.json").write_text(json.dumps(_clean(summary), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print(json.dumps(_clean(summary), sort_keys=True))
    return 0


def _cmd_fit(args) -> int:
    try:
        series = io.read_series(args.input)
    except OSError as exc:
        raise ValidationError(f"cannot read series: {exc.strerror}", args.input) from None
    except (ValueError, KeyError) as exc:
        raise ValidationError(f"malformed series file: {exc}", args.input) from None
    p = args.p if args.p is not None else series.p
    alpha, b, residual = fit_alpha_b(series, p)
    result = {"alpha_fit": alpha, "b_fit": b, "residual": residual, "p": p, "k_loc_model": (alpha / (2 * b * p)) ** 2}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "fit.json").write_text(json.dumps(result, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print(json.dumps(result, sort_keys=True))
    return 0


def _cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return 0 if run_selftest(quick=args.quick) else 2


COMMANDS = {
    "grow": _cmd_grow,
    "perturb": _cmd_perturb,
    "equilibrium": _cmd_equilibrium,
    "sweep": _cmd_sweep,
    "fit": _cmd_fit,
    "selftest": _cmd_selftest,
}


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run_command())
