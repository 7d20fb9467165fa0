"""CSV/JSON emission and read-back of series, spectra and sweep summaries.

Floats are written with 17 significant digits so a read-back is bit-exact.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .mqc import ClusterEstimate, MqcSpectrum
from .protocols import ClusterSeries

SERIES_COLUMNS = ("cycle", "time_s", "p", "k_width", "k_m2_exp", "k_m2_gauss", "sigma", "total_A")
SWEEP_COLUMNS = ("p", "k_loc", "onset_cycle", "reached")
FIT_COLUMNS = ("alpha_fit", "b_fit", "residual")


def fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    return format(float(x), ".17g")


def _json_value(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _write(path: Path, header, rows, fmt_name: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt_name == "json":
        columns = {name: [_json_value(row[i]) for row in rows] for i, name in enumerate(header)}
        # json's float repr is the shortest round-trip string, so values stay exact
        path.write_text(json.dumps(columns, indent=1) + "\n", encoding="utf-8")
    else:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([fmt(v) for v in row])


def series_rows(series: ClusterSeries):
    for cycle, t, est, total in zip(series.cycles, series.times, series.estimates, series.totals):
        yield (cycle, t, series.p, est.k_width, est.k_m2_exp, est.k_m2_gauss, est.sigma, total)


def write_series(series: ClusterSeries, out: str | Path, format: str = "csv") -> Path:
    out = Path(out)
    _write(out, SERIES_COLUMNS, list(series_rows(series)), format)
    return out


def _parse_float(s: str) -> float:
    return float(s) if s not in ("", "null") else math.nan


def read_series(path: str | Path) -> ClusterSeries:
    """Inverse of :func:`write_series` for either format."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        cols = json.loads(text)
        rows = list(zip(*(cols[name] for name in SERIES_COLUMNS)))
        rows = [[math.nan if v is None else v for v in row] for row in rows]
    else:
        reader = csv.reader(text.splitlines())
        header = next(reader)
        if tuple(header) != SERIES_COLUMNS:
            raise ValueError(f"unexpected series header {header}")
        rows = [[_parse_float(v) for v in row] for row in reader]
    series = ClusterSeries()
    for row in rows:
        cycle, t, p, kw, ke, kg, sigma, total = row
        series.p = float(p)
        m2 = 2.0 * float(ke)
        series.append(int(cycle), float(t), ClusterEstimate(float(kw), float(ke), float(kg), float(sigma), m2), float(total))
    if series.estimates:
        series.k0 = series.estimates[0].k_width
    return series


def write_spectrum(spec: MqcSpectrum, out: str | Path) -> Path:
    out = Path(out)
    rows = [(int(q), float(a)) for q, a in zip(spec.orders, spec.amplitudes)]
    _write(out, ("q", "A"), rows, "csv")
    return out


def read_spectrum(path: str | Path) -> MqcSpectrum:
    reader = csv.reader(Path(path).read_text(encoding="utf-8").splitlines())
    next(reader)
    return MqcSpectrum([float(a) for _, a in reader])


def write_sweep(results, out: str | Path, format: str = "csv", fits=None) -> Path:
    """Sweep summary; ``fits`` maps result index to ``(alpha, b, residual)``."""
    header = SWEEP_COLUMNS + (FIT_COLUMNS if fits is not None else ())
    rows = []
    for i, r in enumerate(results):
        row = [r.p, r.report.k_loc, r.report.onset_cycle, r.report.reached]
        if fits is not None:
            row.extend(fits.get(i, (math.nan, math.nan, math.nan)))
        rows.append(tuple(row))
    _write(Path(out), header, rows, format)
    return Path(out)
