import json
import math

import numpy as np
import pytest

from mqclab import io
from mqclab.cli import run_command
from mqclab.config import load_config, parse_config
from mqclab.errors import ConfigIoError, ConfigSyntaxError, ValidationError
from mqclab.mqc import ClusterEstimate, MqcSpectrum
from mqclab.protocols import DEFAULT_P_LIST, ClusterSeries


def write_config(tmp_path, data, name="c.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


SMALL = {
    "network": {"kind": "complete_random", "n_spins": 6, "d0_rad_s": 5000.0, "seed": 3},
    "protocol": {"n_cycles": 12},
    "analysis": {"plateau_window": 4, "plateau_epsilon": 0.05},
    "sweep": {"p_list": [0.1, 0.3, 0.2]},
}


def test_minimal_config_defaults(tmp_path):
    cfg = parse_config(write_config(tmp_path, {"network": {"kind": "chain", "n_spins": 4}}))
    assert cfg.sweep.p_list == list(DEFAULT_P_LIST)
    assert cfg.protocol.tau0_us == 57.6
    assert cfg.output.format == "csv"
    proto = cfg.protocol_config()
    assert proto.tau0 == pytest.approx(57.6e-6) and proto.p == 0


def test_config_rejections(tmp_path):
    with pytest.raises(ValidationError, match="protokol"):
        load_config({"network": {"kind": "chain", "n_spins": 4}, "protokol": {}})
    with pytest.raises(ValidationError, match="n_phases"):
        load_config({"network": {"kind": "chain", "n_spins": 4}, "protocol": {"n_phases": 8}})
    with pytest.raises(ValidationError, match="network.n_spins"):
        load_config({"network": {"kind": "chain", "n_spins": 13}})
    with pytest.raises(ValidationError, match="network.kind"):
        load_config({"network": {"kind": "ring", "n_spins": 4}})
    with pytest.raises(ValidationError, match="sweep"):
        load_config({"network": {"kind": "chain", "n_spins": 4}, "sweep": {"p_list": [0.0]}})
    with pytest.raises(ConfigIoError):
        parse_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{network: 1", encoding="utf-8")
    with pytest.raises(ConfigSyntaxError, match="line 1"):
        parse_config(bad)


def test_cap_env(monkeypatch):
    monkeypatch.setenv("MQCLAB_MAX_SPINS", "14")
    assert load_config({"network": {"kind": "chain", "n_spins": 14}}).network.n_spins == 14
    with pytest.raises(ValidationError):
        load_config({"network": {"kind": "chain", "n_spins": 15}})


def _series():
    s = ClusterSeries(p=0.125)
    for i in range(4):
        k = math.nan if i == 0 else 1 / 3 + i
        s.append(i, i * 6.1e-5, ClusterEstimate(k, 0.1 * i, 0.4 * i, math.sqrt(k), 0.2 * i), 1 - 1e-3 * i)
    return s


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_series_round_trip(tmp_path, fmt):
    s = _series()
    path = io.write_series(s, tmp_path / f"s.{fmt}", fmt)
    back = io.read_series(path)
    assert back.cycles == s.cycles and back.times == s.times and back.totals == s.totals
    np.testing.assert_array_equal(back.k_width, s.k_width)
    np.testing.assert_array_equal(back.column("k_m2_gauss"), s.column("k_m2_gauss"))
    assert back.p == s.p


def test_empty_series_and_spectrum_files(tmp_path):
    path = io.write_series(ClusterSeries(), tmp_path / "empty.csv")
    assert path.read_text() == ",".join(io.SERIES_COLUMNS) + "\n"
    spec = MqcSpectrum([0.1, 0.0, 0.8, 0.0, 0.1])
    back = io.read_spectrum(io.write_spectrum(spec, tmp_path / "spec.csv"))
    np.testing.assert_array_equal(back.amplitudes, spec.amplitudes)


def test_cli_grow_and_dump(tmp_path, capsys):
    cfg = write_config(tmp_path, SMALL)
    out = tmp_path / "out"
    assert run_command(["grow", "--config", str(cfg), "--out", str(out), "--dump-spectra", "--cross-check"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["p"] == 0
    assert (out / "series.csv").exists()
    assert len(list(out.glob("spectrum_*.csv"))) == 13


def test_cli_perturb_equilibrium_json(tmp_path, capsys):
    cfg = write_config(tmp_path, SMALL)
    out = tmp_path / "o"
    assert run_command(["perturb", "--config", str(cfg), "--out", str(out), "-p", "0.2", "--format", "json"]) == 0
    data = json.loads((out / "series.json").read_text())
    assert set(data) == set(io.SERIES_COLUMNS) and len(data["cycle"]) == 13
    assert run_command(["equilibrium", "--config", str(cfg), "--out", str(out), "-p", "0.2", "--k0-cycles", "5"]) == 0
    assert json.loads(capsys.readouterr().out.splitlines()[-1])["k0"] > 0


def test_cli_exit_codes(tmp_path, capsys):
    assert run_command(["bogus"]) == 1
    assert run_command(["grow", "--config", str(tmp_path / "nope.json")]) == 1
    cfg = write_config(tmp_path, {**SMALL, "protokol": {}})
    assert run_command(["grow", "--config", str(cfg)]) == 1
    assert "protokol" in capsys.readouterr().err
    flat = ClusterSeries(p=0.0)
    for i in range(12):
        flat.append(i, i * 1e-4, ClusterEstimate(1.0 + i, 0, 0, 1, 0), 1.0)
    series = io.write_series(flat, tmp_path / "p0.csv")
    assert run_command(["fit", "--input", str(series)]) == 2
    assert "b unidentifiable" in capsys.readouterr().err


def test_cli_fit(tmp_path, capsys):
    from mqclab.pheno import PhenoParams, simulate_model

    params = PhenoParams(alpha=1.0, b=0.8, p=0.1, tau=0.02)
    s = ClusterSeries(p=0.1)
    for i, k in enumerate(simulate_model(1.0, params, 300).trajectory):
        s.append(i, i * params.tau, ClusterEstimate(k, 0, 0, math.sqrt(k), 0), 1.0)
    path = io.write_series(s, tmp_path / "s.csv")
    assert run_command(["fit", "--input", str(path), "--out", str(tmp_path)]) == 0
    result = json.loads((tmp_path / "fit.json").read_text())
    assert result["alpha_fit"] == pytest.approx(1.0, rel=1e-4)
    assert result["b_fit"] == pytest.approx(0.8, rel=1e-4)


def test_sweep_output_is_deterministic(tmp_path, capsys):
    cfg = write_config(tmp_path, SMALL)
    outs = []
    for run in range(2):
        out = tmp_path / f"run{run}"
        assert run_command(["sweep", "--config", str(cfg), "--out", str(out), "--threads", "2", "--fit"]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outs[0] == outs[1]
    assert {"sweep.csv", "powerlaw.json", "series_000.csv", "series_002.csv"} <= set(outs[0])
    header = outs[0]["sweep.csv"].decode().splitlines()[0]
    assert header == "p,k_loc,onset_cycle,reached,alpha_fit,b_fit,residual"
