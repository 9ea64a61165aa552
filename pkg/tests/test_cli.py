from __future__ import annotations

import hashlib
import json

import numpy as np
import pytest

from ddbh.io import fmt, read_csv, write_csv
from ddbh.sweep_cli import main, parse_sweep, read_ledger, run_sweep

SD = {"version": 1, "lattice": {"n_x": 12, "boundary_x": "open"}, "params": {"J": 1, "U": 0, "delta": -2.0},
      "profile": {"kind": "source_drain", "F": 1.0, "gamma": 1.0, "gamma_b": 0.0}}


def _write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def _digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_linear_run_writes_bond_columns(tmp_path, capsys):
    f = _write(tmp_path / "sd.json", SD)
    assert main(["run", f, "--tier", "linear", "--out", str(tmp_path / "o")]) == 0
    rid = capsys.readouterr().out.strip()
    meta, cols, data = read_csv(tmp_path / "o" / "runs" / rid / "series.csv")
    assert sum(c.startswith("j_") for c in cols) == 11
    assert meta["units"] == "energies in J, time in 1/J" and "config_hash" in meta
    summary = json.loads((tmp_path / "o" / "runs" / rid / "summary.json").read_text())
    assert summary["result"]["flux_residual"] < 1e-10
    ledger = read_ledger(tmp_path / "o")
    assert ledger[-1]["status"] == "complete" and ledger[-1]["run_id"] == rid


def test_negative_gamma_names_field(tmp_path, capsys):
    doc = json.loads(json.dumps(SD))
    doc["profile"]["gamma"] = -1.0
    assert main(["run", _write(tmp_path / "bad.json", doc), "--tier", "linear", "--out", str(tmp_path)]) == 2
    assert "profile.gamma" in capsys.readouterr().err


def test_unknown_run_key_is_invalid(tmp_path):
    doc = {**SD, "run": {"t_end": 3}}
    assert main(["run", _write(tmp_path / "bad.json", doc), "--tier", "gp", "--out", str(tmp_path)]) == 2


def test_saturating_gutzwiller_run_exits_3(tmp_path, capsys):
    doc = {"version": 1, "lattice": {"n_x": 4}, "params": {"J": 1, "U": 20, "delta": 0.0},
           "profile": {"kind": "source_drain", "F": 2.4, "gamma": 1.0},
           "run": {"t_final": 20, "cutoff": 2}}
    assert main(["run", _write(tmp_path / "s.json", doc), "--tier", "gutzwiller", "--out", str(tmp_path)]) == 3
    assert "CutoffSaturation" in capsys.readouterr().err
    assert read_ledger(tmp_path)[-1]["status"] == "failed"


def test_singular_linear_run_exits_3(tmp_path):
    doc = {**SD, "lattice": {"n_x": 3}, "profile": {"kind": "source_drain", "F": 1.0, "gamma": 0.0}}
    assert main(["run", _write(tmp_path / "s.json", doc), "--tier", "linear", "--out", str(tmp_path)]) == 3


def test_output_root_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("DDBH_OUTPUT_ROOT", str(tmp_path / "env"))
    assert main(["run", _write(tmp_path / "sd.json", SD), "--tier", "linear"]) == 0
    assert (tmp_path / "env" / "runs" / capsys.readouterr().out.strip()).is_dir()


def test_fixed_step_runs_are_bitwise_identical(tmp_path, capsys):
    doc = {**SD, "params": {"J": 1, "U": 0.7, "delta": -1.0}, "run": {"t_final": 5, "sample_dt": 0.5}}
    f = _write(tmp_path / "g.json", doc)
    digests = []
    for out, workers in (("a", "1"), ("b", "4")):
        assert main(["run", f, "--tier", "gp", "--out", str(tmp_path / out), "--workers", workers,
                     "--fixed-step", "0.01"]) == 0
        rid = capsys.readouterr().out.strip()
        d = tmp_path / out / "runs" / rid
        digests.append((_digest(d / "series.csv"), _digest(d / "summary.json")))
    assert digests[0] == digests[1]


def _sweep_doc(name):
    return {"version": 1, "name": name, "tier": "gp", "base": {**SD, "params": {"J": 1, "U": 0.5, "delta": -1.0}},
            "axes": [{"path": "profile.gamma", "values": [0.5, 1.0, 2.0]},
                     {"path": "profile.F", "start": 0.2, "stop": 0.6, "num": 2}],
            "run": {"t_final": 4, "window": 1}, "fixed_step": 0.02}


def test_sweep_is_deterministic_and_resumable(tmp_path):
    spec = parse_sweep(_sweep_doc("z"))
    assert len(spec.cells()) == 6
    full = run_sweep(spec, tmp_path / "one", workers=1)
    par = run_sweep(spec, tmp_path / "par", workers=2)
    assert _digest(full) == _digest(par)
    # interrupted sweep: drop two cells, then resume
    root = tmp_path / "res"
    run_sweep(spec, root)
    cells = root / "sweeps" / "z" / "cells"
    (cells / "cell_00001.json").unlink()
    (cells / "cell_00004.json").unlink()
    lines = (root / "ledger.jsonl").read_text().splitlines()
    (root / "ledger.jsonl").write_text("\n".join(lines[:3]) + "\n")
    resumed = run_sweep(spec, root)
    assert _digest(resumed) == _digest(full)
    meta, cols, data = read_csv(full)
    assert cols[:3] == ["profile.gamma", "profile.F", "status"] and data.shape[0] == 6


def test_sweep_records_failed_cells(tmp_path):
    doc = _sweep_doc("f")
    doc["tier"] = "linear"
    doc["base"] = {**SD, "lattice": {"n_x": 3}}
    doc["axes"] = [{"path": "profile.gamma", "values": [0.0, 1.0]}]
    doc.pop("fixed_step")
    doc["run"] = {}
    table = run_sweep(parse_sweep(doc), tmp_path)
    text = table.read_text()
    assert "failed" in text and "ok" in text


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(axes=[]),
    lambda d: d["axes"].append({"path": "params.U", "values": [1]}) or d["axes"].append({"path": "params.J", "values": [1]}),
    lambda d: d["axes"][0].update(values=[]),
    lambda d: d["axes"][0].update(path="params.mu"),
    lambda d: d.update(tier="exact"),
])
def test_sweep_validation(mutate, tmp_path):
    doc = _sweep_doc("v")
    mutate(doc)
    assert main(["sweep", _write(tmp_path / "s.json", doc), "--out", str(tmp_path)]) == 2


def test_snapshot_export(tmp_path, capsys):
    doc = {**SD, "params": {"J": 1, "U": 0.5, "delta": -1.0}, "run": {"t_final": 6, "sample_dt": 0.5}}
    main(["run", _write(tmp_path / "g.json", doc), "--tier", "gp", "--out", str(tmp_path)])
    rid = capsys.readouterr().out.strip()
    assert main(["snapshot", rid, "--t0", "1", "--t1", "2", "--out", str(tmp_path)]) == 0
    _, cols, data = read_csv(capsys.readouterr().out.strip())
    assert cols[0] == "tJ" and len(cols) == 12 and list(data[:, 0]) == [1.0, 1.5, 2.0]
    assert main(["snapshot", rid, "--t0", "3", "--t1", "2", "--out", str(tmp_path)]) == 0
    _, _, empty = read_csv(capsys.readouterr().out.strip())
    assert empty.size == 0
    assert main(["snapshot", "nope", "--t0", "0", "--t1", "1", "--out", str(tmp_path)]) == 2


def test_csv_round_trip_is_lossless(tmp_path):
    vals = np.random.default_rng(0).normal(size=20) * 10.0 ** np.arange(-10, 10)
    p = write_csv(tmp_path / "x.csv", ["x"], [[v] for v in vals], {"config_hash": "abc"})
    raw = p.read_bytes()
    assert b"\r" not in raw
    _, _, data = read_csv(p)
    assert np.array_equal(data[:, 0], vals)
    assert fmt(True) == "1" and fmt(float("nan")) == "nan"


def test_shipped_scenarios_parse():
    from pathlib import Path
    from ddbh.model import scenario_from_dict
    from ddbh.sweep_cli import parse_run_section
    files = sorted((Path(__file__).parents[1] / "scenarios").glob("*.json"))
    assert files
    for f in files:
        doc = json.loads(f.read_text())
        if "axes" in doc:
            assert parse_sweep(doc).cells()
        else:
            scenario_from_dict(doc, extra_keys={"run"})
            parse_run_section(doc.get("run"))
