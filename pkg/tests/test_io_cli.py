import csv
import io as stdio
import json
import math
from pathlib import Path

import numpy as np
import pytest

from nserrors import Estimand, Run, decomposed_estimates, read_run, write_run
from nserrors.cli import cli
from nserrors.io import (
    FORMAT_VERSION,
    MalformedRecordError,
    RunFormatError,
    RunValidationError,
    RunVersionError,
    format_rows,
    run_to_dict,
)

SPECS = Path(__file__).resolve().parents[1] / "specs"
NINF = -math.inf


def synthetic_run(with_x=True):
    logl = np.linspace(-5.0, -1.0, 10) + 1e-3 / 3
    birth = np.concatenate([[NINF, NINF], logl[:-2]])
    params = np.column_stack([np.sin(np.arange(10.0)) / 7, np.cos(np.arange(10.0))])
    nlive = np.array([2] * 9 + [1])
    x = -np.arange(1, 11) / 2.0 if with_x else None
    return Run(logl, birth, params, nlive, true_logx=x, logl_end=-0.5, meta={"problem": {"family": "gaussian", "dim": 3}, "seed": 4})


def assert_same(a, b):
    for f in ("logl", "birth_logl", "params", "nlive"):
        assert np.array_equal(getattr(a, f), getattr(b, f)), f
    if a.true_logx is None:
        assert b.true_logx is None
    else:
        assert np.array_equal(a.true_logx, b.true_logx)
    assert a.logl_end == b.logl_end
    assert a.meta == b.meta


@pytest.mark.parametrize("suffix", [".json", ".npz"])
@pytest.mark.parametrize("with_x", [True, False])
def test_round_trip(tmp_path, suffix, with_x):
    run = synthetic_run(with_x)
    path = tmp_path / f"run{suffix}"
    write_run(run, path)
    assert_same(run, read_run(path))


def test_perfect_run_round_trip(tmp_path, gauss_run):
    path = tmp_path / "run.json"
    write_run(gauss_run, path)
    back = read_run(path)
    assert_same(gauss_run, back)
    assert back.meta["problem"]["family"] == "gaussian"


def _doc(run):
    return json.loads(json.dumps(run_to_dict(run)))


def _write(tmp_path, doc):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    return path


def test_validation_error_names_record(tmp_path):
    doc = _doc(synthetic_run())
    doc["points"][7]["birth_logl"] = doc["points"][7]["logl"]
    with pytest.raises(RunValidationError, match="record 7: birth_logl >= logl"):
        read_run(_write(tmp_path, doc))


def test_error_categories(tmp_path):
    doc = _doc(synthetic_run())
    with pytest.raises(RunVersionError):
        read_run(_write(tmp_path, dict(doc, version=FORMAT_VERSION + 1)))
    with pytest.raises(RunFormatError):
        read_run(_write(tmp_path, dict(doc, format="other")))
    bad = tmp_path / "broken.json"
    bad.write_text("{not json")
    with pytest.raises(RunFormatError, match="line 1"):
        read_run(bad)
    doc2 = _doc(synthetic_run())
    del doc2["points"][3]["nlive"]
    with pytest.raises(MalformedRecordError, match="record 3: missing field 'nlive'"):
        read_run(_write(tmp_path, doc2))
    doc3 = _doc(synthetic_run())
    doc3["points"][5]["logl"] = "high"
    with pytest.raises(MalformedRecordError, match="record 5"):
        read_run(_write(tmp_path, doc3))
    for cls in (RunVersionError, RunFormatError, MalformedRecordError, RunValidationError):
        assert issubclass(cls, ValueError)


def test_run_without_volumes(tmp_path):
    path = tmp_path / "run.json"
    write_run(synthetic_run(with_x=False), path)
    run = read_run(path)
    with pytest.raises(ValueError, match="no exact volumes"):
        decomposed_estimates(run, Estimand("logz"), "exact_w")


def test_csv_keeps_full_precision():
    vals = [1 / 3, math.pi * 1e-300, -2.5e17 + 1, 0.1 + 0.2]
    text = format_rows([{"name": "a", "value": v} for v in vals])
    back = [float(r["value"]) for r in csv.DictReader(stdio.StringIO(text))]
    assert back == vals
    assert json.loads(format_rows([{"v": math.nan}], "json")) == [{"v": None}]


def _csv(text):
    return list(csv.DictReader(stdio.StringIO(text)))


def test_simulate_validate_analyze(tmp_path, capsys):
    path = str(tmp_path / "run.json")
    assert cli(["simulate", "--family", "gaussian", "--dim", "3", "--sigma-pi", "10", "--nlive", "200",
                "--term-eps", "1e-4", "--seed", "1", "-o", path]) == 0
    assert cli(["validate", path]) == 0
    assert capsys.readouterr().out.startswith("ok:")
    assert cli(["analyze", path, "--method", "bootstrap", "--B", "200", "--estimand", "param-mean"]) == 0
    rows = _csv(capsys.readouterr().out)
    assert len(rows) == 1 and float(rows[0]["std_estimate"]) > 0
    assert cli(["analyze", path, "--method", "bootstrap", "--method", "split_runs", "--estimand", "z",
                "--alpha", "0.05", "--format", "json"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert [r["method"] for r in out] == ["bootstrap", "split_runs"]
    assert out[0]["ci_lower"] < out[0]["point_value"] < out[0]["ci_upper"]


def test_fixed_contour_simulation(tmp_path):
    path = tmp_path / "run.npz"
    assert cli(["simulate", "--nlive", "20", "--term-logl", "-4", "--keep-final-live", "-o", str(path)]) == 0
    run = read_run(path)
    assert run.logl_end == -4.0 and run.nlive[-1] == 1


def test_cli_is_deterministic(tmp_path):
    outs = []
    for k in range(2):
        run, table = tmp_path / f"r{k}.json", tmp_path / f"t{k}.csv"
        assert cli(["--seed", "5", "simulate", "--nlive", "40", "-o", str(run)]) == 0
        assert cli(["analyze", str(run), "--method", "simulated_weights", "--seed", "2", "-o", str(table)]) == 0
        outs.append((run.read_bytes(), table.read_bytes()))
    assert outs[0] == outs[1]


def test_exit_codes(tmp_path, capsys):
    assert cli(["simulate", "--bogus"]) == 1
    assert "usage" in capsys.readouterr().err
    assert cli([]) == 1
    assert cli(["analyze", str(tmp_path / "missing.json")]) == 2
    doc = _doc(synthetic_run())
    doc["points"][7]["birth_logl"] = doc["points"][7]["logl"]
    assert cli(["analyze", str(_write(tmp_path, doc))]) == 2
    assert "record 7" in capsys.readouterr().err
    assert cli(["sweep", "--dims", "2,x"]) == 1


def test_validate_reports_violations(tmp_path, capsys):
    run = synthetic_run()
    doc = _doc(run)
    doc["points"][2]["nlive"] = 0
    path = _write(tmp_path, doc)
    assert cli(["validate", str(path)]) == 2
    assert "record 2" in capsys.readouterr().err


def test_table_coverage_sweep_diagram(tmp_path, capsys):
    spec = str(SPECS / "smoke.json")
    assert cli(["table", spec]) == 0
    rows = _csv(capsys.readouterr().out)
    assert {"quantity", "method", "estimand", "value", "uncertainty"} <= set(rows[0])
    cov_spec = tmp_path / "cov.json"
    doc = json.loads(Path(spec).read_text())
    cov_spec.write_text(json.dumps(dict(doc, estimands=["param-mean"], ci_replications=20)))
    assert cli(["coverage", str(cov_spec), "--format", "json"]) == 0
    assert {r["quantity"] for r in json.loads(capsys.readouterr().out)} == {"sigma_coverage", "ci_coverage"}
    out = tmp_path / "sweep.csv"
    assert cli(["sweep", "--dims", "2,3", "--nlive", "20", "--repeats", "3", "--n-estimates", "2", "--B", "10", "-o", str(out)]) == 0
    assert {r["dim"] for r in _csv(out.read_text())} == {"2", "3"}
    curve, marginal = tmp_path / "curve.csv", tmp_path / "marginal.csv"
    assert cli(["diagram", "--estimand", "param-mean", "--points", "64", "-o", str(curve),
                "--marginal-output", str(marginal)]) == 0
    assert len(_csv(curve.read_text())) == 64
    assert set(_csv(marginal.read_text())[0]) == {"value", "density"}
    assert cli(["table", str(tmp_path / "nope.json")]) == 2


def test_shipped_specs_parse():
    from nserrors import TableSpec

    for path in SPECS.glob("*.json"):
        TableSpec.from_dict(json.loads(path.read_text()))
