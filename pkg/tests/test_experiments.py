import math

import numpy as np
import pytest

from conftest import GAUSS3
from nserrors import Estimand, Problem, SamplerConfig, TableSpec, diagram_data, dimension_sweep, run_coverage, run_perfect_ns, run_table
from nserrors import experiments
from nserrors.experiments import CoverageReport, coverage_hits, decomposition_table, posterior_logx_range, weighted_marginal_kde

MEAN = Estimand("param_mean")
LOGZ = Estimand("logz")
SMALL = TableSpec(GAUSS3, 30, 2, (LOGZ, MEAN, Estimand("param_cred_upper", q=0.84)),
                  methods={"bootstrap": 20, "simulated_weights": 20, "split_runs": 3}, base_seed=4)


def test_table_smoke():
    rows = run_table(SMALL)
    assert all(math.isfinite(r["value"]) for r in rows)
    kinds = {(r["quantity"], r["method"]) for r in rows}
    for m in ("bootstrap", "simulated_weights", "split_runs"):
        assert ("std_ratio", m) in kinds and ("estimate_variation_pct", m) in kinds
    assert ("true_value", "oracle") in kinds
    truth = [r for r in rows if r["quantity"] == "true_value" and r["estimand"] == "logz"][0]
    assert truth["value"] == pytest.approx(-1.5 * math.log(2 * math.pi * 101))


def test_table_is_reproducible_and_independent_of_jobs():
    a = run_table(SMALL)
    b = run_table(SMALL, jobs=2)
    assert a == b


def test_spec_round_trip():
    assert TableSpec.from_dict(SMALL.to_dict()) == SMALL
    with pytest.raises(ValueError):
        TableSpec(GAUSS3, 30, 1, (MEAN,))
    with pytest.raises(ValueError):
        TableSpec(GAUSS3, 30, 5, (MEAN,), methods={"jackknife": 10})


def test_infinite_error_bar_always_covers():
    inside, below = coverage_hits(np.array([1.0, 5.0]), np.array([np.inf, 0.1]), np.array([2.0, 6.0]), 0.0)
    assert list(inside) == [True, False]
    assert list(below) == [True, True]


def test_coverage_report():
    spec = TableSpec(GAUSS3, 30, 12, (MEAN,), methods={}, ci_replications=50, base_seed=1)
    report = run_coverage(spec)
    assert report.count == 12
    rows = report.rows()
    assert [r["quantity"] for r in rows] == ["sigma_coverage", "ci_coverage"]
    for r in rows:
        assert 0 <= r["lower"] <= r["value"] <= r["upper"] <= 1
        assert isinstance(r["nominal"], float) and isinstance(r["truth"], float)
    assert rows[0]["nominal"] == pytest.approx(0.6827, abs=1e-4)


def test_coverage_needs_true_value(monkeypatch):
    def missing(problem, estimand):
        raise ValueError("no oracle")

    monkeypatch.setattr(experiments.pr, "true_value", missing)
    spec = TableSpec(GAUSS3, 10, 2, (MEAN,), methods={})
    with pytest.raises(ValueError, match="no true value"):
        run_coverage(spec)


def test_wilson_interval_contains_calibrated_rate():
    lo, hi = experiments.wilson_interval(684, 1000)
    assert lo < 0.6827 < hi


def test_decomposition_table(small_gauss_runs):
    rows = decomposition_table(GAUSS3, small_gauss_runs[:10], [LOGZ, MEAN, Estimand("param_cred_upper", q=0.84)])
    modes = {(r["estimand"], r["method"]): r["value"] for r in rows}
    assert modes[("param-mean", "ftilde")] == 0.0
    assert modes[("logz", "exact_w_and_ftilde")] < 1e-3 < modes[("logz", "normal")]
    assert ("param-cred-upper:0.84", "ftilde") not in modes


def test_sweep_rows():
    rows = dimension_sweep("gaussian", [2, 4], nlive=20, repeats=3, n_estimates=2, methods={"bootstrap": 10})
    assert {r["dim"] for r in rows} == {2, 4}
    with pytest.raises(ValueError):
        dimension_sweep("gaussian", [], 20, 3)


def test_diagram_contracts():
    data = diagram_data(GAUSS3, MEAN)
    assert data.logx.shape == (512,)
    lo, top = posterior_logx_range(GAUSS3)
    assert data.logx[0] == lo and data.logx[-1] == top == -1e-3
    assert np.trapezoid(data.posterior_mass, data.logx) == pytest.approx(1.0, abs=1e-6)
    assert np.all(np.diff(data.band, axis=0) >= 0)
    assert np.all(data.ftilde == 0)
    assert np.trapezoid(data.marginal, data.value_grid) == pytest.approx(1.0, abs=0.01)
    rows = data.curve_rows()
    assert set(rows[0]) == {"logx", "posterior_mass", "ftilde", "q0.05", "q0.16", "q0.5", "q0.84", "q0.95"}


def test_same_contours_same_band():
    grid = np.linspace(-20, -0.01, 100)
    g = diagram_data(Problem("gaussian", 3), MEAN, logx_grid=grid)
    c = diagram_data(Problem("cauchy", 3), MEAN, logx_grid=grid)
    np.testing.assert_allclose(g.band, c.band)
    assert not np.allclose(g.posterior_mass, c.posterior_mass)


def test_radial_band_is_contour_mean():
    data = diagram_data(GAUSS3, Estimand("radial_mean"))
    for row in data.band:
        np.testing.assert_allclose(row, data.ftilde)


def test_marginal_matches_weighted_samples():
    data = diagram_data(GAUSS3, MEAN)
    run = run_perfect_ns(GAUSS3, SamplerConfig(2000, seed=3))
    kde = weighted_marginal_kde(run, MEAN, data.value_grid)
    dx = data.value_grid[1] - data.value_grid[0]
    tv = 0.5 * np.sum(np.abs(kde - data.marginal)) * dx
    assert tv < 0.05
