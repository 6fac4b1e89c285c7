import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import GAUSS3
from nserrors import (
    Estimand,
    Run,
    SamplerConfig,
    bootstrap_ci,
    bootstrap_errors,
    combine_runs,
    decomposed_estimates,
    evaluate_estimand,
    run_perfect_ns,
    simulated_weights_errors,
    split_into_threads,
    split_runs_errors,
)
from nserrors.errors import bootstrap_replications, ci_from_replications, point_values
from nserrors.inference import expected_weights

LOGZ = Estimand("logz")
MEAN = Estimand("param_mean")
CRED = Estimand("param_cred_upper", q=0.84)
ALL = [LOGZ, Estimand("evidence"), MEAN, Estimand("param_second_moment"), CRED, Estimand("radial_mean")]


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), nlive=st.integers(2, 25), q=st.floats(0.05, 0.95))
def test_replications_equal_explicit_recombination(seed, nlive, q):
    # oracle: build each resampled run with combine_runs and evaluate it directly
    run = run_perfect_ns(GAUSS3, SamplerConfig(nlive, seed=seed))
    ests = ALL + [Estimand("param_cred_upper", q=q)]
    reps = bootstrap_replications(run, ests, 8, np.random.default_rng(seed))
    threads = split_into_threads(run)
    draws = np.random.default_rng(seed).integers(len(threads), size=(8, len(threads)))
    for b, row in enumerate(draws):
        sample = combine_runs([threads[i] for i in row])
        w = expected_weights(sample)
        direct = [evaluate_estimand(sample, w, e) for e in ests]
        np.testing.assert_allclose(reps[b], direct, rtol=1e-10, atol=1e-13)


def test_report_contents(gauss_run):
    reports = bootstrap_errors(gauss_run, [LOGZ, MEAN], B=50, rng=1)
    assert [r.estimand for r in reports] == [LOGZ, MEAN]
    for r in reports:
        assert r.method == "bootstrap" and r.count == 50
        assert r.replications.shape == (50,)
        assert r.std_estimate == pytest.approx(np.std(r.replications, ddof=1))
        assert r.std_estimate > 0
    assert reports[0].point_value == pytest.approx(expected_weights(gauss_run).logz)


def test_same_seed_same_report(gauss_run):
    for method in (bootstrap_errors, simulated_weights_errors):
        a = method(gauss_run, [LOGZ, CRED], 30, np.random.default_rng(7))
        b = method(gauss_run, [LOGZ, CRED], 30, np.random.default_rng(7))
        for x, y in zip(a, b):
            assert np.array_equal(x.replications, y.replications)
    a = split_runs_errors(gauss_run, [LOGZ], 20, rng=3)
    b = split_runs_errors(gauss_run, [LOGZ], 20, rng=3)
    assert np.array_equal(a[0].replications, b[0].replications)


def test_identical_threads():
    one = split_into_threads(run_perfect_ns(GAUSS3, SamplerConfig(1, seed=2)))[0]
    run = combine_runs([one] * 20)
    assert np.all(run.nlive[:20] == 20)
    # every resample is the same set of points, so only volume noise is left
    reps = bootstrap_errors(run, [LOGZ, MEAN], B=100, rng=1)
    assert all(r.std_estimate == pytest.approx(0.0, abs=1e-12) for r in reps)
    noisy = bootstrap_errors(run, [LOGZ], B=400, rng=2, simulate=True)[0].std_estimate
    sim = simulated_weights_errors(run, [LOGZ], M=400, rng=3)[0].std_estimate
    assert noisy == pytest.approx(sim, rel=0.2)


def test_bootstrap_noise_between_repeated_estimates(gauss_run):
    a = bootstrap_errors(gauss_run, [MEAN], B=1000, rng=11)[0].std_estimate
    b = bootstrap_errors(gauss_run, [MEAN], B=1000, rng=12)[0].std_estimate
    assert abs(a - b) / max(a, b) < 0.1


def test_confidence_interval_cases(gauss_run):
    assert ci_from_replications(1.5, np.full(50, 1.5), 0.05) == (1.5, 1.5)
    reps = 2.0 + np.linspace(-1, 1, 101)
    lo, hi = ci_from_replications(2.0, reps, 0.1)
    assert 2.0 - lo == pytest.approx(hi - 2.0)
    # skewed replications reflect about the point value
    lo, hi = ci_from_replications(0.0, np.array([0.0] * 90 + [10.0] * 10), 0.05)
    assert hi == 0.0 and lo == -10.0
    with pytest.raises(ValueError, match="insufficient replications"):
        ci_from_replications(0.0, np.zeros(9), 0.05)
    with pytest.raises(ValueError, match="insufficient replications"):
        bootstrap_ci(gauss_run, MEAN, B=5)
    lo, hi = bootstrap_ci(gauss_run, MEAN, B=200, rng=4)
    assert lo < point_values(gauss_run, [MEAN])[0] < hi


def test_count_checks(gauss_run):
    with pytest.raises(ValueError):
        bootstrap_errors(gauss_run, [MEAN], B=1)
    with pytest.raises(ValueError):
        simulated_weights_errors(gauss_run, [MEAN], M=1)


def test_split_runs(gauss_run):
    reports = split_runs_errors(gauss_run, [LOGZ, MEAN], 20, rng=0)
    assert all(r.count == 20 and r.replications.shape == (20,) for r in reports)
    assert reports[0].std_estimate == pytest.approx(np.std(reports[0].replications, ddof=1) / math.sqrt(20))
    with pytest.raises(ValueError, match="cannot be split"):
        split_runs_errors(gauss_run, [LOGZ], 7)


def test_split_groups_are_valid_small_runs(gauss_run):
    # each group evaluated by the engine equals the explicitly combined group
    threads = split_into_threads(gauss_run)
    rng = np.random.default_rng(5)
    report = split_runs_errors(gauss_run, [LOGZ], 10, rng=np.random.default_rng(5))[0]
    group = np.empty(len(threads), dtype=int)
    group[rng.permutation(len(threads))] = np.arange(len(threads)) % 10
    direct = [point_values(combine_runs([t for t, g in zip(threads, group) if g == k]), [LOGZ])[0] for k in range(10)]
    np.testing.assert_allclose(report.replications, direct, rtol=1e-12)


def test_split_runs_on_identical_runs(gauss_run):
    rep = split_runs_errors([gauss_run] * 5, [LOGZ, MEAN], 5)
    assert all(r.std_estimate == 0.0 for r in rep)
    with pytest.raises(ValueError):
        split_runs_errors([gauss_run] * 5, [LOGZ], 4)


def test_decomposition(gauss_run):
    assert decomposed_estimates(gauss_run, MEAN, "ftilde") == 0.0
    assert decomposed_estimates(gauss_run, MEAN, "exact_w_and_ftilde") == 0.0
    assert decomposed_estimates(gauss_run, LOGZ, "exact_w") == decomposed_estimates(gauss_run, LOGZ, "exact_w_and_ftilde")
    assert decomposed_estimates(gauss_run, LOGZ, "ftilde") == point_values(gauss_run, [LOGZ])[0]
    second = Estimand("param_second_moment")
    assert decomposed_estimates(gauss_run, second, "exact_w_and_ftilde") > 0
    with pytest.raises(ValueError):
        decomposed_estimates(gauss_run, MEAN, "nonsense")
    bare = Run(gauss_run.logl, gauss_run.birth_logl, gauss_run.params, gauss_run.nlive, meta=gauss_run.meta)
    with pytest.raises(ValueError, match="no exact volumes"):
        decomposed_estimates(bare, LOGZ, "exact_w")


def test_simulated_weights_ignore_point_scatter(gauss_run):
    # with the points fixed, only the volume draws vary
    reps = simulated_weights_errors(gauss_run, [LOGZ, MEAN], M=200, rng=6)
    assert reps[0].method == "simulated_weights" and reps[0].replications.shape == (200,)
    assert reps[1].std_estimate < bootstrap_errors(gauss_run, [MEAN], B=400, rng=6)[0].std_estimate
