"""Repeated-run experiments: error tables, coverage, dimension sweeps, diagrams.

Each experiment generates ``n_repeats`` independent perfect runs, measures
the actual scatter of every estimand across them, and compares it with
the error estimates each method produces from single runs. Results are
long-form rows (one statistic per row) so they can go straight to CSV.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import math

import numpy as np
from scipy import special
from scipy.stats import gaussian_kde
from statsmodels.stats.proportion import proportion_confint

from . import problems as pr
from .errors import (
    bootstrap_replications,
    ci_from_replications,
    decomposed_estimates,
    point_values,
    simulated_weights_errors,
    split_runs_errors,
    bootstrap_errors,
)
from .inference import expected_weights, estimand_values
from .problems import Estimand, Problem
from .sampler import SamplerConfig, TerminationRule, repeat_runs

METHODS = ("bootstrap", "simulated_weights", "split_runs")
# spawn-key tags keeping each method's random stream independent
_STREAM = {"bootstrap": 1, "simulated_weights": 2, "split_runs": 3, "coverage": 4}


def method_rng(base_seed, index, method):
    return np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=(index, _STREAM[method])))


def estimate_errors(run, estimands, method, count, rng=None, problem=None):
    """Dispatch to one error method; ``count`` is B, M or N respectively."""
    if method == "bootstrap":
        return bootstrap_errors(run, estimands, count, rng, problem)
    if method == "simulated_weights":
        return simulated_weights_errors(run, estimands, count, rng, problem)
    if method == "split_runs":
        return split_runs_errors(run, estimands, count, rng, problem)
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class TableSpec:
    """Configuration of one repeated-runs error table.

    ``methods`` maps a method name to its replication count (B, M or the
    number of split groups N). Error estimates are computed on the first
    ``n_estimates`` of the ``n_repeats`` runs.
    """

    problem: Problem
    nlive: int
    n_repeats: int
    estimands: tuple
    methods: dict = field(default_factory=lambda: {"bootstrap": 200, "simulated_weights": 200})
    n_estimates: int = None
    termination: TerminationRule = TerminationRule()
    base_seed: int = 0
    ci_replications: int = 1000
    alpha: float = 0.05

    def __post_init__(self):
        if self.n_repeats < 2:
            raise ValueError("n_repeats must be at least 2")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")
        object.__setattr__(self, "estimands", tuple(self.estimands))
        est = self.n_repeats if self.n_estimates is None else min(self.n_estimates, self.n_repeats)
        object.__setattr__(self, "n_estimates", est)

    @property
    def sampler_config(self):
        return SamplerConfig(self.nlive, self.termination)

    def to_dict(self):
        return {
            "problem": self.problem.to_dict(),
            "nlive": self.nlive,
            "n_repeats": self.n_repeats,
            "n_estimates": self.n_estimates,
            "estimands": [e.label for e in self.estimands],
            "methods": dict(self.methods),
            "termination": self.termination.to_dict(),
            "base_seed": self.base_seed,
            "ci_replications": self.ci_replications,
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["problem"] = Problem.from_dict(d["problem"])
        d["estimands"] = tuple(Estimand.parse(s) for s in d["estimands"])
        if "termination" in d:
            d["termination"] = TerminationRule.from_dict(d["termination"])
        return cls(**d)


def generate_runs(spec, jobs=1):
    return repeat_runs(spec.problem, spec.sampler_config, spec.n_repeats, spec.base_seed, jobs=jobs)


def _row(quantity, method, estimand, value, uncertainty=math.nan, **extra):
    row = {
        "quantity": quantity,
        "method": method,
        "estimand": estimand.label if isinstance(estimand, Estimand) else estimand,
        "value": float(value),
        "uncertainty": float(uncertainty),
    }
    row.update(extra)
    return row


def _std_se(std, count):
    # standard error of a sample standard deviation (normal approximation)
    return std / math.sqrt(2.0 * (count - 1))


def _method_task(args):
    run, estimands, methods, base_seed, index, problem = args
    out = {}
    for name, count in methods.items():
        rng = method_rng(base_seed, index, name)
        reports = estimate_errors(run, estimands, name, count, rng, problem)
        out[name] = [r.std_estimate for r in reports]
    return out


def _pool_map(func, tasks, jobs):
    if jobs is None or jobs <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def method_std_estimates(spec, runs, jobs=1):
    """``{method: (n_estimates, n_estimands) array}`` of per-run std estimates."""
    tasks = [
        (runs[i], spec.estimands, spec.methods, spec.base_seed, i, spec.problem)
        for i in range(spec.n_estimates)
    ]
    results = _pool_map(_method_task, tasks, jobs)
    return {m: np.array([r[m] for r in results]) for m in spec.methods}


def run_table(spec, runs=None, jobs=1, with_truth=True):
    """Repeats scatter and method error estimates for every estimand.

    Rows (``quantity`` / ``method``):

    - ``mean`` / ``repeats``: mean estimate over repeats, with its SEM
    - ``true_value`` / ``oracle``: quadrature value, when available
    - ``std`` / ``repeats``: standard deviation over repeats
    - ``std_ratio`` / method: mean std estimate divided by the repeats std
    - ``mean_std_estimate`` / method: mean std estimate
    - ``estimate_variation_pct`` / method: std of the std estimates as a
      percentage of their mean
    """
    if runs is None:
        runs = generate_runs(spec, jobs)
    values = np.array([point_values(r, spec.estimands, spec.problem) for r in runs])
    count = values.shape[0]
    rep_std = np.std(values, axis=0, ddof=1)
    rep_se = _std_se(rep_std, count)
    stds = method_std_estimates(spec, runs, jobs)
    rows = []
    for j, e in enumerate(spec.estimands):
        rows.append(_row("mean", "repeats", e, values[:, j].mean(), rep_std[j] / math.sqrt(count), n=count))
        if with_truth:
            try:
                rows.append(_row("true_value", "oracle", e, pr.true_value(spec.problem, e)))
            except ValueError:
                pass
        rows.append(_row("std", "repeats", e, rep_std[j], rep_se[j], n=count))
        for m, arr in stds.items():
            est = arr[:, j]
            k = est.shape[0]
            mean = est.mean()
            sem = est.std(ddof=1) / math.sqrt(k) if k > 1 else math.nan
            ratio = mean / rep_std[j]
            ratio_se = ratio * math.hypot(sem / mean, rep_se[j] / rep_std[j])
            var_pct = 100.0 * est.std(ddof=1) / mean if k > 1 else math.nan
            rows.append(_row("std_ratio", m, e, ratio, ratio_se, n=k))
            rows.append(_row("mean_std_estimate", m, e, mean, sem, n=k))
            rows.append(_row("estimate_variation_pct", m, e, var_pct, _std_se(var_pct, k) if k > 1 else math.nan, n=k))
    return rows


def wilson_interval(successes, total, level=0.6827):
    lo, hi = proportion_confint(successes, total, alpha=1.0 - level, method="wilson")
    return float(lo), float(hi)


@dataclass(frozen=True)
class CoverageReport:
    """Empirical coverage of bootstrap intervals, per estimand.

    ``sigma_coverage`` is the fraction of repeats whose ``T +- std`` covers
    the true value; ``ci_coverage`` the fraction whose one-tailed upper
    bound ``2T - G^-1(alpha)`` lies above it. Intervals are Wilson
    intervals at one-sigma level.
    """

    estimands: tuple
    truth: np.ndarray
    sigma_hits: np.ndarray
    ci_hits: np.ndarray
    count: int
    alpha: float

    def coverage(self, j, kind="sigma"):
        hits = self.sigma_hits if kind == "sigma" else self.ci_hits
        return float(hits[j]) / self.count

    def rows(self):
        rows = []
        for j, e in enumerate(self.estimands):
            for kind, hits, nominal in (
                ("sigma_coverage", self.sigma_hits[j], special.erf(1 / math.sqrt(2))),
                ("ci_coverage", self.ci_hits[j], 1.0 - self.alpha),
            ):
                lo, hi = wilson_interval(int(hits), self.count)
                rows.append(
                    _row(kind, "bootstrap", e, hits / self.count, 0.5 * (hi - lo),
                         n=self.count, lower=lo, upper=hi, nominal=float(nominal), truth=float(self.truth[j]))
                )
        return rows


def coverage_hits(point, std, upper, truth):
    """Whether ``truth`` is inside ``point +- std`` and below ``upper``."""
    point, std, upper = map(np.asarray, (point, std, upper))
    with np.errstate(invalid="ignore"):
        inside = np.abs(point - truth) <= std
    inside |= np.isinf(std)
    return inside, truth < upper


def _coverage_task(args):
    run, estimands, B, alpha, base_seed, index, problem = args
    rng = method_rng(base_seed, index, "coverage")
    reps = bootstrap_replications(run, estimands, B, rng, problem)
    point = point_values(run, estimands, problem)
    std = np.std(reps, axis=0, ddof=1)
    _, upper = ci_from_replications(point, reps, alpha)
    return point, std, upper


def run_coverage(spec, runs=None, jobs=1, truth=None):
    """Bootstrap coverage over the table spec's repeats using ``ci_replications``.

    The same replications give the standard error and the interval.
    """
    if truth is None:
        try:
            truth = np.array([pr.true_value(spec.problem, e) for e in spec.estimands])
        except ValueError as exc:
            raise ValueError(f"no true value available: {exc}") from exc
    truth = np.asarray(truth, dtype=float)
    if runs is None:
        runs = generate_runs(spec, jobs)
    tasks = [
        (run, spec.estimands, spec.ci_replications, spec.alpha, spec.base_seed, i, spec.problem)
        for i, run in enumerate(runs)
    ]
    results = _pool_map(_coverage_task, tasks, jobs)
    point = np.array([r[0] for r in results])
    std = np.array([r[1] for r in results])
    upper = np.array([r[2] for r in results])
    inside, below = coverage_hits(point, std, upper, truth[None, :])
    return CoverageReport(
        estimands=spec.estimands,
        truth=truth,
        sigma_hits=inside.sum(axis=0),
        ci_hits=below.sum(axis=0),
        count=len(runs),
        alpha=spec.alpha,
    )


def decomposition_table(problem, runs, estimands):
    """Repeats std of each estimand under every volume / f substitution.

    Modes that do not apply to an estimand (f-substitution for credible
    bounds) are skipped.
    """
    rows = []
    for e in estimands:
        normal = np.array([point_values(r, [e], problem)[0] for r in runs])
        rows.append(_row("std", "normal", e, normal.std(ddof=1), _std_se(normal.std(ddof=1), len(runs))))
        for mode in ("exact_w", "ftilde", "exact_w_and_ftilde"):
            try:
                vals = np.array([decomposed_estimates(r, e, mode, problem) for r in runs])
            except ValueError:
                continue
            s = vals.std(ddof=1)
            rows.append(_row("std", mode, e, s, _std_se(s, len(runs))))
    return rows


SWEEP_ESTIMANDS = (
    Estimand("param_mean"),
    Estimand("param_second_moment"),
    Estimand("param_cred_upper", q=0.84),
    Estimand("logz"),
)


def dimension_sweep(family, dims, nlive, repeats, methods=None, n_estimates=None,
                    estimands=SWEEP_ESTIMANDS, base_seed=0, prior_sigma=10.0, jobs=1):
    """Repeats std and mean method estimates across dimensions.

    Returns long-form rows carrying a ``dim`` column.
    """
    dims = list(dims)
    if not dims:
        raise ValueError("dims must be non-empty")
    methods = {"bootstrap": 200} if methods is None else methods
    rows = []
    for d in dims:
        spec = TableSpec(
            problem=Problem(family, d, prior_sigma=prior_sigma),
            nlive=nlive,
            n_repeats=repeats,
            n_estimates=n_estimates,
            estimands=estimands,
            methods=methods,
            base_seed=int(np.random.SeedSequence(base_seed, spawn_key=(d,)).generate_state(1)[0]),
        )
        for row in run_table(spec, jobs=jobs, with_truth=False):
            row["dim"] = d
            rows.append(row)
    return rows


@dataclass(frozen=True, eq=False)
class DiagramData:
    """Analytic curves describing where an estimand's posterior mass lies in log X."""

    logx: np.ndarray
    posterior_mass: np.ndarray
    ftilde: np.ndarray
    quantiles: tuple
    band: np.ndarray
    value_grid: np.ndarray
    marginal: np.ndarray

    def curve_rows(self):
        rows = []
        for i, lx in enumerate(self.logx):
            row = {"logx": lx, "posterior_mass": self.posterior_mass[i], "ftilde": self.ftilde[i]}
            for k, q in enumerate(self.quantiles):
                row[f"q{q:g}"] = self.band[k, i]
            rows.append(row)
        return rows

    def marginal_rows(self):
        return [{"value": v, "density": p} for v, p in zip(self.value_grid, self.marginal)]


def _log_mass(problem, logx):
    return pr.logl_at_logx(problem, logx) + logx


def posterior_logx_range(problem, tail=1e-6, top=-1e-3):
    """``(lo, top)`` where posterior mass deeper than ``lo`` in log X is ``tail``."""
    lo = -50.0
    while True:
        grid = np.linspace(lo, top, 20001)
        lm = _log_mass(problem, grid)
        dens = np.exp(lm - lm.max())
        if dens[0] < 1e-3 * tail:
            break
        lo *= 2.0
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    cum /= cum[-1]
    return float(np.interp(tail, cum, grid)), top


def _conditional_cdf_value(problem, estimand, value, r):
    """P(f <= value | contour of radius r) for the supported f."""
    kind = estimand.kind
    if kind == "radial_mean":
        return (r <= value).astype(float)
    if kind == "param_second_moment":
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.clip(np.where(r > 0, value / r**2, np.inf), 0.0, 1.0)
        if problem.dim == 1:
            return (value >= r**2).astype(float)
        return np.where(value >= 0, special.betainc(0.5, 0.5 * (problem.dim - 1), frac), 0.0)
    return pr.conditional_cdf(problem, value, r)


def _conditional_quantile(problem, estimand, q, r):
    kind = estimand.kind
    if kind == "radial_mean":
        return np.array(r, dtype=float)
    if kind == "param_second_moment":
        if problem.dim == 1:
            return r**2
        return r**2 * special.betaincinv(0.5, 0.5 * (problem.dim - 1), q)
    return pr.conditional_ppf(problem, q, r)


def diagram_data(problem, estimand, logx_grid=None, quantiles=(0.05, 0.16, 0.5, 0.84, 0.95),
                 value_grid=None, n_grid=512, n_values=201):
    """Posterior mass in log X, contour mean and conditional band of ``f``.

    ``f`` is theta_1 for ``param_mean``/``param_cred_upper``, theta_1^2 for
    ``param_second_moment`` and ``|theta|`` for ``radial_mean``. The
    marginal density of ``f`` is obtained by mixing the conditional CDFs
    with the posterior mass and differencing on ``value_grid``.
    """
    if estimand.kind in ("logz", "evidence"):
        raise ValueError("diagram needs a parameter estimand")
    if logx_grid is None:
        lo, top = posterior_logx_range(problem)
        logx_grid = np.linspace(lo, top, n_grid)
    logx = np.asarray(logx_grid, dtype=float)
    lm = _log_mass(problem, logx)
    mass = np.exp(lm - lm.max())
    mass /= np.trapezoid(mass, logx)
    r = pr.radius_at_logx(problem, logx)
    curve_kind = Estimand("param_mean") if estimand.kind == "param_cred_upper" else estimand
    tilde = pr.ftilde(problem, curve_kind, logx)
    quantiles = tuple(float(q) for q in quantiles)
    band = np.array([_conditional_quantile(problem, estimand, q, r) for q in quantiles])

    # trapezoid weights over the grid for mixing conditionals
    dx = np.diff(logx)
    mix = mass * np.concatenate([[0.5 * dx[0]], 0.5 * (dx[1:] + dx[:-1]), [0.5 * dx[-1]]])
    mix /= mix.sum()
    if value_grid is None:
        keep = mix > 1e-6 * mix.max()
        ext = [_conditional_quantile(problem, estimand, q, r[keep]) for q in (1e-3, 1 - 1e-3)]
        value_grid = np.linspace(np.min(ext[0]), np.max(ext[1]), n_values)
    value_grid = np.asarray(value_grid, dtype=float)
    edges = np.concatenate([
        [value_grid[0] - 0.5 * (value_grid[1] - value_grid[0])],
        0.5 * (value_grid[1:] + value_grid[:-1]),
        [value_grid[-1] + 0.5 * (value_grid[-1] - value_grid[-2])],
    ])
    cdf = np.array([np.dot(mix, _conditional_cdf_value(problem, estimand, v, r)) for v in edges])
    marginal = np.diff(cdf) / np.diff(edges)
    return DiagramData(logx, mass, tilde, quantiles, band, value_grid, marginal)


def weighted_marginal_kde(run, estimand, value_grid, problem=None):
    """Posterior density of ``f`` from a run's weighted samples (Silverman KDE)."""
    w = expected_weights(run)
    f = estimand_values(run, estimand, problem)
    kde = gaussian_kde(f, bw_method="silverman", weights=w.p)
    return kde(np.asarray(value_grid, dtype=float))
