"""Prior volumes, quadrature weights, evidence and posterior estimates.

All arithmetic is done on logarithms: the weight of a dead point in a
50-dimensional problem can be ``exp(-200)`` or smaller.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .problems import Problem, radius_at_logl

LOG_HALF = np.log(0.5)


@dataclass(frozen=True, eq=False)
class WeightSet:
    """One realisation of volumes and weights for a run.

    ``source`` is ``"expected"``, ``"exact"`` or ``"simulated"``.
    """

    logx: np.ndarray
    logw: np.ndarray
    logz: float
    p: np.ndarray
    source: str = "expected"


def expected_logx(run):
    """``log X_i = -sum_{k<=i} 1/n_k``."""
    nlive = run.nlive if hasattr(run, "nlive") else np.asarray(run)
    return -np.cumsum(1.0 / nlive)


def simulate_logx(run, rng, size=None):
    """Volumes from independent shrinkages ``t_k ~ Beta(n_k, 1)``.

    ``log t_k = log(U) / n_k``, with ``-log U`` drawn directly as a
    standard exponential. With ``size`` the result has shape ``(size, N)``.
    """
    nlive = run.nlive if hasattr(run, "nlive") else np.asarray(run)
    shape = nlive.shape if size is None else (size,) + nlive.shape
    return np.cumsum(-rng.standard_exponential(shape) / nlive, axis=-1)


def trapezium_logw_unchecked(logx):
    """Trapezium log-weights along the last axis; no monotonicity check.

    ``w_i = (X_{i-1} - X_{i+1}) / 2`` with ``X_0 = 1`` and ``X_{N+1} = X_N``.
    Equal neighbouring volumes give ``-inf``.
    """
    logx = np.asarray(logx, dtype=float)
    zero = np.zeros(logx.shape[:-1] + (1,))
    prev = np.concatenate([zero, logx[..., :-1]], axis=-1)
    nxt = np.concatenate([logx[..., 1:], logx[..., -1:]], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return LOG_HALF + prev + np.log1p(-np.exp(nxt - prev))


def trapezium_logw(logx):
    """Log trapezium weights; ``logx`` must be negative and strictly decreasing."""
    logx = np.asarray(logx, dtype=float)
    if logx.shape[-1] == 0:
        return logx.copy()
    if np.any(logx[..., 0] >= 0) or np.any(np.diff(logx, axis=-1) >= 0) or np.any(np.isnan(logx)):
        raise ValueError("log volumes must be negative and strictly decreasing")
    return trapezium_logw_unchecked(logx)


def _logw_of(weights):
    return weights.logw if isinstance(weights, WeightSet) else np.asarray(weights, dtype=float)


def log_evidence(run, weights):
    """``log sum_i L_i w_i``."""
    return float(logsumexp(run.logl + _logw_of(weights)))


def posterior_weights(run, weights):
    """Normalised ``p_i = w_i L_i / Z``."""
    logp = run.logl + _logw_of(weights)
    logz = logsumexp(logp)
    if not np.isfinite(logz):
        raise ValueError("empty posterior")
    return np.exp(logp - logz)


def make_weights(run, logx, source):
    """Build a :class:`WeightSet` from log-volumes."""
    logw = trapezium_logw(logx)
    p = posterior_weights(run, logw)
    return WeightSet(logx=np.asarray(logx), logw=logw, logz=log_evidence(run, logw), p=p, source=source)


def expected_weights(run):
    return make_weights(run, expected_logx(run), "expected")


def simulated_weights(run, rng):
    return make_weights(run, simulate_logx(run, rng), "simulated")


def exact_weights(run):
    if run.true_logx is None:
        raise ValueError("no exact volumes")
    return make_weights(run, run.true_logx, "exact")


def weighted_quantile(values, weights, q):
    """Quantile of a weighted sample, interpolating between weight midpoints.

    Equal values are merged into one atom carrying their summed weight and
    atoms without weight are dropped. Atoms are sorted, cumulative weights
    ``c_k`` formed, and the value at ``q`` is read off the piecewise-linear
    curve through ``(c_k - p_k / 2, v_k)``, clamped to the extreme values.
    """
    v, p = merge_ties(values, weights)
    keep = p > 0
    v, p = v[keep], p[keep]
    p = p / np.sum(p)
    mid = np.cumsum(p) - 0.5 * p
    return float(np.interp(q, mid, v))


def merge_ties(values, weights):
    """Sorted distinct values and the summed weight on each."""
    v, inv = np.unique(np.asarray(values, dtype=float), return_inverse=True)
    return v, np.bincount(inv.ravel(), weights=np.asarray(weights, dtype=float), minlength=v.shape[0])


def _problem_of(run, problem):
    if problem is not None:
        return problem
    prob = run.meta.get("problem")
    if prob is None:
        raise ValueError("radial estimands need the run's problem")
    return prob if isinstance(prob, Problem) else Problem.from_dict(prob)


def estimand_values(run, estimand, problem=None):
    """Per-point ``f(theta_i)`` for a posterior-mean type estimand."""
    kind = estimand.kind
    if kind == "radial_mean":
        return radius_at_logl(_problem_of(run, problem), run.logl)
    if estimand.component >= run.params.shape[1]:
        raise ValueError(f"run tracks {run.params.shape[1]} components; {estimand.label} needs more")
    theta = run.params[:, estimand.component]
    if kind == "param_second_moment":
        return theta**2
    return theta


def evaluate_estimand(run, weights, estimand, problem=None):
    """Estimate ``estimand`` from ``run`` under one set of weights."""
    if estimand.kind == "logz":
        return log_evidence(run, weights)
    if estimand.kind == "evidence":
        return float(np.exp(log_evidence(run, weights)))
    p = weights.p if isinstance(weights, WeightSet) else posterior_weights(run, weights)
    f = estimand_values(run, estimand, problem)
    if estimand.kind == "param_cred_upper":
        return weighted_quantile(f, p, estimand.q)
    return float(np.dot(p, f))


def keeton_weight_moments(n, i, expected_logl=0.0):
    """Mean and second moment of ``w_i = L_i (X_{i-1} - X_i)``.

    For ``n`` live points and iteration ``i >= 1`` with the likelihood
    held at ``exp(expected_logl)``::

        E[w_i]   = L   (1/n) (n/(n+1))^i
        E[w_i^2] = L^2 (2/(n(n+1))) (n/(n+2))^i
    """
    if n < 1 or i < 1:
        raise ValueError("need n >= 1 and i >= 1")
    like = np.exp(expected_logl)
    mean = like / n * (n / (n + 1.0)) ** i
    second = like**2 * 2.0 / (n * (n + 1.0)) * (n / (n + 2.0)) ** i
    return float(mean), float(second)
