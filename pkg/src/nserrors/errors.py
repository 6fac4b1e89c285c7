"""Sampling-error estimates for a single nested sampling run.

Bootstrap over threads, simulated weights, and split runs all reduce to
evaluating estimands on many reweighted copies of one run. A copy is
described by the multiplicity of every original dead point (0, 1, 2, ...
for a bootstrap draw, 1 everywhere for simulated weights) and the nlive
each point sees; :func:`replicate` evaluates a block of copies at once.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .inference import LOG_HALF, expected_weights, estimand_values, evaluate_estimand, make_weights
from .problems import Problem, ftilde
from .run import thread_labels

# rows * points processed per block of replications
_BLOCK_CELLS = 1_000_000


@dataclass(frozen=True, eq=False)
class ErrorReport:
    """Point estimate and error estimate of one estimand from one method."""

    estimand: object
    point_value: float
    std_estimate: float
    replications: np.ndarray
    method: str
    count: int
    ci: tuple = None
    extra: dict = field(default_factory=dict)


def _logw_rows(logx):
    # trapezium weights along rows whose trailing padding repeats the last volume
    zero = np.zeros((logx.shape[0], 1))
    prev = np.concatenate([zero, logx[:, :-1]], axis=1)
    nxt = np.concatenate([logx[:, 1:], logx[:, -1:]], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return LOG_HALF + prev + np.log1p(-np.exp(nxt - prev))


class _Prepared:
    """Per-run quantities shared by every replication."""

    def __init__(self, run, estimands, problem=None):
        self.run = run
        self.n = len(run)
        self.estimands = list(estimands)
        self.logl = np.append(run.logl, -np.inf)
        self.values = {}
        self.qorder = {}
        self.atoms = {}
        for e in self.estimands:
            if e.kind in ("logz", "evidence"):
                continue
            f = estimand_values(run, e, problem)
            self.values[e] = f
            if e.kind == "param_cred_upper":
                order = np.argsort(f, kind="stable")
                v = f[order]
                # equal values form one atom; starts index the sorted order
                starts = np.flatnonzero(np.concatenate([[True], v[1:] != v[:-1]]))
                self.qorder[e] = order
                self.atoms[e] = (v[starts], starts)


def _quantile_rows(atom_values, atom_mass, q):
    """Weighted midpoint quantile per row over sorted atoms.

    ``atom_mass[r, k]`` is the posterior mass on distinct value ``k`` in
    replication ``r``; atoms without mass are skipped, as in
    :func:`nserrors.inference.weighted_quantile`.
    """
    m = atom_mass
    knots = np.cumsum(m, axis=1) - 0.5 * m
    valid = m > 0
    ge = valid & (knots >= q)
    lt = valid & (knots < q)
    any_ge = ge.any(axis=1)
    any_lt = lt.any(axis=1)
    width = knots.shape[1]
    hi = np.argmax(ge, axis=1)
    lo = width - 1 - np.argmax(lt[:, ::-1], axis=1)
    r = np.arange(m.shape[0])
    hi = np.where(any_ge, hi, lo)
    lo = np.where(any_lt, lo, hi)
    x0, x1 = knots[r, lo], knots[r, hi]
    y0, y1 = atom_values[lo], atom_values[hi]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(x1 > x0, (q - x0) / (x1 - x0), 0.0)
    return y0 + np.clip(frac, 0.0, 1.0) * (y1 - y0)


def replicate(prep, counts, nlive, rng=None):
    """Evaluate every estimand on weighted copies of a run.

    Parameters
    ----------
    prep : _Prepared
    counts : ndarray of int, shape (R, N)
        Copies of each dead point in each replication.
    nlive : ndarray, shape (R, N)
        Live points at each dead point's contour in each replication.
    rng : numpy.random.Generator or None
        Source of simulated shrinkages; ``None`` uses expected volumes.

    Returns
    -------
    ndarray, shape (R, len(estimands))
    """
    rows, n = counts.shape
    lengths = counts.sum(axis=1)
    width = int(lengths.max()) + 1
    # gather matrix: row r lists original point indices, padded with n
    gather = np.full((rows, width), n, dtype=np.int64)
    flat = np.repeat(np.tile(np.arange(n), rows), counts.ravel())
    row_of = np.repeat(np.arange(rows), lengths)
    starts = np.cumsum(lengths) - lengths
    col = np.arange(flat.shape[0]) - np.repeat(starts, lengths)
    gather[row_of, col] = flat
    pad = gather == n

    live = np.concatenate([nlive, np.ones((rows, 1))], axis=1)
    live = np.take_along_axis(live, gather, axis=1)
    if rng is None:
        logt = -1.0 / live
    else:
        logt = -rng.standard_exponential((rows, width)) / live
    logt[pad] = 0.0
    logx = np.cumsum(logt, axis=1)
    logw = _logw_rows(logx)
    logpost = prep.logl[gather] + logw
    logz = logsumexp(logpost, axis=1)
    p = np.exp(logpost - logz[:, None])

    out = np.empty((rows, len(prep.estimands)))
    need_mass = any(e not in ("logz", "evidence") for e in (x.kind for x in prep.estimands))
    if need_mass:
        idx = (np.arange(rows)[:, None] * (n + 1) + gather).ravel()
        mass = np.bincount(idx, weights=p.ravel(), minlength=rows * (n + 1)).reshape(rows, n + 1)[:, :n]
    for j, e in enumerate(prep.estimands):
        if e.kind == "logz":
            out[:, j] = logz
        elif e.kind == "evidence":
            out[:, j] = np.exp(logz)
        elif e.kind == "param_cred_upper":
            values, starts = prep.atoms[e]
            atom_mass = np.add.reduceat(mass[:, prep.qorder[e]], starts, axis=1)
            out[:, j] = _quantile_rows(values, atom_mass, e.q)
        else:
            out[:, j] = mass @ prep.values[e]
    return out


def _blocks(total, n):
    size = max(1, _BLOCK_CELLS // max(n, 1))
    for lo in range(0, total, size):
        yield lo, min(total, lo + size)


def _live_from_multiplicity(mult, index, n):
    """nlive at each point for thread multiplicities ``mult`` (R, T)."""
    rows = mult.shape[0]
    diff = np.zeros((n + 1, rows))
    np.add.at(diff, index.start, mult.T)
    np.add.at(diff, index.end + 1, -mult.T)
    return np.cumsum(diff, axis=0)[:n].T


def point_values(run, estimands, problem=None):
    """Estimates from the run itself using expected volumes."""
    w = expected_weights(run)
    return np.array([evaluate_estimand(run, w, e, problem) for e in estimands])


def _std(reps):
    return np.std(reps, axis=0, ddof=1) if reps.shape[0] > 1 else np.zeros(reps.shape[1])


def bootstrap_replications(run, estimands, B, rng, problem=None, simulate=False):
    """``(B, len(estimands))`` estimates from resampled sets of threads.

    Each replication draws as many threads as the run has, with
    replacement, and evaluates the recombined run with expected volumes.
    Resampling threads already reproduces the scatter of the contours'
    volumes, so ``simulate=True`` (fresh simulated volumes per
    replication) counts that error source twice and inflates the spread.
    """
    prep = _Prepared(run, estimands, problem)
    index = thread_labels(run)
    nthreads = index.births.shape[0]
    out = np.empty((B, len(prep.estimands)))
    for lo, hi in _blocks(B, prep.n):
        rows = hi - lo
        draws = rng.integers(nthreads, size=(rows, nthreads))
        mult = np.zeros((rows, nthreads), dtype=np.int64)
        np.add.at(mult, (np.repeat(np.arange(rows), nthreads), draws.ravel()), 1)
        counts = mult[:, index.labels]
        nlive = _live_from_multiplicity(mult, index, prep.n)
        out[lo:hi] = replicate(prep, counts, nlive, rng if simulate else None)
    return out


def bootstrap_errors(run, estimands, B=200, rng=None, problem=None, simulate=False):
    """Bootstrap standard errors (``B - 1`` denominator)."""
    if B < 2:
        raise ValueError("bootstrap needs B >= 2")
    rng = np.random.default_rng(rng)
    reps = bootstrap_replications(run, estimands, B, rng, problem, simulate)
    point = point_values(run, estimands, problem)
    std = _std(reps)
    return [
        ErrorReport(e, float(point[j]), float(std[j]), reps[:, j], "bootstrap", B)
        for j, e in enumerate(estimands)
    ]


def ci_from_replications(point, reps, alpha):
    """Basic bootstrap interval ``(2T - G^-1(1 - alpha), 2T - G^-1(alpha))``."""
    if not 0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 0.5)")
    reps = np.asarray(reps, dtype=float)
    if reps.shape[0] < 10:
        raise ValueError("insufficient replications")
    g_lo, g_hi = np.quantile(reps, [alpha, 1.0 - alpha], axis=0)
    return 2.0 * point - g_hi, 2.0 * point - g_lo


def bootstrap_ci(run, estimand, B=1000, alpha=0.05, rng=None, problem=None, simulate=False):
    """Bootstrap confidence interval for one estimand."""
    if B < 10:
        raise ValueError("insufficient replications")
    rng = np.random.default_rng(rng)
    reps = bootstrap_replications(run, [estimand], B, rng, problem, simulate)[:, 0]
    point = point_values(run, [estimand], problem)[0]
    lower, upper = ci_from_replications(point, reps, alpha)
    return float(lower), float(upper)


def simulated_weights_errors(run, estimands, M=200, rng=None, problem=None):
    """Spread of estimates over ``M`` simulated volume vectors, points fixed."""
    if M < 2:
        raise ValueError("simulated weights needs M >= 2")
    rng = np.random.default_rng(rng)
    prep = _Prepared(run, estimands, problem)
    out = np.empty((M, len(prep.estimands)))
    for lo, hi in _blocks(M, prep.n):
        rows = hi - lo
        counts = np.ones((rows, prep.n), dtype=np.int64)
        nlive = np.broadcast_to(run.nlive.astype(float), (rows, prep.n))
        out[lo:hi] = replicate(prep, counts, nlive, rng)
    point = point_values(run, estimands, problem)
    std = _std(out)
    return [
        ErrorReport(e, float(point[j]), float(std[j]), out[:, j], "simulated_weights", M)
        for j, e in enumerate(estimands)
    ]


def split_runs_errors(runs_or_run, estimands, N=None, rng=None, problem=None):
    """Error from the scatter of ``N`` smaller runs, scaled by ``1/sqrt(N)``.

    A single run is split into ``N`` equal groups of threads: the threads
    are put in a random order drawn from ``rng`` and dealt out round-robin.
    Thread labels follow the order of the threads' first points, so
    dealing them without shuffling would stratify every group's initial
    volumes and shrink the scatter. A list of runs is used as given. Each
    small run is evaluated with expected volumes.
    """
    if isinstance(runs_or_run, (list, tuple)):
        subs = list(runs_or_run)
        if N is not None and N != len(subs):
            raise ValueError(f"expected {N} runs, got {len(subs)}")
        vals = np.array([point_values(r, estimands, problem) for r in subs])
        full = None
    else:
        run = runs_or_run
        if N is None or N < 2:
            raise ValueError("split runs needs N >= 2")
        index = thread_labels(run)
        nthreads = index.births.shape[0]
        if nthreads % N:
            raise ValueError(f"{nthreads} threads cannot be split into {N} equal groups")
        rng = np.random.default_rng(rng)
        prep = _Prepared(run, estimands, problem)
        group = np.empty(nthreads, dtype=np.int64)
        group[rng.permutation(nthreads)] = np.arange(nthreads) % N
        mult = (group[None, :] == np.arange(N)[:, None]).astype(np.int64)
        counts = mult[:, index.labels]
        nlive = _live_from_multiplicity(mult, index, prep.n)
        vals = replicate(prep, counts, nlive, rng=None)
        full = run
    n_sub = vals.shape[0]
    std = _std(vals) / np.sqrt(n_sub)
    point = point_values(full, estimands, problem) if full is not None else vals.mean(axis=0)
    return [
        ErrorReport(e, float(point[j]), float(std[j]), vals[:, j], "split_runs", n_sub)
        for j, e in enumerate(estimands)
    ]


DECOMPOSITION_MODES = ("exact_w", "ftilde", "exact_w_and_ftilde")


def decomposed_estimates(run, estimand, mode, problem=None):
    """Estimate with one or both error sources removed.

    ``exact_w`` weights points by their true volumes; ``ftilde`` replaces
    ``f(theta_i)`` by its contour mean at the point's true volume;
    ``exact_w_and_ftilde`` does both.
    """
    if mode not in DECOMPOSITION_MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if run.true_logx is None:
        raise ValueError("no exact volumes")
    if mode == "ftilde":
        w = expected_weights(run)
    else:
        w = make_weights(run, run.true_logx, "exact")
    if mode == "exact_w" or estimand.kind in ("logz", "evidence"):
        return evaluate_estimand(run, w, estimand, problem)
    if problem is None:
        prob = run.meta.get("problem")
        if prob is None:
            raise ValueError("contour means need the run's problem")
        problem = prob if isinstance(prob, Problem) else Problem.from_dict(prob)
    f = ftilde(problem, estimand, run.true_logx)
    return float(np.dot(w.p, f))
