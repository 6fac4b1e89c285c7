"""Perfect nested sampling for the analytic problems.

Live points are represented by their exact prior volumes. Because a
replacement is drawn uniformly inside the contour of the point it
replaces, each live point slot evolves independently as
``X_{k+1} = X_k * U``; merging the ``n`` slot sequences in decreasing
volume order gives the dead point sequence of the standard algorithm.
The slots are exactly the threads of the run, so the sampler generates
them as cumulative sums of ``log U`` on whole arrays at once.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
import heapq
import math

import numpy as np

from .problems import contour_at_logx, logx_at_radius, radius_at_logl, sample_params, _log_const
from .run import Run

_INITIAL_DEPTH = -20.0


@dataclass(frozen=True)
class TerminationRule:
    """When to stop: ``evidence_fraction`` (uses ``eps``) or ``fixed_logl``."""

    kind: str = "evidence_fraction"
    eps: float = 1e-4
    l_term: float = None

    def __post_init__(self):
        if self.kind not in ("evidence_fraction", "fixed_logl"):
            raise ValueError(f"unknown termination kind {self.kind!r}")
        if self.kind == "evidence_fraction" and not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.kind == "fixed_logl" and (self.l_term is None or not math.isfinite(self.l_term)):
            raise ValueError("fixed_logl termination needs a finite l_term")

    def to_dict(self):
        if self.kind == "fixed_logl":
            return {"kind": self.kind, "l_term": self.l_term}
        return {"kind": self.kind, "eps": self.eps}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class SamplerConfig:
    nlive: int
    termination: TerminationRule = TerminationRule()
    seed: int = 0
    keep_final_live: bool = False

    def __post_init__(self):
        if int(self.nlive) != self.nlive or self.nlive < 1:
            raise ValueError("nlive must be a positive integer")


def derive_seed(base_seed, index):
    """64-bit seed for run ``index`` of a batch, hashed from ``base_seed``."""
    ss = np.random.SeedSequence(base_seed, spawn_key=(index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _extend_threads(blocks, last, depth, rng):
    """Append shrinkage steps until every thread's last log-volume < depth."""
    while True:
        deficit = float(np.max(last - depth))
        if deficit < 0:
            return last
        k = int(math.ceil(deficit + 4.0 * math.sqrt(deficit) + 4.0))
        steps = -rng.standard_exponential((last.shape[0], k))
        block = last[:, None] + np.cumsum(steps, axis=1)
        blocks.append(block)
        last = block[:, -1]


def _merge_threads(blocks):
    """Merge thread sequences into dead point order.

    Returns sorted log-volumes, the sorted position of each point's
    predecessor in its thread (-1 for draws from the prior) and the length
    of the prefix that is complete (above every thread's deepest point).
    """
    vols = np.concatenate(blocks, axis=1)
    n, k = vols.shape
    flat = vols.ravel()
    order = np.argsort(-flat, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.shape[0])
    pos = order % k
    parent = np.where(pos > 0, rank[np.maximum(order - 1, 0)], -1)
    logx = flat[order]
    complete = int(np.searchsorted(-logx, -np.max(vols[:, -1]), side="left"))
    return logx, parent, complete


def _evidence_stop(logl, parent, complete, n, eps):
    """First dead index where the live evidence estimate drops below eps * Z_dead.

    Both estimates use expected volumes ``exp(-(i + 1) / n)``; the live
    estimate is the mean live likelihood times the current volume.
    """
    total = logl.shape[0]
    shift = np.max(logl)
    like = np.exp(logl - shift)
    # after death i the live set is every m with parent[m] <= i < m
    diff = np.zeros(total + 1)
    np.add.at(diff, np.maximum(parent, 0), like)
    np.add.at(diff, np.arange(total), -like)
    live_sum = np.cumsum(diff)[:complete]
    i = np.arange(1, complete + 1)
    x = np.exp(-i / n)
    width = np.exp(-(i - 1) / n) - x
    z_dead = np.cumsum(like[:complete] * width)
    hit = np.flatnonzero(live_sum / n * x < eps * z_dead)
    return int(hit[0]) if hit.size else None


def _logx_at_logl(problem, logl):
    if problem.family == "constant":
        return min((_log_const(problem) - logl) / problem.const_slope, 0.0)
    return float(logx_at_radius(problem, radius_at_logl(problem, logl)))


def run_perfect_ns(problem, config):
    """Generate one perfect nested sampling run.

    Parameters
    ----------
    problem : Problem
    config : SamplerConfig

    Returns
    -------
    Run
        Constant ``nlive`` run carrying exact ``true_logx``, unless
        ``keep_final_live`` appends the final live points with a tapering
        schedule ``n, n-1, ..., 1``.
    """
    n = int(config.nlive)
    rule = config.termination
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    blocks = []
    last = np.zeros(n)
    if rule.kind == "fixed_logl":
        depth = _logx_at_logl(problem, rule.l_term)
        last = _extend_threads(blocks, last, depth, rng)
        logx, parent, complete = _merge_threads(blocks)
        logl_all, radius_all = contour_at_logx(problem, logx)
        stop = int(np.searchsorted(logl_all[:complete], rule.l_term, side="right")) - 1
        logl_end = float(rule.l_term)
    else:
        depth = _INITIAL_DEPTH
        while True:
            last = _extend_threads(blocks, last, depth, rng)
            logx, parent, complete = _merge_threads(blocks)
            logl_all, radius_all = contour_at_logx(problem, logx)
            stop = _evidence_stop(logl_all, parent, complete, n, rule.eps)
            if stop is not None:
                break
            depth *= 2.0
        logl_end = float(logl_all[stop])
    bad = ~np.isfinite(logl_all[: stop + 1])
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise RuntimeError(f"non-finite logl at dead point {i} (logx={logx[i]!r}) for {problem.name}")

    keep = np.arange(stop + 1)
    nlive = np.full(stop + 1, n, dtype=np.int64)
    if config.keep_final_live:
        idx = np.arange(logx.shape[0])
        live = idx[(parent <= stop) & (idx > stop)]
        keep = np.concatenate([keep, live])
        nlive = np.concatenate([nlive, np.arange(live.shape[0], 0, -1)])
    birth = np.where(parent[keep] >= 0, logl_all[np.maximum(parent[keep], 0)], -np.inf)
    params = sample_params(problem, radius_all[keep], rng)
    meta = {
        "problem": problem.to_dict(),
        "seed": int(config.seed),
        "nlive": n,
        "termination": rule.to_dict(),
        "keep_final_live": bool(config.keep_final_live),
    }
    return Run(
        logl=logl_all[keep],
        birth_logl=birth,
        params=params,
        nlive=nlive,
        true_logx=logx[keep],
        logl_end=logl_end,
        meta=meta,
    )


def _run_indexed(args):
    problem, config, base_seed, index = args
    return run_perfect_ns(problem, replace(config, seed=derive_seed(base_seed, index)))


def repeat_runs(problem, config, count, base_seed, jobs=1, start=0):
    """``count`` independent runs; run ``i`` is seeded from ``(base_seed, start + i)``.

    Output order and content do not depend on ``jobs``.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    tasks = [(problem, config, base_seed, start + i) for i in range(count)]
    if jobs is None or jobs <= 1:
        return [_run_indexed(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_indexed, tasks, chunksize=max(1, count // (4 * jobs))))


def literal_perfect_ns(nlive, n_iter, rng):
    """The textbook loop on volumes only: remove the largest of ``nlive``
    volumes and replace it with a uniform draw below it.

    Returns the dead log-volumes and, for each, the sorted index of the
    dead point whose contour it was born in (-1 for the prior). Slow; kept
    as an independent reference for the vectorized sampler.
    """
    # min-heap on -logx pops the largest volume
    heap = [(-math.log(u), -1) for u in rng.random(nlive)]
    heapq.heapify(heap)
    logx = np.empty(n_iter)
    birth = np.empty(n_iter, dtype=np.int64)
    for i in range(n_iter):
        negv, b = heapq.heappop(heap)
        logx[i] = -negv
        birth[i] = b
        new = logx[i] + math.log(rng.random())
        heapq.heappush(heap, (-new, i))
    return logx, birth
