"""Nested sampling runs, threads, and the merge/unweave operations on them.

A run is stored column-wise (numpy arrays) rather than as a list of point
objects; :class:`DeadPoint` is available as a row view. Points are linked
to the contour they were sampled within through ``birth_logl``, which is
enough to unweave a run into single live point runs ("threads") and to
merge threads back together.
"""

from collections import defaultdict, namedtuple
from dataclasses import dataclass, field
import math

import numpy as np


class BrokenChainError(ValueError):
    """A point's birth contour matches no earlier dead point."""


@dataclass(frozen=True)
class DeadPoint:
    params: tuple
    logl: float
    birth_logl: float = -math.inf
    true_logx: float = None


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


def sort_order(logl, birth_logl):
    """Ascending ``logl``; ties broken by ``birth_logl`` then input order."""
    n = len(logl)
    return np.lexsort((np.arange(n), birth_logl, logl))


@dataclass(frozen=True, eq=False)
class Run:
    """Dead points of a nested sampling run in ascending likelihood order.

    Attributes
    ----------
    logl, birth_logl : ndarray, shape (N,)
        Log-likelihood of each point and of the contour it was drawn within
        (``-inf`` for draws from the whole prior).
    params : ndarray, shape (N, k)
        Tracked parameter components.
    nlive : ndarray of int, shape (N,)
        Live points during the iteration that produced each point.
    true_logx : ndarray or None
        Exact log prior volumes, known only for perfect-sampler runs.
    logl_end : float
        Contour at which sampling stopped. A thread stays live up to the
        later of this contour and its own last point, which covers both
        discarded and retained final live points. Defaults to the last dead
        point's ``logl``.
    meta : dict
        Free-form provenance (seed, problem, termination record).
    """

    logl: np.ndarray
    birth_logl: np.ndarray
    params: np.ndarray
    nlive: np.ndarray
    true_logx: np.ndarray = None
    logl_end: float = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        logl = _frozen(self.logl)
        n = logl.shape[0]
        params = np.array(self.params, dtype=float)
        if params.ndim == 1:
            params = params.reshape(n, -1) if n else params.reshape(0, 1)
        params.flags.writeable = False
        object.__setattr__(self, "logl", logl)
        object.__setattr__(self, "birth_logl", _frozen(self.birth_logl))
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "nlive", _frozen(self.nlive, dtype=np.int64))
        if self.true_logx is not None:
            object.__setattr__(self, "true_logx", _frozen(self.true_logx))
        if self.logl_end is None:
            end = float(logl[-1]) if n else -math.inf
            object.__setattr__(self, "logl_end", end)
        else:
            object.__setattr__(self, "logl_end", float(self.logl_end))
        object.__setattr__(self, "meta", dict(self.meta))

    @classmethod
    def from_arrays(cls, logl, birth_logl, params, nlive, true_logx=None, logl_end=None, meta=None):
        """Build a run, sorting the points into canonical order."""
        logl = np.asarray(logl, dtype=float)
        birth_logl = np.asarray(birth_logl, dtype=float)
        order = sort_order(logl, birth_logl)
        params = np.asarray(params, dtype=float).reshape(len(logl), -1)
        return cls(
            logl=logl[order],
            birth_logl=birth_logl[order],
            params=params[order],
            nlive=np.asarray(nlive)[order],
            true_logx=None if true_logx is None else np.asarray(true_logx, dtype=float)[order],
            logl_end=logl_end,
            meta=meta or {},
        )

    @classmethod
    def from_points(cls, points, nlive, logl_end=None, meta=None):
        """Build a run from :class:`DeadPoint` objects and an nlive schedule.

        ``nlive[i]`` belongs to ``points[i]`` and is carried through sorting.
        """
        points = list(points)
        has_x = bool(points) and all(p.true_logx is not None for p in points)
        return cls.from_arrays(
            logl=[p.logl for p in points],
            birth_logl=[p.birth_logl for p in points],
            params=[list(p.params) for p in points] if points else np.zeros((0, 1)),
            nlive=nlive,
            true_logx=[p.true_logx for p in points] if has_x else None,
            logl_end=logl_end,
            meta=meta,
        )

    def __len__(self):
        return self.logl.shape[0]

    @property
    def points(self):
        tx = self.true_logx
        return [
            DeadPoint(
                params=tuple(self.params[i]),
                logl=float(self.logl[i]),
                birth_logl=float(self.birth_logl[i]),
                true_logx=None if tx is None else float(tx[i]),
            )
            for i in range(len(self))
        ]

    @property
    def problem_id(self):
        prob = self.meta.get("problem")
        if isinstance(prob, dict):
            return tuple(sorted(prob.items()))
        return prob

    @property
    def is_thread(self):
        return bool(np.all(self.nlive == 1))

    def subset(self, idx, nlive, logl_end=None, meta=None):
        """Run made of the points at ``idx`` (already in sorted order)."""
        return Run(
            logl=self.logl[idx],
            birth_logl=self.birth_logl[idx],
            params=self.params[idx],
            nlive=nlive,
            true_logx=None if self.true_logx is None else self.true_logx[idx],
            logl_end=self.logl_end if logl_end is None else logl_end,
            meta=self.meta if meta is None else meta,
        )


ThreadIndex = namedtuple("ThreadIndex", ["labels", "births", "start", "end"])
ThreadIndex.__doc__ = """Thread membership of each point of a run.

labels[i] is the thread of point i; thread t is live for point indices
start[t]..end[t] inclusive (its birth contour to the run's end).
"""


def thread_labels(run):
    """Follow replacement chains to assign each point to a thread.

    A point drawn from the prior starts a thread. A point born on contour
    ``b`` continues the thread of the dead point with ``logl == b``; if that
    point already has a successor (the number of live points increased on
    that contour) the new point starts a thread of its own.
    """
    n = len(run)
    labels = np.empty(n, dtype=np.int64)
    open_parents = defaultdict(list)
    seen = set()
    births = []
    for i in range(n):
        b = float(run.birth_logl[i])
        li = float(run.logl[i])
        if b == -math.inf:
            labels[i] = len(births)
            births.append(b)
        else:
            if b not in seen:
                raise BrokenChainError(f"broken replacement chain at {i}")
            queue = open_parents[b]
            if queue:
                labels[i] = labels[queue.pop(0)]
            else:
                labels[i] = len(births)
                births.append(b)
        open_parents[li].append(i)
        seen.add(li)
    births = np.array(births, dtype=float)
    start = np.searchsorted(run.logl, births, side="right")
    last = np.full(len(births), -np.inf)
    np.maximum.at(last, labels, run.logl)
    ends = np.maximum(last, run.logl_end)
    end = np.searchsorted(run.logl, ends, side="right") - 1
    return ThreadIndex(labels, births, start, end)


def split_into_threads(run):
    """Unweave ``run`` into its single live point runs.

    Every thread inherits the parent's termination contour, so recombining
    all threads reproduces the original nlive schedule.
    """
    index = thread_labels(run)
    threads = []
    for t in range(len(index.births)):
        idx = np.flatnonzero(index.labels == t)
        meta = dict(run.meta, thread=t)
        threads.append(run.subset(idx, np.ones(len(idx), dtype=np.int64), meta=meta))
    return threads


def _live_count(run, contours):
    """Live points ``run`` had while its sampling contour was at each value."""
    if not len(run):
        return np.zeros(len(contours), dtype=np.int64)
    start = float(np.min(run.birth_logl))
    end = max(float(run.logl[-1]), run.logl_end)
    within = (contours > start) & (contours <= end)
    pos = np.searchsorted(run.logl, contours, side="left")
    pos = np.minimum(pos, len(run) - 1)
    return np.where(within, run.nlive[pos], 0)


def combine_runs(runs):
    """Merge runs by pooling their dead points and sorting by likelihood.

    The nlive of the merged run at each contour is the sum of the inputs'
    live counts on that contour, each input being live between its first
    birth contour and its own ``logl_end``.
    """
    runs = list(runs)
    if not runs:
        raise ValueError("no runs")
    pid = runs[0].problem_id
    if any(r.problem_id != pid for r in runs[1:]):
        raise ValueError("incompatible runs")
    if len(runs) == 1:
        return runs[0]
    logl = np.concatenate([r.logl for r in runs])
    birth = np.concatenate([r.birth_logl for r in runs])
    params = np.concatenate([r.params for r in runs])
    has_x = all(r.true_logx is not None for r in runs)
    order = sort_order(logl, birth)
    logl, birth, params = logl[order], birth[order], params[order]
    nlive = np.zeros(len(logl), dtype=np.int64)
    for r in runs:
        nlive += _live_count(r, logl)
    meta = {k: v for k, v in runs[0].meta.items() if k != "thread"}
    meta["combined_from"] = len(runs)
    return Run(
        logl=logl,
        birth_logl=birth,
        params=params,
        nlive=nlive,
        true_logx=np.concatenate([r.true_logx for r in runs])[order] if has_x else None,
        logl_end=max(r.logl_end for r in runs),
        meta=meta,
    )


def validate_run(run):
    """List every broken run invariant as ``"<invariant> at <index>"``."""
    problems = []
    n = len(run)
    if run.nlive.shape[0] != n:
        problems.append(f"nlive length {run.nlive.shape[0]} != {n} points")
    if run.params.shape[0] != n:
        problems.append(f"params rows {run.params.shape[0]} != {n} points")
    if run.true_logx is not None and run.true_logx.shape[0] != n:
        problems.append(f"true_logx length {run.true_logx.shape[0]} != {n} points")
    if problems:
        return problems
    for i in np.flatnonzero(np.isnan(run.logl)):
        problems.append(f"nan logl at {i}")
    for i in np.flatnonzero(run.logl[1:] < run.logl[:-1]):
        problems.append(f"unsorted at {i + 1}")
    for i in np.flatnonzero(~(run.logl > run.birth_logl)):
        problems.append(f"birth_logl >= logl at {i}")
    for i in np.flatnonzero(run.nlive < 1):
        problems.append(f"nlive < 1 at {i}")
    if run.true_logx is not None:
        for i in np.flatnonzero(~(run.true_logx <= 0)):
            problems.append(f"true_logx > 0 at {i}")
    seen = set()
    for i in range(n):
        b = float(run.birth_logl[i])
        if b != -math.inf and b not in seen:
            problems.append(f"broken replacement chain at {i}")
        seen.add(float(run.logl[i]))
    return problems
