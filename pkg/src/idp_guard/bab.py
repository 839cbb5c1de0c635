"""Branch-and-bound over hyper-networks of leave-one-out models.

Each task is a subset ``S`` of dataset indices together with the MILP bound of
the hyper-network of ``{N_-i : i in S}``. Tasks live in a max-priority queue.
The loop pops the largest bound; a popped singleton bounds every queued task
and ends the search, anything else is split by k-means over the members'
parameter vectors and all clusters are re-analyzed.
"""
from __future__ import annotations

import heapq
import itertools
import logging
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning

from .backends import get_backend
from .exceptions import SolverError
from .hyper import build_hyper, compute_difference_intervals, propagate_bounds
from .milp import (DEFAULT_TAU, NO_LEAKING_INPUTS, SolveLimits, bound_key, encode, is_no_leak, solve)
from .training import LooFamily

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClusterConfig:
    max_k: int = 10
    seed: int = 0
    max_iter: int = 300
    n_init: int = 10

    def __post_init__(self):
        if self.max_k < 2:
            raise ValueError("max_k must be >= 2")


@dataclass(frozen=True)
class BabConfig:
    tau: float = DEFAULT_TAU
    milp_time_limit: Optional[float] = 40 * 60.0
    total_time_limit: Optional[float] = 8 * 3600.0
    workers: int = 4
    deterministic: bool = True
    backend: str = "highs"
    matching: bool = True
    big_m_policy: str = "per_row"
    cluster: ClusterConfig = field(default_factory=ClusterConfig)


@dataclass
class BabTask:
    subset: tuple
    bound: object
    status: str
    exact: bool


@dataclass
class BoundResult:
    """Outcome of one per-class run. ``beta`` may be ``NO_LEAKING_INPUTS``.

    ``exact`` is False when the bound came from a time-limited solve or the
    total time limit stopped the search (then ``beta`` is the anytime bound).
    """

    c: int
    beta: object
    exact: bool
    timed_out: bool = False
    trace: list = field(default_factory=list)
    milp_count: int = 0
    total_time: float = 0.0
    deterministic: bool = True

    @property
    def beta_key(self) -> float:
        return bound_key(self.beta)

    def to_dict(self) -> dict:
        trace = self.trace
        if self.deterministic:
            trace = [{k: v for k, v in e.items() if k != "time"} for e in trace]
        out = {"beta": encode_bound(self.beta), "exact": self.exact, "timed_out": self.timed_out,
               "milp_count": self.milp_count, "trace": trace}
        if not self.deterministic:
            out["total_time"] = self.total_time
        return out

    @classmethod
    def from_dict(cls, c: int, doc: dict) -> "BoundResult":
        return cls(int(c), decode_bound(doc["beta"]), bool(doc["exact"]), bool(doc.get("timed_out", False)),
                   list(doc.get("trace", [])), int(doc.get("milp_count", 0)), float(doc.get("total_time", 0.0)),
                   "total_time" not in doc)


def encode_bound(value):
    return "no_leaking_inputs" if is_no_leak(value) else float(value)


def decode_bound(value):
    return NO_LEAKING_INPUTS if value == "no_leaking_inputs" else float(value)


def _sse_curve(X, max_k, config):
    n = len(X)
    sse, labels = {}, {}
    for k in range(1, min(max_k + 1, n) + 1):
        if k == 1:
            sse[1] = float(((X - X.mean(axis=0)) ** 2).sum())
            labels[1] = np.zeros(n, dtype=int)
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            km = KMeans(n_clusters=k, n_init=config.n_init, max_iter=config.max_iter,
                        random_state=config.seed).fit(X)
        sse[k] = float(km.inertia_)
        labels[k] = km.labels_
    return sse, labels


def elbow_k(sse: dict, max_k: int) -> int:
    """k in ``[2, max_k]`` maximizing the second difference of the SSE curve.

    SSE beyond the number of points is taken as zero; ties pick the smaller k.
    """
    get = lambda k: sse.get(k, 0.0)
    best, best_val = 2, None
    for k in range(2, max_k + 1):
        val = get(k - 1) - 2.0 * get(k) + get(k + 1)
        if best_val is None or val > best_val + 1e-12 * max(1.0, abs(best_val)):
            best, best_val = k, val
    return best


def partition(networks: dict, config: ClusterConfig = ClusterConfig()) -> list:
    """Split dataset indices into disjoint groups of similar networks."""
    idx = sorted(networks)
    if len(idx) < 2:
        raise ValueError("partition needs at least two networks")
    if len(idx) == 2:
        return [[idx[0]], [idx[1]]]
    X = np.stack([networks[i].flat_parameters() for i in idx])
    max_k = min(config.max_k, len(idx))
    sse, labels = _sse_curve(X, max_k, config)
    k = elbow_k(sse, max_k)
    lab = labels[k]
    groups = [[i for i, l in zip(idx, lab) if l == g] for g in np.unique(lab)]
    groups = [g for g in groups if g]
    if len(groups) < 2:
        # degenerate geometry: balanced split by distance to the centroid
        dist = np.linalg.norm(X - X.mean(axis=0), axis=1)
        order = [idx[j] for j in np.argsort(dist, kind="stable")]
        half = len(order) // 2
        groups = [sorted(order[:half]), sorted(order[half:])]
    return sorted(groups, key=lambda g: g[0])


def solve_subset(family: LooFamily, subset, c: int, config: BabConfig, time_limit=None):
    """Analyze one subset: hyper-network, difference intervals, MILP, solve."""
    net = family.full
    hyper = build_hyper(family.members(subset))
    nb = propagate_bounds(net)
    hb = propagate_bounds(hyper)
    diffs = compute_difference_intervals(net, hyper, nb)
    model = encode(net, hyper, c, (nb, hb), diffs, config.tau, config.big_m_policy, matching=config.matching)
    return solve(model, get_backend(config.backend), SolveLimits(time_limit=time_limit))


def naive_bound(family: LooFamily, c: int, config: BabConfig = BabConfig()):
    """Max over the per-point problems (one MILP per omitted point)."""
    vals = [solve_subset(family, (i,), c, config).value for i in sorted(family.omitted)]
    return max(vals, key=bound_key)


def compute_bound(family: LooFamily, c: int, config: BabConfig = BabConfig(), *,
                  solve_fn=None, partition_fn=None) -> BoundResult:
    """Best-first search for the class-``c`` bound over all omitted points.

    ``solve_fn(subset, time_limit)`` and ``partition_fn(subset)`` replace the
    MILP analysis and the clustering step; they default to
    :func:`solve_subset` and :func:`partition`. On a solver failure the raised
    :class:`SolverError` carries the partial result as ``exc.partial``.
    """
    if not 0 <= c < family.full.num_classes:
        raise ValueError(f"class {c} out of range")
    if solve_fn is None:
        solve_fn = lambda subset, limit: solve_subset(family, subset, c, config, limit)
    if partition_fn is None:
        partition_fn = lambda subset: partition({i: family.omitted[i] for i in subset}, config.cluster)
    t0 = time.perf_counter()
    result = BoundResult(c, math.inf, False, deterministic=config.deterministic)

    def remaining():
        if config.total_time_limit is None:
            return None
        return config.total_time_limit - (time.perf_counter() - t0)

    def run(subset):
        left = remaining()
        limit = config.milp_time_limit
        if left is not None:
            limit = max(0.0, left) if limit is None else min(limit, max(0.0, left))
        return solve_fn(subset, limit)

    try:
        _search(result, family, run, partition_fn, remaining, config.workers, t0)
    except SolverError as exc:
        result.exact = False
        exc.partial = result
        raise
    finally:
        result.total_time = time.perf_counter() - t0
    return result


def _search(result, family, run, partition_fn, remaining, workers, t0):
    counter = itertools.count()
    queue: list = []
    pending = [tuple(sorted(family.omitted))]
    anytime_exact = False
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        while True:
            left = remaining()
            if left is not None and left <= 0:
                result.timed_out = True
                break
            # results come back in submission order, so the trace is schedule-independent
            for subset, res in zip(pending, pool.map(run, pending)):
                result.milp_count += 1
                task = BabTask(tuple(subset), res.value, res.status, res.exact)
                heapq.heappush(queue, (-bound_key(task.bound), next(counter), task))
                result.trace.append({"event": "solve", "subset": list(task.subset), "size": len(task.subset),
                                     "bound": encode_bound(task.bound), "status": res.status,
                                     "time": res.solve_time})
            _, _, task = heapq.heappop(queue)
            # every popped bound is sound; a time-limited child can come back looser
            # than its parent, and then the parent's bound is kept
            if task.exact or bound_key(task.bound) <= bound_key(result.beta):
                result.beta, anytime_exact = task.bound, task.exact
            else:
                anytime_exact = False
            result.trace.append({"event": "pop", "subset": list(task.subset), "size": len(task.subset),
                                 "bound": encode_bound(task.bound), "status": task.status,
                                 "time": time.perf_counter() - t0})
            logger.info("class %d: popped |S|=%d bound=%s queued=%d anytime=%s", result.c,
                        len(task.subset), encode_bound(task.bound), len(queue), encode_bound(result.beta))
            if is_no_leak(task.bound) or len(task.subset) == 1:
                break
            left = remaining()
            if left is not None and left <= 0:
                # the popped bound dominates every queued task, so it is a sound anytime value
                result.timed_out = True
                break
            pending = partition_fn(task.subset)
    result.exact = anytime_exact and not result.timed_out


def compute_bounds(family: LooFamily, classes=None, config: BabConfig = BabConfig()) -> dict:
    classes = range(family.full.num_classes) if classes is None else classes
    return {int(c): compute_bound(family, int(c), config) for c in classes}
