"""MILP for the bound of one (network, hyper-network, class) triple.

The model maximizes ``beta`` such that some shared input ``x`` in ``[0,1]^d``
gives the concrete network a confidence of at least ``beta`` for class ``c``
while the hyper-network does not classify ``x`` as ``c``. Hidden ReLUs use the
usual big-M encoding with bound-derived constants; hyper-network neurons whose
difference interval is at most ``tau`` wide get the triangle relaxation
instead, and every matching pair of neurons is tied by its difference interval.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix

from .exceptions import EncodingError, SolverError
from .hyper import (DifferenceIntervals, IntervalNetwork, PreActivationBounds, build_hyper,
                    compute_difference_intervals, propagate_bounds)
from .network import Network

DEFAULT_TAU = 0.01
MIP_ABS_GAP = 1e-6
FEASIBILITY_TOL = 1e-7
BIG_M_MARGIN = 1.0


class _NoLeakingInputs:
    """Bound of an infeasible problem: no input can leak. Sorts below every real."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NO_LEAKING_INPUTS"

    def __reduce__(self):
        return (_NoLeakingInputs, ())

    def __lt__(self, other):
        return other is not self

    def __le__(self, other):
        return True

    def __gt__(self, other):
        return False

    def __ge__(self, other):
        return other is self


NO_LEAKING_INPUTS = _NoLeakingInputs()


def is_no_leak(value) -> bool:
    return value is NO_LEAKING_INPUTS


def bound_key(value) -> float:
    """Totally ordered float key for a bound (the sentinel maps to -inf)."""
    return -math.inf if value is NO_LEAKING_INPUTS else float(value)


class MilpModel:
    """A linear model ``lo <= A v <= hi`` over named variables, maximizing ``objective . v``."""

    def __init__(self):
        self.names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.binary: list[bool] = []
        self.rows: list[tuple] = []
        self.objective: dict[int, float] = {}
        self.info: dict = {}
        self._index: dict[str, int] = {}

    def add_var(self, name, lb=-math.inf, ub=math.inf, binary=False) -> int:
        if name in self._index:
            raise EncodingError(f"duplicate variable {name}")
        if binary:
            lb, ub = 0.0, 1.0
        self._index[name] = len(self.names)
        self.names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.binary.append(bool(binary))
        return len(self.names) - 1

    def var(self, name) -> int:
        return self._index[name]

    def add_row(self, terms, lo=-math.inf, hi=math.inf, name=None):
        cols = np.fromiter((i for i, _ in terms), dtype=np.int64)
        vals = np.fromiter((v for _, v in terms), dtype=np.float64)
        if cols.size and (cols.min() < 0 or cols.max() >= len(self.names)):
            raise EncodingError(f"row {name} references an undeclared variable")
        self.rows.append((cols, vals, float(lo), float(hi), name or f"r{len(self.rows)}"))

    @property
    def num_vars(self) -> int:
        return len(self.names)

    @property
    def num_binaries(self) -> int:
        return sum(self.binary)

    def stats(self) -> dict:
        return {"variables": self.num_vars, "binaries": self.num_binaries, "rows": len(self.rows), **self.info}

    def arrays(self):
        """Dense-free export: ``(c, A (csr), row_lo, row_hi, lb, ub, integrality)``."""
        indptr, indices, data = [0], [], []
        for cols, vals, *_ in self.rows:
            indices.extend(cols.tolist())
            data.extend(vals.tolist())
            indptr.append(len(indices))
        A = csr_matrix((data, indices, indptr), shape=(len(self.rows), self.num_vars))
        c = np.zeros(self.num_vars)
        for i, v in self.objective.items():
            c[i] = v
        return (c, A, np.array([r[2] for r in self.rows]), np.array([r[3] for r in self.rows]),
                np.array(self.lb), np.array(self.ub), np.array(self.binary, dtype=np.int64))

    def to_lp(self) -> str:
        """CPLEX LP text, for debugging with external tools."""

        def expr(cols, vals):
            parts = []
            for i, v in zip(cols, vals):
                sign = "-" if v < 0 else "+"
                parts.append(f"{sign} {abs(v)!r} {self.names[i]}")
            s = " ".join(parts) or "0 " + self.names[0]
            return s[2:] if s.startswith("+ ") else s

        obj_cols = sorted(self.objective)
        out = ["Maximize", " obj: " + expr(obj_cols, [self.objective[i] for i in obj_cols]), "Subject To"]
        for cols, vals, lo, hi, name in self.rows:
            e = expr(cols, vals)
            if lo == hi:
                out.append(f" {name}: {e} = {lo!r}")
                continue
            if lo > -math.inf:
                out.append(f" {name}_lo: {e} >= {lo!r}")
            if hi < math.inf:
                out.append(f" {name}_hi: {e} <= {hi!r}")
        out.append("Bounds")
        for n, lb, ub, b in zip(self.names, self.lb, self.ub, self.binary):
            if b:
                continue
            if lb == -math.inf and ub == math.inf:
                out.append(f" {n} free")
            else:
                lo = "-inf" if lb == -math.inf else repr(lb)
                hi = "+inf" if ub == math.inf else repr(ub)
                out.append(f" {lo} <= {n} <= {hi}")
        bins = [n for n, b in zip(self.names, self.binary) if b]
        if bins:
            out.append("Binaries")
            out.extend(" " + n for n in bins)
        out.append("End")
        return "\n".join(out) + "\n"


def _check_bounds(b: PreActivationBounds, label):
    for m, (lo, hi) in enumerate(zip(b.lower, b.upper), start=1):
        if np.any(lo > hi) or not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise EncodingError(f"{label} bounds of layer {m} are inconsistent (l > u or non-finite)")


def encode(net: Network, hyper: IntervalNetwork, c: int, bounds, diffs: Optional[DifferenceIntervals],
           tau: float = DEFAULT_TAU, big_m_policy: str = "per_row", *, matching: bool = True,
           eliminate_stable: bool = True) -> MilpModel:
    """Build the bound MILP.

    ``bounds`` is ``(net_bounds, hyper_bounds)``. With ``matching`` off no
    neuron is relaxed and ``diffs`` may be None. ``big_m_policy`` is
    ``"per_row"`` (one constant per competing class) or ``"global"``.
    """
    if not tau >= 0:
        raise EncodingError(f"tau must be >= 0, got {tau}")
    if big_m_policy not in ("per_row", "global"):
        raise EncodingError(f"unknown big-M policy {big_m_policy!r}")
    nb, hb = bounds
    _check_bounds(nb, "network")
    _check_bounds(hb, "hyper-network")
    if net.architecture != hyper.architecture:
        raise EncodingError(f"architecture mismatch {net.architecture} vs {hyper.architecture}")
    K = net.num_classes
    if not 0 <= c < K:
        raise EncodingError(f"class {c} out of range")
    if diffs is None and matching:
        raise EncodingError("difference intervals are required for matching dependencies")

    mdl = MilpModel()
    d = net.architecture[0]
    L = net.num_layers
    xs = [mdl.add_var(f"x_{k}", 0.0, 1.0) for k in range(d)]
    n_prev, h_prev = xs, xs
    relaxed, stable_n, stable_h = 0, 0, 0
    n_out, h_out = None, None

    for m in range(L):
        last = m == L - 1
        # concrete network
        w, b = net.weights[m], net.biases[m]
        lo, hi = nb.lower[m], nb.upper[m]
        zhat = [mdl.add_var(f"zhat_{m + 1}_{k}", lo[k], hi[k]) for k in range(len(b))]
        for k in range(len(b)):
            terms = [(zhat[k], 1.0)] + [(j, -w[k, i]) for i, j in enumerate(n_prev) if w[k, i] != 0.0]
            mdl.add_row(terms, b[k], b[k], f"wsum_{m + 1}_{k}")
        if last:
            n_cur = zhat
        else:
            n_cur = []
            for k in range(len(b)):
                z = mdl.add_var(f"z_{m + 1}_{k}", max(0.0, lo[k]), max(0.0, hi[k]))
                n_cur.append(z)
                stable = lo[k] >= 0 or hi[k] <= 0
                if stable and eliminate_stable:
                    stable_n += 1
                    if lo[k] >= 0:
                        mdl.add_row([(z, 1.0), (zhat[k], -1.0)], 0.0, 0.0, f"relu_{m + 1}_{k}")
                    continue
                _exact_relu(mdl, z, zhat[k], lo[k], hi[k], f"a_{m + 1}_{k}")

        # hyper-network
        wl, wh, bl, bh = hyper.w_lo[m], hyper.w_hi[m], hyper.b_lo[m], hyper.b_hi[m]
        lo, hi = hb.lower[m], hb.upper[m]
        hhat = [mdl.add_var(f"hzhat_{m + 1}_{k}", lo[k], hi[k]) for k in range(len(bl))]
        for k in range(len(bl)):
            # inputs of every layer are non-negative, so the interval sum splits into two rows
            mdl.add_row([(hhat[k], 1.0)] + [(j, -wl[k, i]) for i, j in enumerate(h_prev) if wl[k, i] != 0.0],
                        bl[k], math.inf, f"hwsum_lo_{m + 1}_{k}")
            mdl.add_row([(hhat[k], 1.0)] + [(j, -wh[k, i]) for i, j in enumerate(h_prev) if wh[k, i] != 0.0],
                        -math.inf, bh[k], f"hwsum_hi_{m + 1}_{k}")
        if last:
            h_cur = hhat
        else:
            # relaxing is only tight when the matching rows pin z# to z
            widths = diffs.widths(m) if matching else None
            h_cur = []
            for k in range(len(bl)):
                z = mdl.add_var(f"hz_{m + 1}_{k}", max(0.0, lo[k]), max(0.0, hi[k]))
                h_cur.append(z)
                stable = lo[k] >= 0 or hi[k] <= 0
                if stable and (eliminate_stable or (widths is not None and widths[k] <= tau)):
                    stable_h += 1
                    if lo[k] >= 0:
                        mdl.add_row([(z, 1.0), (hhat[k], -1.0)], 0.0, 0.0, f"hrelu_{m + 1}_{k}")
                    continue
                if widths is not None and widths[k] <= tau:
                    relaxed += 1
                    s = hi[k] / (hi[k] - lo[k])
                    mdl.add_row([(z, 1.0), (hhat[k], -1.0)], 0.0, math.inf, f"tri_lo_{m + 1}_{k}")
                    mdl.add_row([(z, 1.0), (hhat[k], -s)], -math.inf, -s * lo[k], f"tri_hi_{m + 1}_{k}")
                    continue
                _exact_relu(mdl, z, hhat[k], lo[k], hi[k], f"ha_{m + 1}_{k}")

        if matching:
            dl, du = diffs.post_lower[m], diffs.post_upper[m]
            for k in range(len(h_cur)):
                mdl.add_row([(h_cur[k], 1.0), (n_cur[k], -1.0)], dl[k], du[k], f"md_{m + 1}_{k}")
        n_prev, h_prev = n_cur, h_cur
        n_out, h_out = n_cur, h_cur

    beta = mdl.add_var("beta")
    mdl.objective[beta] = 1.0
    others = [j for j in range(K) if j != c]
    for j in others:
        mdl.add_row([(n_out[c], 1.0), (n_out[j], -1.0), (beta, -1.0)], 0.0, math.inf, f"conf_{j}")
    lo, hi = hb.lower[-1], hb.upper[-1]
    ms = {j: max(0.0, hi[c] - lo[j]) + BIG_M_MARGIN for j in others}
    if big_m_policy == "global":
        g = max(ms.values())
        ms = {j: g for j in others}
    alphas = []
    for j in others:
        a = mdl.add_var(f"alpha_{j}", binary=True)
        alphas.append(a)
        mdl.add_row([(h_out[c], 1.0), (h_out[j], -1.0), (a, ms[j])], -math.inf, ms[j], f"hconf_{j}")
    mdl.add_row([(a, 1.0) for a in alphas], 1.0, math.inf, "disjunction")

    mdl.info.update(relaxed_neurons=relaxed, stable_network_neurons=stable_n,
                    stable_hyper_neurons=stable_h, big_m=ms, tau=tau, matching=matching)
    return mdl


def _exact_relu(mdl, z, zhat, lo, hi, aname):
    a = mdl.add_var(aname, binary=True)
    mdl.add_row([(z, 1.0), (zhat, -1.0)], 0.0, math.inf, f"{aname}_ge")
    mdl.add_row([(z, 1.0), (a, -hi)], -math.inf, 0.0, f"{aname}_up")
    mdl.add_row([(z, 1.0), (zhat, -1.0), (a, -lo)], -math.inf, -lo, f"{aname}_act")


def build_problem(net: Network, members_or_hyper, c: int, tau: float = DEFAULT_TAU, **kw) -> MilpModel:
    """Hyper-network, bounds, difference intervals and encoding in one call."""
    hyper = members_or_hyper if isinstance(members_or_hyper, IntervalNetwork) else build_hyper(members_or_hyper)
    nb = propagate_bounds(net)
    hb = propagate_bounds(hyper)
    diffs = compute_difference_intervals(net, hyper, nb)
    return encode(net, hyper, c, (nb, hb), diffs, tau, **kw)


OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
TIME_LIMIT = "TimeLimit"


@dataclass
class SolveResult:
    status: str
    incumbent: Optional[float] = None
    dual_bound: Optional[float] = None
    solve_time: float = 0.0
    solution: Optional[np.ndarray] = field(default=None, repr=False)
    stats: dict = field(default_factory=dict)

    @property
    def value(self):
        """The bound to use downstream: optimum, anytime dual bound, or the sentinel."""
        if self.status == INFEASIBLE:
            return NO_LEAKING_INPUTS
        if self.status == OPTIMAL:
            return self.incumbent
        return math.inf if self.dual_bound is None else self.dual_bound

    @property
    def exact(self) -> bool:
        return self.status in (OPTIMAL, INFEASIBLE)


@dataclass(frozen=True)
class SolveLimits:
    time_limit: Optional[float] = None
    mip_rel_gap: float = 1e-9
    polish: bool = True


def solve(model: MilpModel, backend=None, limits: SolveLimits = SolveLimits()) -> SolveResult:
    """Solve ``model``; optimal solutions are polished by an LP over the fixed binary pattern."""
    from .backends import get_backend  # backends imports this module

    if backend is None or isinstance(backend, str):
        backend = get_backend(backend or "highs")
    t0 = time.perf_counter()
    try:
        res = backend.solve(model, time_limit=limits.time_limit, mip_rel_gap=limits.mip_rel_gap)
    except SolverError as exc:
        exc.stats = {**model.stats(), **exc.stats}
        raise
    except Exception as exc:
        raise SolverError(f"backend {getattr(backend, 'name', backend)!r} failed: {exc}", model.stats()) from exc
    if res.status == OPTIMAL and limits.polish and res.solution is not None and model.num_binaries:
        fixed = np.round(res.solution[np.array(model.binary)])
        lp = backend.solve(model, fix_binaries=fixed)
        if lp.status == OPTIMAL and lp.incumbent is not None:
            res.incumbent = lp.incumbent
            res.solution = lp.solution
            if res.dual_bound is None or res.dual_bound < lp.incumbent:
                res.dual_bound = lp.incumbent
    res.solve_time = time.perf_counter() - t0
    res.stats = model.stats()
    return res
