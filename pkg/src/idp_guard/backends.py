"""MILP solver backends.

A backend exposes ``name`` and ``solve(model, time_limit=None, mip_rel_gap=...,
fix_binaries=None) -> SolveResult``. Handles are not thread-safe; create one
per concurrent solve.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .exceptions import SolverError
from .milp import INFEASIBLE, MIP_ABS_GAP, OPTIMAL, TIME_LIMIT, MilpModel, SolveResult


class HighsBackend:
    """HiGHS through :func:`scipy.optimize.milp` (deterministic, single-threaded).

    HiGHS's default absolute MIP gap is already 1e-6; the relative gap is
    passed through.
    """

    name = "highs"
    abs_gap = MIP_ABS_GAP

    def solve(self, model: MilpModel, time_limit=None, mip_rel_gap=1e-9, fix_binaries=None) -> SolveResult:
        c, A, rlo, rhi, lb, ub, integrality = model.arrays()
        if fix_binaries is not None:
            mask = integrality.astype(bool)
            lb = lb.copy()
            ub = ub.copy()
            lb[mask] = fix_binaries
            ub[mask] = fix_binaries
            integrality = np.zeros_like(integrality)
        options = {"mip_rel_gap": mip_rel_gap, "presolve": True}
        if time_limit is not None:
            options["time_limit"] = float(time_limit)
        cons = [LinearConstraint(A, rlo, rhi)] if A.shape[0] else []
        # scipy minimizes; the model maximizes
        res = milp(-c, constraints=cons, integrality=integrality, bounds=Bounds(lb, ub), options=options)
        if res.status == 0:
            value = -float(res.fun)
            dual = getattr(res, "mip_dual_bound", None)
            dual = value if dual is None or not np.isfinite(dual) else -float(dual)
            return SolveResult(OPTIMAL, value, max(dual, value), solution=np.asarray(res.x))
        if res.status == 2:
            return SolveResult(INFEASIBLE)
        if res.status == 1:
            inc = None if res.x is None else -float(res.fun)
            dual = getattr(res, "mip_dual_bound", None)
            dual = math.inf if dual is None or not np.isfinite(dual) else -float(dual)
            return SolveResult(TIME_LIMIT, inc, dual, solution=None if res.x is None else np.asarray(res.x))
        raise SolverError(f"HiGHS returned status {res.status}: {res.message}", model.stats())


BACKENDS = {"highs": HighsBackend}


def get_backend(name: str = "highs"):
    try:
        return BACKENDS[name]()
    except KeyError:
        raise ValueError(f"unknown MILP backend {name!r}; available: {sorted(BACKENDS)}") from None
