"""Brute-force reference for the bound MILP, used to check the solver path.

Enumerates every activation pattern of both copies (and, with more than two
classes, every competing class), solves one LP per combination, and returns
the best value. It shares no code with the MILP encoding.
"""
from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog

from .exceptions import InstanceTooLarge
from .hyper import IntervalNetwork
from .milp import NO_LEAKING_INPUTS
from .network import Network

MAX_RELUS = 16


class _LP:
    def __init__(self):
        self.n = 0
        self.eq, self.ub = [], []
        self.bounds = []

    def var(self, lo=None, hi=None):
        self.bounds.append((lo, hi))
        self.n += 1
        return self.n - 1

    def vars(self, k, lo=None, hi=None):
        return [self.var(lo, hi) for _ in range(k)]

    def row_eq(self, coefs, rhs):
        self.eq.append((coefs, rhs))

    def row_le(self, coefs, rhs):
        self.ub.append((coefs, rhs))

    def _dense(self, rows):
        if not rows:
            return None, None
        A = np.zeros((len(rows), self.n))
        for r, (coefs, _) in enumerate(rows):
            for j, v in coefs:
                A[r, j] += v
        return A, np.array([rhs for _, rhs in rows])

    def maximize(self, j):
        c = np.zeros(self.n)
        c[j] = -1.0
        A_ub, b_ub = self._dense(self.ub)
        A_eq, b_eq = self._dense(self.eq)
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=self.bounds, method="highs")
        return -res.fun if res.status == 0 else None


def _allowed(bounds, layer, k):
    if bounds is None:
        return (0, 1)
    lo, hi = bounds.lower[layer][k], bounds.upper[layer][k]
    if lo > 0:
        return (1,)
    if hi < 0:
        return (0,)
    return (0, 1)


def exact_oracle(net: Network, hyper: IntervalNetwork, c: int, bounds=None):
    """Exact optimum by enumeration, or ``NO_LEAKING_INPUTS``.

    ``bounds`` is an optional ``(net_bounds, hyper_bounds)`` pair used only to
    skip activation phases that strictly cannot occur.
    """
    nb, hb = bounds if bounds is not None else (None, None)
    sizes = [w.shape[0] for w in net.weights[:-1]]
    total = 2 * sum(sizes)
    if total > MAX_RELUS:
        raise InstanceTooLarge(f"{total} ReLUs across both copies exceeds the oracle limit of {MAX_RELUS}")
    choices_n = [_allowed(nb, m, k) for m, s in enumerate(sizes) for k in range(s)]
    choices_h = [_allowed(hb, m, k) for m, s in enumerate(sizes) for k in range(s)]
    K = net.num_classes
    best = None
    for pat_n in itertools.product(*choices_n):
        for pat_h in itertools.product(*choices_h):
            for rival in (j for j in range(K) if j != c):
                v = _pattern_lp(net, hyper, c, rival, pat_n, pat_h)
                if v is not None and (best is None or v > best):
                    best = v
    return NO_LEAKING_INPUTS if best is None else best


def _pattern_lp(net, hyper, c, rival, pat_n, pat_h):
    lp = _LP()
    d = net.architecture[0]
    x = lp.vars(d, 0.0, 1.0)
    zn, zh = x, x
    pn, ph = iter(pat_n), iter(pat_h)
    L = net.num_layers
    for m in range(L):
        w, b = net.weights[m], net.biases[m]
        wl, wh, bl, bh = hyper.w_lo[m], hyper.w_hi[m], hyper.b_lo[m], hyper.b_hi[m]
        k_m = w.shape[0]
        hn = lp.vars(k_m)
        hh = lp.vars(k_m)
        for k in range(k_m):
            lp.row_eq([(hn[k], 1.0)] + [(zn[i], -w[k, i]) for i in range(len(zn))], b[k])
            # bl + wl.z <= hh <= bh + wh.z
            lp.row_le([(hh[k], -1.0)] + [(zh[i], wl[k, i]) for i in range(len(zh))], -bl[k])
            lp.row_le([(hh[k], 1.0)] + [(zh[i], -wh[k, i]) for i in range(len(zh))], bh[k])
        if m == L - 1:
            zn, zh = hn, hh
            break
        new_n, new_h = [], []
        for pre, pat, out in ((hn, pn, new_n), (hh, ph, new_h)):
            for k in range(k_m):
                if next(pat):
                    out.append(pre[k])
                    lp.row_le([(pre[k], -1.0)], 0.0)
                else:
                    out.append(lp.var(0.0, 0.0))
                    lp.row_le([(pre[k], 1.0)], 0.0)
        zn, zh = new_n, new_h
    beta = lp.var()
    for j in range(net.num_classes):
        if j != c:
            lp.row_le([(beta, 1.0), (zn[c], -1.0), (zn[j], 1.0)], 0.0)
    lp.row_le([(zh[c], 1.0), (zh[rival], -1.0)], 0.0)
    return lp.maximize(beta)
