"""Interval-parameter networks, interval bound propagation, difference intervals.

An :class:`IntervalNetwork` (hyper-network) holds ``[lo, hi]`` for every
weight and bias and abstracts each concrete network whose parameters fall
inside those intervals. Layers are indexed ``0..L-1`` in arrays, matching
``Network.weights``; ``m`` in the docstrings below is the 1-based layer.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import ShapeError
from .network import Network


def _ro(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


def interval_mul(alo, ahi, blo, bhi):
    """Elementwise product of intervals ``[alo,ahi] * [blo,bhi]`` (four-product rule)."""
    p = np.stack(np.broadcast_arrays(alo * blo, alo * bhi, ahi * blo, ahi * bhi))
    return p.min(axis=0), p.max(axis=0)


@dataclass(frozen=True, eq=False)
class IntervalNetwork:
    w_lo: tuple
    w_hi: tuple
    b_lo: tuple
    b_hi: tuple

    def __post_init__(self):
        for name in ("w_lo", "w_hi", "b_lo", "b_hi"):
            object.__setattr__(self, name, tuple(_ro(a) for a in getattr(self, name)))
        for m, (wl, wh, bl, bh) in enumerate(zip(self.w_lo, self.w_hi, self.b_lo, self.b_hi), start=1):
            if wl.shape != wh.shape or bl.shape != bh.shape or bl.shape != (wl.shape[0],):
                raise ShapeError(f"layer {m}: inconsistent interval shapes", layer=m)
            if np.any(wl > wh) or np.any(bl > bh):
                raise ValueError(f"layer {m}: interval with lo > hi")

    @classmethod
    def from_network(cls, net: Network) -> "IntervalNetwork":
        return cls(net.weights, net.weights, net.biases, net.biases)

    @property
    def architecture(self) -> tuple:
        return (self.w_lo[0].shape[1],) + tuple(w.shape[0] for w in self.w_lo)

    @property
    def num_layers(self) -> int:
        return len(self.w_lo)

    def contains(self, net: Network, atol: float = 0.0) -> bool:
        if net.architecture != self.architecture:
            return False
        return all(
            np.all(lo - atol <= p) and np.all(p <= hi + atol)
            for lo, hi, p in zip(self.w_lo + self.b_lo, self.w_hi + self.b_hi, net.weights + net.biases)
        )

    def sample(self, rng: np.random.Generator) -> Network:
        """A concrete network drawn uniformly from the parameter box."""
        ws = tuple(rng.uniform(lo, hi) for lo, hi in zip(self.w_lo, self.w_hi))
        bs = tuple(rng.uniform(lo, hi) for lo, hi in zip(self.b_lo, self.b_hi))
        return Network(ws, bs)

    def to_dict(self) -> dict:
        return {
            "architecture": list(self.architecture),
            "layers": [
                {"weights_lo": wl.tolist(), "weights_hi": wh.tolist(), "bias_lo": bl.tolist(), "bias_hi": bh.tolist()}
                for wl, wh, bl, bh in zip(self.w_lo, self.w_hi, self.b_lo, self.b_hi)
            ],
        }


def build_hyper(members: Sequence[Network]) -> IntervalNetwork:
    """Entrywise ``[min, max]`` over the members' parameters."""
    members = list(members)
    if not members:
        raise ValueError("a hyper-network needs at least one member")
    arch = members[0].architecture
    for n in members[1:]:
        if n.architecture != arch:
            raise ShapeError(f"architecture mismatch: {n.architecture} vs {arch}", expected=arch, got=n.architecture)
    L = members[0].num_layers
    w = [np.stack([n.weights[m] for n in members]) for m in range(L)]
    b = [np.stack([n.biases[m] for n in members]) for m in range(L)]
    return IntervalNetwork(
        tuple(a.min(axis=0) for a in w), tuple(a.max(axis=0) for a in w),
        tuple(a.min(axis=0) for a in b), tuple(a.max(axis=0) for a in b),
    )


def _as_intervals(net):
    if isinstance(net, IntervalNetwork):
        return net
    if isinstance(net, Network):
        return IntervalNetwork.from_network(net)
    raise TypeError(f"expected Network or IntervalNetwork, got {type(net).__name__}")


@dataclass(frozen=True, eq=False)
class PreActivationBounds:
    """Per-layer lower/upper bounds on pre-activation values ``ẑ``."""

    lower: tuple
    upper: tuple
    input_lower: np.ndarray
    input_upper: np.ndarray

    @property
    def num_layers(self):
        return len(self.lower)

    def post(self, layer: int):
        """Bounds on the output of array layer ``layer`` (-1 = input). Output layer has no ReLU."""
        if layer < 0:
            return self.input_lower, self.input_upper
        lo, hi = self.lower[layer], self.upper[layer]
        if layer == self.num_layers - 1:
            return lo, hi
        return np.maximum(lo, 0.0), np.maximum(hi, 0.0)

    def to_dict(self) -> dict:
        return {"lower": [a.tolist() for a in self.lower], "upper": [a.tolist() for a in self.upper]}


def propagate_bounds(net, input_lower=0.0, input_upper=1.0) -> PreActivationBounds:
    """Interval arithmetic, layer by layer, over the input box (default ``[0,1]^d``)."""
    h = _as_intervals(net)
    d = h.architecture[0]
    zlo = np.broadcast_to(np.asarray(input_lower, dtype=np.float64), (d,)).copy()
    zhi = np.broadcast_to(np.asarray(input_upper, dtype=np.float64), (d,)).copy()
    in_lo, in_hi = zlo.copy(), zhi.copy()
    lowers, uppers = [], []
    for m in range(h.num_layers):
        plo, phi = interval_mul(h.w_lo[m], h.w_hi[m], zlo[None, :], zhi[None, :])
        lo = h.b_lo[m] + plo.sum(axis=1)
        hi = h.b_hi[m] + phi.sum(axis=1)
        lowers.append(_ro(lo))
        uppers.append(_ro(hi))
        zlo, zhi = np.maximum(lo, 0.0), np.maximum(hi, 0.0)
    return PreActivationBounds(tuple(lowers), tuple(uppers), _ro(in_lo), _ro(in_hi))


@dataclass(frozen=True, eq=False)
class DifferenceIntervals:
    """Bounds on ``z# - z`` (post) and ``ẑ# - ẑ`` (pre) for matching neurons."""

    pre_lower: tuple
    pre_upper: tuple
    post_lower: tuple
    post_upper: tuple

    def widths(self, layer: int) -> np.ndarray:
        return self.post_upper[layer] - self.post_lower[layer]

    def to_dict(self) -> dict:
        return {
            "pre_lower": [a.tolist() for a in self.pre_lower],
            "pre_upper": [a.tolist() for a in self.pre_upper],
            "post_lower": [a.tolist() for a in self.post_lower],
            "post_upper": [a.tolist() for a in self.post_upper],
        }


def compute_difference_intervals(net: Network, hyper: IntervalNetwork,
                                 bounds: PreActivationBounds) -> DifferenceIntervals:
    """Propagate ``z# - z`` through the layers.

    With ``I_w = w# - w`` and ``I_b = b# - b``::

        I_ẑ = I_b + sum_k' ( w * I_z[k'] + I_w * (z[k'] + I_z[k']) )

    where ``z[k']`` ranges over the concrete network's post-activation bounds
    (inputs: ``[0,1]``). ReLU is 1-Lipschitz and monotone, so a hidden neuron's
    output difference is ``[-max(0, -lo), max(0, hi)]`` of ``I_ẑ``.
    """
    if net.architecture != hyper.architecture:
        raise ShapeError(f"architecture mismatch: {net.architecture} vs {hyper.architecture}",
                         expected=net.architecture, got=hyper.architecture)
    d = net.architecture[0]
    dlo, dhi = np.zeros(d), np.zeros(d)
    last = net.num_layers - 1
    pre_lo, pre_hi, post_lo, post_hi = [], [], [], []
    for m in range(net.num_layers):
        w, b = net.weights[m], net.biases[m]
        iw_lo, iw_hi = hyper.w_lo[m] - w, hyper.w_hi[m] - w
        ib_lo, ib_hi = hyper.b_lo[m] - b, hyper.b_hi[m] - b
        zlo, zhi = bounds.post(m - 1)
        # w * I_z  (w is a point interval)
        a_lo, a_hi = interval_mul(w, w, dlo[None, :], dhi[None, :])
        # I_w * (z + I_z)
        c_lo, c_hi = interval_mul(iw_lo, iw_hi, (zlo + dlo)[None, :], (zhi + dhi)[None, :])
        lo = ib_lo + (a_lo + c_lo).sum(axis=1)
        hi = ib_hi + (a_hi + c_hi).sum(axis=1)
        pre_lo.append(_ro(lo))
        pre_hi.append(_ro(hi))
        if m < last:
            dlo, dhi = -np.maximum(0.0, -lo), np.maximum(0.0, hi)
        else:
            dlo, dhi = lo, hi
        post_lo.append(_ro(dlo))
        post_hi.append(_ro(dhi))
    return DifferenceIntervals(tuple(pre_lo), tuple(pre_hi), tuple(post_lo), tuple(post_hi))
