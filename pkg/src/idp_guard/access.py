"""Label-only access with individual differential privacy.

:class:`AccessGuard` answers a query deterministically when the network's
confidence in its predicted class exceeds that class's bound, and otherwise
samples a label from the exponential mechanism with the 0/1 utility that
marks the predicted class (sensitivity 1). Sampled labels are memoized so a
repeated input always gets the same answer.
"""
from __future__ import annotations

import math
import threading
from collections import OrderedDict

import numpy as np

from ._random import stream
from .exceptions import ShapeError
from .milp import bound_key
from .network import Network, forward, scores_confidence
from .training import LooFamily

DETERMINISTIC = "deterministic"
NOISED = "noised"
MEMO = "memo"

DEFAULT_MEMO_CAPACITY = 10 ** 6


def mechanism_probabilities(predicted: int, num_classes: int, epsilon: float) -> np.ndarray:
    """Output distribution: ``exp(eps/2)`` weight on ``predicted``, weight 1 elsewhere."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    # normalize with the largest weight factored out, so huge epsilon stays finite
    other = math.exp(-epsilon / 2.0)
    p = np.full(num_classes, other)
    p[predicted] = 1.0
    return p / p.sum()


def exponential_mechanism(predicted: int, num_classes: int, epsilon: float, rng: np.random.Generator) -> int:
    """Sample a class by inverse CDF over :func:`mechanism_probabilities`."""
    cdf = np.cumsum(mechanism_probabilities(predicted, num_classes, epsilon))
    u = rng.random() * cdf[-1]
    return int(min(np.searchsorted(cdf, u, side="right"), num_classes - 1))


def _check_domain(x, d):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (d,):
        raise ShapeError(f"layer 0 (input): expected size {d}, got shape {x.shape}", layer=0, expected=d, got=x.shape)
    if np.any(x < 0.0) or np.any(x > 1.0) or not np.all(np.isfinite(x)):
        raise ValueError("query input must lie in [0, 1]^d")
    return x


class AccessGuard:
    """The network plus per-class bounds, a privacy budget and a label memo.

    Concurrent queries are safe. Two racing first queries of the same noised
    input may both sample; the first one stored wins and later reads see it.
    """

    def __init__(self, net: Network, bounds: dict, epsilon: float, seed: int = 0,
                 memo_capacity: int = DEFAULT_MEMO_CAPACITY):
        if epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if memo_capacity < 1:
            raise ValueError("memo_capacity must be >= 1")
        missing = set(range(net.num_classes)) - set(int(c) for c in bounds)
        if missing:
            raise ValueError(f"no bound for classes {sorted(missing)}")
        self.net = net
        self.bounds = {int(c): b for c, b in bounds.items()}
        self.epsilon = float(epsilon)
        self.seed = seed
        self.memo_capacity = memo_capacity
        self.memo: OrderedDict = OrderedDict()
        self._rng = stream(seed, "mechanism")
        self._lock = threading.Lock()

    def query_with_path(self, x) -> tuple:
        x = _check_domain(x, self.net.architecture[0])
        key = x.tobytes()
        with self._lock:
            hit = self.memo.get(key)
        if hit is not None:
            return hit, MEMO
        scores = forward(self.net, x)
        c = int(np.argmax(scores))
        if scores_confidence(scores, c) > bound_key(self.bounds[c]):
            return c, DETERMINISTIC
        with self._lock:
            label = exponential_mechanism(c, self.net.num_classes, self.epsilon, self._rng)
            stored = self.memo.setdefault(key, label)
            if len(self.memo) > self.memo_capacity:
                self.memo.popitem(last=False)
        return stored, NOISED

    def query(self, x) -> int:
        return self.query_with_path(x)[0]

    def query_batch(self, X):
        out = [self.query_with_path(x) for x in np.atleast_2d(X)]
        return np.array([l for l, _ in out]), [p for _, p in out]


def naive_noise_query(net: Network, x, epsilon: float, rng: np.random.Generator) -> int:
    """Always noise the predicted label."""
    c = int(np.argmax(forward(net, x)))
    return exponential_mechanism(c, net.num_classes, epsilon, rng)


def naive_idp_query(family: LooFamily, x, epsilon: float, rng: np.random.Generator) -> int:
    """Noise only when some leave-one-out model disagrees with the full model."""
    c = int(np.argmax(forward(family.full, x)))
    for net in family.omitted.values():
        if int(np.argmax(forward(net, x))) != c:
            return exponential_mechanism(c, family.full.num_classes, epsilon, rng)
    return c


def family_agreement(family: LooFamily, X) -> np.ndarray:
    """Boolean per row of ``X``: all |D|+1 networks predict the same class."""
    X = np.atleast_2d(X)
    ref = np.argmax(forward(family.full, X), axis=1)
    agree = np.ones(len(X), dtype=bool)
    for net in family.omitted.values():
        agree &= np.argmax(forward(net, X), axis=1) == ref
    return agree
