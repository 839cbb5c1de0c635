"""Synthetic 2-D data and decision-boundary grid export."""
from __future__ import annotations

import csv

import numpy as np

from ._random import stream
from .exceptions import ShapeError
from .milp import bound_key
from .network import Dataset, Network, forward, predicted_confidence


def boundary(x1):
    """The curve separating the two synthetic classes."""
    return 0.5 + 0.2 * np.sin(2.0 * np.pi * x1)


def generate_synthetic_2d(n: int, seed: int = 0) -> Dataset:
    """Balanced two-class data in ``[0,1]^2``: class 1 lies above a sine curve."""
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = stream(seed, "data")
    want = [(n + 1) // 2, n // 2]
    pts = [[], []]
    while len(pts[0]) < want[0] or len(pts[1]) < want[1]:
        batch = rng.uniform(0.0, 1.0, size=(4 * n, 2))
        labels = (batch[:, 1] > boundary(batch[:, 0])).astype(int)
        for p, l in zip(batch, labels):
            if len(pts[l]) < want[l]:
                pts[l].append(p)
    X = np.array(pts[0] + pts[1])
    y = np.array([0] * want[0] + [1] * want[1])
    order = rng.permutation(n)
    return Dataset(X[order], y[order], 2)


def grid_points(resolution: int) -> np.ndarray:
    """``resolution**2`` points on a regular grid over ``[0,1]^2`` (x1 major)."""
    ticks = np.linspace(0.0, 1.0, resolution)
    g1, g2 = np.meshgrid(ticks, ticks, indexing="ij")
    return np.column_stack([g1.ravel(), g2.ravel()])


def boundary_grid(net: Network, bounds: dict, resolution: int, members=None):
    """Rows ``(x1, x2, confidence, predicted, above_bound, all_agree)``.

    ``bounds`` maps class to bound value (``NO_LEAKING_INPUTS`` allowed).
    ``members`` are the other networks checked for agreement; without them the
    agreement column is left empty.
    """
    if net.architecture[0] != 2:
        raise ShapeError(f"grid export needs a 2-D input, network has d={net.architecture[0]}")
    X = grid_points(resolution)
    pred, conf = predicted_confidence(net, X)
    above = np.array([cf > bound_key(bounds[int(p)]) for p, cf in zip(pred, conf)])
    agree = None
    if members is not None:
        agree = np.ones(len(X), dtype=bool)
        for m in members:
            agree &= np.argmax(forward(m, X), axis=1) == pred
    return X, conf, pred, above, agree


def export_boundary_grid(path, net: Network, bounds: dict, resolution: int, members=None) -> int:
    X, conf, pred, above, agree = boundary_grid(net, bounds, resolution, members)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x1", "x2", "confidence", "predicted", "above_bound", "all_agree"])
        for i in range(len(X)):
            w.writerow([repr(float(X[i, 0])), repr(float(X[i, 1])), repr(float(conf[i])), int(pred[i]),
                        int(above[i]), "" if agree is None else int(agree[i])])
    return len(X)
