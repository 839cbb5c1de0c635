"""Datasets and fully-connected ReLU classifiers.

A :class:`Network` stores one weight matrix ``(k_m, k_{m-1})`` and one bias
vector per layer. Hidden layers apply ReLU; the output layer is affine only,
so ``forward`` returns raw class scores.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import DatasetError, ShapeError


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Labeled points in ``[0,1]^d``. Row order identifies each point."""

    X: np.ndarray
    y: np.ndarray
    num_classes: int

    def __post_init__(self):
        X = _frozen(self.X)
        y = _frozen(self.y, dtype=np.int64)
        if X.ndim != 2:
            raise DatasetError(f"features must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DatasetError(f"expected {X.shape[0]} labels, got shape {y.shape}")
        if self.num_classes < 2:
            raise DatasetError("need at least two classes")
        if X.size and (not np.all(np.isfinite(X)) or X.min() < 0.0 or X.max() > 1.0):
            raise DatasetError("feature values must lie in [0, 1]")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise DatasetError(f"labels must be in [0, {self.num_classes})")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.X.shape[0]

    def without(self, index: int) -> "Dataset":
        keep = np.arange(len(self)) != index
        return Dataset(self.X[keep], self.y[keep], self.num_classes)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.X).tobytes())
        h.update(np.ascontiguousarray(self.y).tobytes())
        h.update(str(self.num_classes).encode())
        return h.hexdigest()


def load_dataset_csv(path, num_classes: int | None = None) -> Dataset:
    """Read a CSV whose last column is ``label`` and the rest are features."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[-1].strip() != "label":
            raise DatasetError(f"{path}: last header column must be 'label'")
        rows = [r for r in reader if r]
    d = len(header) - 1
    if d < 1:
        raise DatasetError(f"{path}: no feature columns")
    try:
        X = np.array([[float(v) for v in r[:d]] for r in rows], dtype=np.float64).reshape(-1, d)
        y = np.array([int(r[d]) for r in rows], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise DatasetError(f"{path}: malformed row ({exc})") from exc
    if num_classes is None:
        num_classes = max(2, int(y.max()) + 1 if y.size else 2)
    return Dataset(X, y, num_classes)


def save_dataset_csv(dataset: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(dataset.d)] + ["label"])
        for xi, yi in zip(dataset.X, dataset.y):
            w.writerow([repr(float(v)) for v in xi] + [int(yi)])


def load_inputs_csv(path) -> np.ndarray:
    """Read query inputs; a trailing ``label`` column is ignored if present.

    The header row is optional: a first row of numbers is kept as data.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise DatasetError(f"{path}: no rows")
    header = rows[0]
    try:
        [float(v) for v in header]
    except ValueError:
        rows = rows[1:]
        d = len(header) - 1 if header[-1].strip() == "label" else len(header)
    else:
        d = len(header)
    try:
        return np.array([[float(v) for v in r[:d]] for r in rows], dtype=np.float64).reshape(-1, d)
    except (ValueError, IndexError) as exc:
        raise DatasetError(f"{path}: malformed row ({exc})") from exc


@dataclass(frozen=True, eq=False)
class Network:
    """Immutable fully-connected ReLU classifier."""

    weights: tuple
    biases: tuple

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or len(self.weights) < 2:
            raise ShapeError("a network needs at least one hidden layer and matching weights/biases")
        ws = tuple(_frozen(w) for w in self.weights)
        bs = tuple(_frozen(b) for b in self.biases)
        for m, (w, b) in enumerate(zip(ws, bs), start=1):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeError(f"layer {m}: weight {w.shape} and bias {b.shape} disagree",
                                 layer=m, expected=(w.shape[0],) if w.ndim == 2 else None, got=b.shape)
            if m > 1 and w.shape[1] != ws[m - 2].shape[0]:
                raise ShapeError(f"layer {m}: expects {w.shape[1]} inputs, previous layer has {ws[m - 2].shape[0]}",
                                 layer=m, expected=ws[m - 2].shape[0], got=w.shape[1])
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ShapeError(f"layer {m}: non-finite parameters", layer=m)
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @property
    def architecture(self) -> tuple:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def num_classes(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def num_hidden_neurons(self) -> int:
        return sum(w.shape[0] for w in self.weights[:-1])

    def flat_parameters(self) -> np.ndarray:
        return np.concatenate([p.ravel() for w, b in zip(self.weights, self.biases) for p in (w, b)])

    def __eq__(self, other):
        if not isinstance(other, Network) or self.architecture != other.architecture:
            return NotImplemented if not isinstance(other, Network) else False
        return all(np.array_equal(a, b) for a, b in zip(self.weights + self.biases, other.weights + other.biases))

    __hash__ = None

    # persistence -----------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "architecture": list(self.architecture),
            "layers": [{"weights": w.tolist(), "bias": b.tolist()} for w, b in zip(self.weights, self.biases)],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Network":
        layers = doc["layers"]
        net = cls(tuple(np.array(l["weights"], dtype=np.float64) for l in layers),
                  tuple(np.array(l["bias"], dtype=np.float64) for l in layers))
        if "architecture" in doc and list(doc["architecture"]) != list(net.architecture):
            raise ShapeError(f"declared architecture {doc['architecture']} != layers {list(net.architecture)}")
        return net

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "Network":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _check_input(net: Network, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    d = net.architecture[0]
    if x.shape[-1:] != (d,) or x.ndim > 2:
        raise ShapeError(f"layer 0 (input): expected size {d}, got shape {x.shape}",
                         layer=0, expected=d, got=x.shape)
    return x


def forward(net: Network, x) -> np.ndarray:
    """Output scores for one input ``(d,)`` or a batch ``(n, d)``."""
    z = _check_input(net, x)
    last = net.num_layers - 1
    for m, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = z @ w.T + b
        if m < last:
            z = np.maximum(z, 0.0)
    return z


def scores_confidence(scores, c) -> np.ndarray:
    """``scores[c] - max_{c' != c} scores[c']`` along the last axis."""
    scores = np.asarray(scores, dtype=np.float64)
    others = np.delete(scores, c, axis=-1)
    return scores[..., c] - others.max(axis=-1)


def confidence(net: Network, x, c: int):
    if not 0 <= c < net.num_classes:
        raise ValueError(f"class {c} out of range [0, {net.num_classes})")
    out = scores_confidence(forward(net, x), c)
    return float(out) if np.ndim(out) == 0 else out


def predict(net: Network, x):
    """Argmax class; ties go to the lowest index (``np.argmax`` semantics)."""
    out = np.argmax(forward(net, x), axis=-1)
    return int(out) if np.ndim(out) == 0 else out


def predicted_confidence(net: Network, X):
    """Predicted class and its confidence for a batch ``(n, d)``."""
    s = forward(net, np.atleast_2d(X))
    c = np.argmax(s, axis=1)
    top = s[np.arange(len(s)), c]
    masked = s.copy()
    masked[np.arange(len(s)), c] = -np.inf
    return c, top - masked.max(axis=1)

