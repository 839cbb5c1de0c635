"""Deterministic mini-batch SGD and leave-one-out family generation."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._random import stream
from .exceptions import ArtifactMissing, DatasetError, ShapeError, TrainingError
from .network import Dataset, Network, load_dataset_csv, save_dataset_csv

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 100
    learning_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")


def initial_parameters(arch: Sequence[int], seed: int):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases."""
    rng = stream(seed, "init")
    weights, biases = [], []
    for fan_in, fan_out in zip(arch[:-1], arch[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return weights, biases


def loss_and_gradients(weights, biases, X, y):
    """Mean softmax cross-entropy over the batch and its parameter gradients."""
    acts = [X]
    z = X
    last = len(weights) - 1
    for m, (w, b) in enumerate(zip(weights, biases)):
        z = z @ w.T + b
        if m < last:
            z = np.maximum(z, 0.0)
        acts.append(z)
    logits = acts[-1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    n = X.shape[0]
    loss = float(np.mean(logsum - shifted[np.arange(n), y]))

    delta = np.exp(shifted - logsum[:, None])
    delta[np.arange(n), y] -= 1.0
    delta /= n
    gw = [None] * len(weights)
    gb = [None] * len(weights)
    for m in range(last, -1, -1):
        gw[m] = delta.T @ acts[m]
        gb[m] = delta.sum(axis=0)
        if m > 0:
            delta = (delta @ weights[m]) * (acts[m] > 0)
    return loss, gw, gb


def _check_arch(dataset: Dataset, arch: Sequence[int]):
    arch = tuple(int(a) for a in arch)
    if len(arch) < 3 or min(arch) < 1:
        raise ShapeError(f"architecture {arch} needs input, >=1 hidden and output layer, all sizes >= 1")
    if arch[0] != dataset.d or arch[-1] != dataset.num_classes:
        raise ShapeError(f"architecture {arch} does not fit d={dataset.d}, classes={dataset.num_classes}")
    return arch


def _epoch_orders(n_total: int, config: TrainConfig):
    rng = stream(config.seed, "shuffle")
    return [rng.permutation(n_total) for _ in range(config.epochs)]


def _sgd(X, y, arch, config, orders, omit=None) -> Network:
    if X.shape[0] == 0:
        raise TrainingError("cannot train on an empty dataset")
    weights, biases = initial_parameters(arch, config.seed)
    lr = config.learning_rate
    for epoch, order in enumerate(orders):
        if omit is not None:
            order = order[order != omit]
            # re-index the points after the removed one
            order = order - (order > omit)
        for batch, start in enumerate(range(0, len(order), config.batch_size)):
            idx = order[start:start + config.batch_size]
            loss, gw, gb = loss_and_gradients(weights, biases, X[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {batch}", epoch=epoch, batch=batch)
            for m in range(len(weights)):
                weights[m] = weights[m] - lr * gw[m]
                biases[m] = biases[m] - lr * gb[m]
    return Network(tuple(weights), tuple(biases))


def train(dataset: Dataset, arch: Sequence[int], config: TrainConfig) -> Network:
    """Train a network; identical arguments give a bit-identical result."""
    arch = _check_arch(dataset, arch)
    if len(dataset) == 0:
        raise TrainingError("cannot train on an empty dataset")
    return _sgd(dataset.X, dataset.y, arch, config, _epoch_orders(len(dataset), config))


@dataclass(frozen=True, eq=False)
class LooFamily:
    """The network trained on D and one network per omitted point."""

    full: Network
    omitted: dict
    dataset: Dataset
    config: TrainConfig
    architecture: tuple = field(default=())

    def __post_init__(self):
        if not self.architecture:
            object.__setattr__(self, "architecture", self.full.architecture)
        if any(n.architecture != self.full.architecture for n in self.omitted.values()):
            raise ShapeError("family members have differing architectures")

    def __len__(self):
        return len(self.omitted)

    def members(self, indices):
        return [self.omitted[i] for i in indices]

    def networks(self):
        return [self.full] + [self.omitted[i] for i in sorted(self.omitted)]

    # persistence -----------------------------------------------------------
    def manifest(self) -> dict:
        return {
            "architecture": list(self.architecture),
            "config": asdict(self.config),
            "seed": self.config.seed,
            "num_classes": self.dataset.num_classes,
            "dataset_sha256": self.dataset.fingerprint(),
            "members": [f"omit_{i:06d}.json" for i in sorted(self.omitted)],
        }

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        self.full.save(d / "full.json")
        for i, net in sorted(self.omitted.items()):
            net.save(d / f"omit_{i:06d}.json")
        save_dataset_csv(self.dataset, d / "dataset.csv")
        (d / "manifest.json").write_text(json.dumps(self.manifest(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, directory) -> "LooFamily":
        d = Path(directory)
        if not (d / "manifest.json").exists():
            raise ArtifactMissing(d / "manifest.json", "train")
        man = json.loads((d / "manifest.json").read_text())
        dataset = load_dataset_csv(d / "dataset.csv", num_classes=man["num_classes"])
        if dataset.fingerprint() != man["dataset_sha256"]:
            raise DatasetError(f"{d}: dataset.csv does not match manifest hash")
        omitted = {int(name[5:11]): Network.load(d / name) for name in man["members"]}
        return cls(Network.load(d / "full.json"), omitted, dataset, TrainConfig(**man["config"]))


def train_loo_family(dataset: Dataset, arch: Sequence[int], config: TrainConfig, workers: int = 1) -> LooFamily:
    """Train ``N`` on D and ``N_{-i}`` on D without point i, for every i.

    Every member starts from the same initialization and visits the remaining
    points in the full dataset's per-epoch order with the omitted index removed.
    """
    arch = _check_arch(dataset, arch)
    n = len(dataset)
    if n < 2:
        raise TrainingError("leave-one-out family needs at least two points (an omitted model would see no data)")
    orders = _epoch_orders(n, config)
    X, y = dataset.X, dataset.y

    def member(i):
        keep = np.arange(n) != i
        return _sgd(X[keep], y[keep], arch, config, orders, omit=i)

    full = _sgd(X, y, arch, config, orders)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        nets = list(pool.map(member, range(n)))
    logger.info("trained leave-one-out family of %d networks", n + 1)
    return LooFamily(full, dict(enumerate(nets)), dataset, config, arch)
