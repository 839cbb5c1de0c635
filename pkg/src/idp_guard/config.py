"""Run configuration shared by the CLI commands, stored as JSON."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

from .bab import BabConfig, ClusterConfig
from .milp import DEFAULT_TAU
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    dataset: Optional[str] = None
    architecture: tuple = (2, 16, 2)
    epochs: int = 50
    batch_size: int = 100
    learning_rate: float = 0.1
    classes: Optional[tuple] = None
    tau: float = DEFAULT_TAU
    milp_time_limit: float = 40 * 60.0
    total_time_limit: float = 8 * 3600.0
    workers: int = 4
    epsilon: float = 1.0
    backend: str = "highs"
    seed: int = 0
    output_dir: str = "."

    def __post_init__(self):
        object.__setattr__(self, "architecture", tuple(int(a) for a in self.architecture))
        if self.classes is not None:
            object.__setattr__(self, "classes", tuple(int(c) for c in self.classes))
        if len(self.architecture) < 3 or min(self.architecture) < 1:
            raise ConfigError(f"architecture needs input, >=1 hidden and output sizes, got {self.architecture}")
        for name in ("milp_time_limit", "total_time_limit"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.tau < 0:
            raise ConfigError("tau must be >= 0")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        try:
            self.train_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.epochs, self.batch_size, self.learning_rate, self.seed)

    def bab_config(self, deterministic: bool = True) -> BabConfig:
        return BabConfig(tau=self.tau, milp_time_limit=self.milp_time_limit,
                         total_time_limit=self.total_time_limit, workers=self.workers,
                         deterministic=deterministic, backend=self.backend,
                         cluster=ClusterConfig(seed=self.seed))

    def path(self, name) -> Path:
        return Path(self.output_dir) / name

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["architecture"] = list(self.architecture)
        doc["classes"] = None if self.classes is None else list(self.classes)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path, check_paths: bool = True) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file {path} not found") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        cfg = cls.from_dict(doc)
        if check_paths and cfg.dataset is not None and not Path(cfg.dataset).exists():
            raise ConfigError(f"dataset {cfg.dataset} does not exist")
        return cfg
