"""Confidence bounds and label-only access with individual differential privacy."""
__version__ = "0.1.0"

from .access import (AccessGuard, exponential_mechanism, family_agreement, mechanism_probabilities,
                     naive_idp_query, naive_noise_query)
from .bab import BabConfig, BoundResult, ClusterConfig, compute_bound, compute_bounds, naive_bound, partition
from .config import ConfigError, RunConfig
from .estimator import IDPGuardClassifier
from .exceptions import (ArtifactMissing, DatasetError, EncodingError, IDPGuardError, InstanceTooLarge,
                         ShapeError, SolverError, TrainingError)
from .hyper import (IntervalNetwork, build_hyper, compute_difference_intervals, propagate_bounds)
from .milp import NO_LEAKING_INPUTS, SolveLimits, build_problem, encode, solve
from .network import Dataset, Network, confidence, forward, predict
from .oracle import exact_oracle
from .synthetic import generate_synthetic_2d
from .training import LooFamily, TrainConfig, train, train_loo_family

__all__ = [
    "AccessGuard", "ArtifactMissing", "BabConfig", "BoundResult", "ClusterConfig", "ConfigError", "Dataset", "DatasetError",
    "EncodingError", "IDPGuardClassifier", "IDPGuardError", "InstanceTooLarge", "IntervalNetwork", "LooFamily", "NO_LEAKING_INPUTS",
    "Network", "ShapeError", "SolveLimits", "SolverError", "TrainConfig", "TrainingError", "build_hyper",
    "build_problem", "compute_bound", "compute_bounds", "compute_difference_intervals", "confidence",
    "encode", "exact_oracle", "exponential_mechanism", "family_agreement", "forward", "generate_synthetic_2d", "mechanism_probabilities",
    "naive_bound", "naive_idp_query", "naive_noise_query", "partition", "predict", "propagate_bounds", "RunConfig", "solve",
    "train", "train_loo_family",
]
