"""scikit-learn compatible front end.

``IDPGuardClassifier.fit`` trains the network and its leave-one-out family,
computes a bound for every class, and wraps the network in an
:class:`~idp_guard.access.AccessGuard`; ``predict`` then answers through the
guard.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import validate_queries, validate_training_data
from .access import DEFAULT_MEMO_CAPACITY, AccessGuard
from .bab import BabConfig, ClusterConfig, compute_bounds
from .milp import DEFAULT_TAU, bound_key
from .network import Dataset, forward, predicted_confidence
from .training import TrainConfig, train_loo_family


class IDPGuardClassifier(ClassifierMixin, BaseEstimator):
    """ReLU classifier whose label-only answers are epsilon-iDP for its training set.

    Parameters
    ----------
    hidden_layer_sizes : tuple of int
        Widths of the hidden layers.
    epochs, batch_size, learning_rate : SGD settings.
    epsilon : float
        Privacy budget of the exponential mechanism.
    tau : float
        Difference-interval width under which hyper-network neurons are relaxed.
    milp_time_limit, total_time_limit : float or None
        Seconds per MILP and per class for the bound search.
    random_state : int
        Seed for initialization, shuffling, clustering and the mechanism.
    """

    def __init__(self, hidden_layer_sizes=(16,), epochs=50, batch_size=100, learning_rate=0.1,
                 epsilon=1.0, tau=DEFAULT_TAU, milp_time_limit=2400.0, total_time_limit=28800.0,
                 workers=4, memo_capacity=DEFAULT_MEMO_CAPACITY, backend="highs", random_state=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.epsilon = epsilon
        self.tau = tau
        self.milp_time_limit = milp_time_limit
        self.total_time_limit = total_time_limit
        self.workers = workers
        self.memo_capacity = memo_capacity
        self.backend = backend
        self.random_state = random_state

    def fit(self, X, y):
        X, y = validate_training_data(X, y)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need samples of at least two classes")
        self.n_features_in_ = X.shape[1]
        dataset = Dataset(X, y_idx, len(self.classes_))
        arch = (X.shape[1], *self.hidden_layer_sizes, len(self.classes_))
        train_cfg = TrainConfig(self.epochs, self.batch_size, self.learning_rate, self.random_state)
        self.family_ = train_loo_family(dataset, arch, train_cfg, workers=self.workers)
        bab_cfg = BabConfig(tau=self.tau, milp_time_limit=self.milp_time_limit,
                            total_time_limit=self.total_time_limit, workers=self.workers,
                            backend=self.backend, cluster=ClusterConfig(seed=self.random_state))
        self.bound_results_ = compute_bounds(self.family_, None, bab_cfg)
        self.bounds_ = {c: r.beta for c, r in self.bound_results_.items()}
        self.network_ = self.family_.full
        self.guard_ = AccessGuard(self.network_, self.bounds_, self.epsilon, self.random_state, self.memo_capacity)
        return self

    def predict(self, X):
        """Guarded labels: deterministic above the bound, sampled otherwise."""
        check_is_fitted(self, "guard_")
        X = validate_queries(X, self.n_features_in_)
        labels, _ = self.guard_.query_batch(X)
        return self.classes_[labels]

    def predict_unguarded(self, X):
        check_is_fitted(self, "network_")
        X = validate_queries(X, self.n_features_in_)
        return self.classes_[np.argmax(forward(self.network_, X), axis=1)]

    def decision_function(self, X):
        check_is_fitted(self, "network_")
        return forward(self.network_, validate_queries(X, self.n_features_in_))

    def noise_mask(self, X):
        """True where a query would go through the exponential mechanism."""
        check_is_fitted(self, "network_")
        pred, conf = predicted_confidence(self.network_, validate_queries(X, self.n_features_in_))
        return np.array([cf <= bound_key(self.bounds_[int(p)]) for p, cf in zip(pred, conf)])
