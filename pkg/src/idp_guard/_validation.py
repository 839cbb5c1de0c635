"""Input checks shared by the estimator and the CLI."""
import numpy as np
from sklearn.utils.validation import check_array, check_X_y


def check_unit_box(X, name="X"):
    if X.size and (X.min() < 0.0 or X.max() > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]^d; rescale features first")
    return X


def validate_training_data(X, y):
    X, y = check_X_y(X, y, dtype=np.float64)
    check_unit_box(X)
    return X, y


def validate_queries(X, n_features):
    X = check_array(X, dtype=np.float64)
    if X.shape[1] != n_features:
        raise ValueError(f"X has {X.shape[1]} features, but the model was fitted with {n_features}")
    return check_unit_box(X)
