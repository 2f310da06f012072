"""Input validation helpers shared by the estimators and the functional API."""

import numpy as np

from .exceptions import DataError


def check_covariates(X, name="X"):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DataError(f"{name} must be 2-dimensional, got shape {X.shape}")
    if X.shape[0] < 2 or X.shape[1] < 1:
        raise DataError(f"{name} needs at least 2 rows and 1 column, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DataError(f"{name} contains missing or non-finite values")
    return X


def check_treatment(w, n=None):
    """Return ``w`` as an int array of 0/1 values, rejecting any other encoding."""
    arr = np.asarray(w)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    if n is not None and arr.shape[0] != n:
        raise DataError(f"treatment has {arr.shape[0]} entries, expected {n}")
    if arr.dtype == bool:
        raise DataError("treatment must be encoded as integers 0/1, not booleans")
    try:
        values = arr.astype(float)
    except (TypeError, ValueError):
        raise DataError("treatment must be numeric 0/1") from None
    bad = ~np.isin(values, (0.0, 1.0))
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise DataError(f"non-binary treatment at row {k}: {arr[k]!r}")
    return values.astype(np.int64)


def check_outcome(y, n=None):
    y = np.asarray(y, dtype=float).reshape(-1)
    if n is not None and y.shape[0] != n:
        raise DataError(f"outcome has {y.shape[0]} entries, expected {n}")
    if not np.all(np.isfinite(y)):
        raise DataError("outcome contains missing or non-finite values")
    return y


def check_both_arms(w):
    n_treated = int(np.sum(w == 1))
    if n_treated == 0 or n_treated == len(w):
        arm = "treated" if n_treated == 0 else "control"
        raise DataError(f"the {arm} arm is empty; both treatment arms are required")


def check_estimand(estimand):
    estimand = str(estimand).lower()
    if estimand not in ("ace", "act"):
        raise DataError(f"estimand must be 'ace' or 'act', got {estimand!r}")
    return estimand
