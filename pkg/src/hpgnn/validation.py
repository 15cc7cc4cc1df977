"""Input checks shared by the estimators and the harness."""

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import DimensionError


def check_features(X, n=None):
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if n is not None and X.shape[0] != n:
        raise DimensionError(f"{X.shape[0]} feature rows for {n} nodes")
    return X


def check_labels(y, n):
    y = np.asarray(y)
    if y.shape != (n,):
        raise DimensionError(f"label vector of shape {y.shape}, expected ({n},)")
    return y


def check_mask(mask, n, name="mask"):
    """Boolean mask of length ``n`` from a boolean array or an index array."""
    m = np.asarray(mask)
    if m.dtype == bool:
        if m.shape != (n,):
            raise DimensionError(f"{name} of shape {m.shape}, expected ({n},)")
        return m
    out = np.zeros(n, dtype=bool)
    out[m.astype(np.int64)] = True
    return out


def check_operators(operators, n, count=None):
    ops = list(operators)
    if count is not None and len(ops) != count:
        raise DimensionError(f"{len(ops)} operators, expected {count}")
    for p, s in enumerate(ops, 1):
        if s.shape != (n, n):
            raise DimensionError(f"order-{p} operator has shape {s.shape}, expected {(n, n)}")
    return ops
