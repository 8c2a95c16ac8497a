"""Input checks shared by the estimators."""

import numpy as np

from .exceptions import InvalidLabel
from .grammar import tokenize


def check_texts(X):
    """Normalise ``X`` to a list of token lists.

    Accepts raw strings (tokenized here) or pre-tokenized sequences of
    strings; a 2-D array of strings is read one row per sentence.
    """
    if isinstance(X, str):
        raise TypeError("expected a sequence of sentences, got a single string")
    if isinstance(X, np.ndarray) and X.ndim == 2 and X.shape[1] == 1:
        X = X[:, 0]
    out = []
    for item in X:
        if isinstance(item, str):
            out.append(tokenize(item))
        elif isinstance(item, (list, tuple, np.ndarray)) and all(isinstance(t, str) for t in item):
            out.append([t.lower() for t in item])
        else:
            raise TypeError(f"sentences must be strings or token lists, got {type(item).__name__}")
    return out


def check_labels(y, n_classes, n_samples=None):
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"labels must be 1-D, got shape {y.shape}")
    if n_samples is not None and len(y) != n_samples:
        raise ValueError(f"{n_samples} sentences but {len(y)} labels")
    if y.size and (not np.issubdtype(y.dtype, np.integer) or y.min() < 0 or y.max() >= n_classes):
        raise InvalidLabel(f"labels must be integers in 0..{n_classes - 1}")
    return y.astype(int)


def check_is_fitted(estimator, attr):
    from sklearn.exceptions import NotFittedError

    if not hasattr(estimator, attr):
        raise NotFittedError(f"{type(estimator).__name__} is not fitted yet; call fit first")
