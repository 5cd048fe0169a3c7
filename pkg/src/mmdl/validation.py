"""Input validation helpers shared by the estimator API and the CLI."""

import numpy as np
from sklearn.utils.validation import check_array, column_or_1d

from .errors import ConfigError
from .synthdata import DOMAIN_CODES, DOMAIN_NAMES


def check_features(X, n_features=None):
    X = check_array(X, dtype=np.float64, ensure_all_finite=True)
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"X has {X.shape[1]} features, expected {n_features}")
    return X


def check_identities(y, n_samples):
    y = column_or_1d(y)
    if y.shape[0] != n_samples:
        raise ValueError(f"y has {y.shape[0]} entries for {n_samples} samples")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise ValueError("identity labels must be integers")
        y = y.astype(np.int64)
    if y.size and y.min() < 0:
        raise ValueError("identity labels must be non-negative")
    return y.astype(np.int64)


def check_domains(domains, n_samples):
    """Accept domain tags as strings (``"NIR"``/``"VIS"``) or integer codes."""
    if domains is None:
        raise ValueError("domains are required: one 'NIR'/'VIS' tag per sample")
    d = column_or_1d(np.asarray(domains))
    if d.shape[0] != n_samples:
        raise ValueError(f"domains has {d.shape[0]} entries for {n_samples} samples")
    if d.dtype.kind in "US":
        unknown = sorted(set(d.tolist()) - set(DOMAIN_CODES))
        if unknown:
            raise ValueError(f"unknown domain tags {unknown}")
        return np.array([DOMAIN_CODES[t] for t in d.tolist()], dtype=np.int64)
    d = d.astype(np.int64)
    if not np.isin(d, list(DOMAIN_NAMES)).all():
        raise ValueError(f"domain codes must be in {sorted(DOMAIN_NAMES)}")
    return d


def check_positive_int(value, name, minimum=1):
    if int(value) != value or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value}")
    return int(value)
