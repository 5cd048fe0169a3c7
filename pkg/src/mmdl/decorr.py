"""Decorrelation layer: an orthonormal projection fitted by an eigen-problem.

The projection keeps the leading eigenvectors of the mean outer product of
unit-normalized representations.  Among all orthonormal n×q bases it
maximizes the summed squared cosine between each representation and its
reconstruction from the projected coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import tensor as T
from .errors import ConfigError, ContractError, DegenerateInputError, ShapeError

SYMMETRY_TOL = 1e-10
OFFDIAG_TOL = 1e-12
MAX_SWEEPS = 100


@dataclass(frozen=True)
class DecorrLayer:
    projection: np.ndarray  # n x q, orthonormal columns
    eigenvalues: np.ndarray  # q, descending

    @property
    def n(self):
        return self.projection.shape[0]

    @property
    def q(self):
        return self.projection.shape[1]

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n), np.full(n, 1.0 / n))


def normalized_second_moment(y):
    """Mean of ``u u^T`` over the unit-normalized rows ``u`` of ``y``."""
    y = T.as_matrix(y, "y")
    if y.shape[0] < 1:
        raise ContractError("need at least one row")
    norms = np.linalg.norm(y, axis=1)
    bad = np.flatnonzero(norms < T.NORM_EPS)
    if bad.size:
        raise DegenerateInputError(f"row {bad[0]} is (near) zero", row=int(bad[0]))
    u = y / norms[:, None]
    c = u.T @ u / y.shape[0]
    return 0.5 * (c + c.T)


def _rotate(a, v, p, q):
    apq = a[p, q]
    theta = (a[q, q] - a[p, p]) / (2.0 * apq)
    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c
    ap, aq = a[:, p].copy(), a[:, q]
    a[:, p] = c * ap - s * aq
    a[:, q] = s * ap + c * aq
    ap, aq = a[p, :].copy(), a[q, :]
    a[p, :] = c * ap - s * aq
    a[q, :] = s * ap + c * aq
    a[p, q] = a[q, p] = 0.0
    vp, vq = v[:, p].copy(), v[:, q]
    v[:, p] = c * vp - s * vq
    v[:, q] = s * vp + c * vq


def jacobi_eigh(c):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues descending (ties
    keep their original diagonal order) and eigenvectors as columns, each
    signed so that its largest-magnitude entry is non-negative.
    """
    c = T.as_matrix(c, "c")
    n = c.shape[0]
    if c.shape != (n, n):
        raise ContractError(f"matrix must be square, got {c.shape}")
    if n and np.max(np.abs(c - c.T)) > SYMMETRY_TOL:
        raise ContractError("matrix is not symmetric within 1e-10")
    a = 0.5 * (c + c.T)
    v = np.eye(n)
    upper = np.triu_indices(n, k=1)
    for _ in range(MAX_SWEEPS):
        if n < 2 or np.max(np.abs(a[upper])) < OFFDIAG_TOL:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] != 0.0:
                    _rotate(a, v, p, q)

    vals = np.diag(a).copy()
    order = np.argsort(-vals, kind="stable")
    vals, v = vals[order], v[:, order]
    lead = np.abs(v).argmax(axis=0)
    signs = np.where(v[lead, np.arange(n)] < 0.0, -1.0, 1.0)
    return vals, v * signs


def fit_decorrelation(y, q):
    """Fit the top-``q`` eigenbasis of the normalized second moment of ``y``."""
    y = T.as_matrix(y, "y")
    n = y.shape[1]
    if not 1 <= q <= n:
        raise ConfigError(f"q must satisfy 1 <= q <= n={n}, got {q}")
    vals, vecs = jacobi_eigh(normalized_second_moment(y))
    return DecorrLayer(vecs[:, :q].copy(), vals[:q].copy())


def project(layer, y):
    """``z = y W``; differentiable in ``y`` when ``y`` is a Node, W held fixed."""
    if isinstance(y, T.Node):
        if y.shape[1] != layer.n:
            raise ShapeError(f"width {y.shape[1]} does not match projection rows {layer.n}")
        return T.matmul(y, T.constant(layer.projection))
    y = T.as_matrix(y, "y")
    if y.shape[1] != layer.n:
        raise ShapeError(f"width {y.shape[1]} does not match projection rows {layer.n}")
    return y @ layer.projection


def objective(projection, c):
    """``tr(W^T C W)``, the quantity the fitted basis maximizes."""
    return float(np.trace(projection.T @ c @ projection))


class Decorrelation(TransformerMixin, BaseEstimator):
    """Scikit-learn transformer wrapper around :func:`fit_decorrelation`.

    Parameters
    ----------
    n_components : int or None
        Output dimension q; ``None`` keeps all n dimensions (a pure rotation).
    """

    def __init__(self, n_components=None):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        q = X.shape[1] if self.n_components is None else self.n_components
        self.layer_ = fit_decorrelation(X, q)
        self.components_ = self.layer_.projection.T
        self.eigenvalues_ = self.layer_.eigenvalues
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "layer_")
        X = check_array(X, dtype=np.float64)
        return project(self.layer_, X)
