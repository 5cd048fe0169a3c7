"""Cosine similarity, hard quadruplet mining, and the margin losses.

All losses take a batch of representations ``z`` (a Node, b×q) and return a
1×1 Node so they compose with :func:`mmdl.tensor.backward`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import tensor as T
from .errors import ConfigError, DegenerateInputError, LabelError, NumericError, ShapeError
from .synthdata import NIR, VIS

log = logging.getLogger(__name__)


class QuadrupletTuple(NamedTuple):
    anchor_nir: int
    anchor_vis: int
    neg_nir: int
    neg_vis: int


@dataclass
class HamlHead:
    """Class-weight matrix (q×c) and the angular-margin settings per domain."""

    class_weights: np.ndarray
    scale: float = 16.0
    margin_nir: float = 0.9
    margin_vis: float = 0.9
    weight_nir: float = 0.6
    weight_vis: float = 0.4

    def __post_init__(self):
        self.class_weights = T.as_matrix(self.class_weights, "class_weights")
        if abs(self.weight_nir + self.weight_vis - 1.0) > 1e-12:
            raise ConfigError(
                f"domain weights must sum to 1, got {self.weight_nir} + {self.weight_vis}"
            )
        if min(self.weight_nir, self.weight_vis) < 0:
            raise ConfigError("domain weights must be non-negative")
        if self.scale <= 0:
            raise ConfigError(f"scale must be positive, got {self.scale}")
        for m in (self.margin_nir, self.margin_vis):
            if not 0.0 <= m <= np.pi / 2:
                raise ConfigError(f"margin {m} outside [0, pi/2]")

    @property
    def n_classes(self):
        return self.class_weights.shape[1]

    @classmethod
    def initialize(cls, dim, n_classes, seed, **settings):
        rng = np.random.default_rng(seed)
        w = rng.normal(size=(dim, n_classes))
        return cls(normalize_columns(w), **settings)

    def replace_weights(self, class_weights):
        return HamlHead(
            normalize_columns(class_weights),
            self.scale,
            self.margin_nir,
            self.margin_vis,
            self.weight_nir,
            self.weight_vis,
        )


@dataclass(frozen=True)
class MmlConfig:
    alpha1: float = 0.2
    alpha2: float = 0.2
    lambda1: float = 10.0
    lambda2: float = 1.0

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "lambda1", "lambda2"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")


def normalize_columns(w):
    w = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise NumericError("non-finite class weights")
    # rescale by the column maximum first so huge entries cannot overflow the norm
    peak = np.abs(w).max(axis=0, keepdims=True)
    w = w / np.where(peak > 0, peak, 1.0)
    norms = np.linalg.norm(w, axis=0, keepdims=True)
    if np.any(norms < T.NORM_EPS):
        raise DegenerateInputError("class-weight column with zero norm")
    return w / norms


def cosine_similarity(u, v):
    """Differentiable ``u.v / (|u||v|)`` for two 1×q nodes."""
    if u.shape != v.shape or u.shape[0] != 1:
        raise ShapeError(f"cosine_similarity expects two 1xq rows, got {u.shape}, {v.shape}")
    return T.total_sum(T.mul(T.row_l2_normalize(u), T.row_l2_normalize(v)))


def _unit_rows(z):
    norms = np.linalg.norm(z, axis=1)
    bad = np.flatnonzero(norms < T.NORM_EPS)
    if bad.size:
        raise DegenerateInputError(f"row {bad[0]} is (near) zero", row=int(bad[0]))
    return z / norms[:, None]


def mine_quadruplets(z, identities, domains, return_skipped=False):
    """Hardest-negative quadruplets for every same-identity (NIR, VIS) pair.

    For an anchor pair (j_nir, j_vis) the NIR negative is the other-identity
    NIR sample most similar to the VIS anchor, and the VIS negative is the
    other-identity VIS sample most similar to the NIR anchor.  Ties go to
    the lowest batch index.  Pairs lacking a negative in either domain are
    skipped; with ``return_skipped`` their count is returned too.
    """
    z = np.asarray(z, dtype=np.float64)
    ids = np.asarray(identities).reshape(-1)
    doms = np.asarray(domains).reshape(-1)
    if not len(ids) == len(doms) == z.shape[0]:
        raise ShapeError("identities/domains length must equal the batch size")
    u = _unit_rows(z)
    sims = u @ u.T
    nir = np.flatnonzero(doms == NIR)
    vis = np.flatnonzero(doms == VIS)
    tuples, skipped = [], 0
    for a_n in nir:
        for a_v in vis[ids[vis] == ids[a_n]]:
            cand_n = nir[ids[nir] != ids[a_n]]
            cand_v = vis[ids[vis] != ids[a_n]]
            if cand_n.size == 0 or cand_v.size == 0:
                skipped += 1
                continue
            # argmax returns the first maximum, and candidates are ascending
            neg_n = cand_n[np.argmax(sims[a_v, cand_n])]
            neg_v = cand_v[np.argmax(sims[a_n, cand_v])]
            tuples.append(QuadrupletTuple(int(a_n), int(a_v), int(neg_n), int(neg_v)))
    if skipped:
        log.debug("quadruplet mining skipped %d anchor pairs without negatives", skipped)
    return (tuples, skipped) if return_skipped else tuples


def qml(z, tuples, alpha1, alpha2):
    """Quadruplet margin loss averaged over tuples.

    Four hinges per tuple: each anchor's positive cosine must beat the
    cross-domain negative by ``alpha1`` and the within-domain negative of
    the other anchor by ``alpha2``.
    """
    if not tuples:
        return T.constant([[0.0]])
    idx = np.asarray(tuples, dtype=np.intp)
    u = T.row_l2_normalize(z)
    a_n, a_v = T.take_rows(u, idx[:, 0]), T.take_rows(u, idx[:, 1])
    n_n, n_v = T.take_rows(u, idx[:, 2]), T.take_rows(u, idx[:, 3])

    def cos(a, b):
        return T.row_sum(T.mul(a, b))

    pos = cos(a_n, a_v)
    hinges = [
        T.relu(T.add_scalar(T.sub(cos(a_n, n_v), pos), alpha1)),
        T.relu(T.add_scalar(T.sub(cos(a_v, n_v), pos), alpha2)),
        T.relu(T.add_scalar(T.sub(cos(a_v, n_n), pos), alpha1)),
        T.relu(T.add_scalar(T.sub(cos(a_n, n_n), pos), alpha2)),
    ]
    total = hinges[0]
    for h in hinges[1:]:
        total = T.add(total, h)
    return T.scale(T.total_sum(total), 1.0 / len(tuples))


def domain_sample_weights(domains, weight_nir, weight_vis):
    """Per-sample weights giving each domain's mean loss its domain weight."""
    doms = np.asarray(domains).reshape(-1)
    w = np.zeros(doms.size)
    for dom, lam in ((NIR, weight_nir), (VIS, weight_vis)):
        mask = doms == dom
        if mask.any():
            w[mask] = lam / mask.sum()
    return w


def haml(z, identities, domains, head, class_weights=None):
    """Heterogeneous angular margin loss.

    ``class_weights`` may be a Node standing for ``head.class_weights`` so
    gradients flow into it; its columns are normalized inside the graph.
    """
    labels = np.asarray(identities, dtype=np.intp).reshape(-1)
    doms = np.asarray(domains).reshape(-1)
    if labels.size != z.shape[0] or doms.size != z.shape[0]:
        raise ShapeError("identities/domains length must equal the batch size")
    if class_weights is None:
        class_weights = T.constant(head.class_weights)
    c = class_weights.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise LabelError(f"labels must lie in [0, {c}), got range [{labels.min()}, {labels.max()}]")
    if class_weights.shape[0] != z.shape[1]:
        raise ShapeError(f"class weights {class_weights.shape} do not match width {z.shape[1]}")

    w_unit = T.transpose(T.row_l2_normalize(T.transpose(class_weights)))
    cosines = T.matmul(T.row_l2_normalize(z), w_unit)
    margins = np.where(doms == NIR, head.margin_nir, head.margin_vis)
    logits = T.scale(T.target_angular_margin(cosines, labels, margins), head.scale)
    per_sample = T.softmax_cross_entropy(logits, labels)
    weights = domain_sample_weights(doms, head.weight_nir, head.weight_vis)
    return T.total_sum(T.mul(per_sample, T.constant(weights[:, None])))


def mml(qml_value, haml_value, cfg):
    return T.add(T.scale(qml_value, cfg.lambda1), T.scale(haml_value, cfg.lambda2))
