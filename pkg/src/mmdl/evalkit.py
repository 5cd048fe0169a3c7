"""Probe-vs-gallery matching: similarity matrices, rank-k, VR@FAR, fold aggregation."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .decorr import project
from .encoder import encode_array
from .errors import ContractError, DegenerateInputError, ProtocolError, RangeError, ShapeError
from .synthdata import NIR, VIS
from .tensor import NORM_EPS


@dataclass(frozen=True)
class EvalProtocol:
    ranks: tuple = (1, 5, 10)
    fars: tuple = (0.1, 0.01, 0.001)


@dataclass
class EvalReport:
    rank1: float
    rank_k: list  # [(k, fraction)]
    vr_at_far: list  # [(far, vr)]
    genuine_count: int
    impostor_count: int
    roc: list = field(default_factory=list, repr=False)  # [(threshold, far, vr)]

    def __post_init__(self):
        fracs = [self.rank1] + [a for _, a in self.rank_k] + [v for _, v in self.vr_at_far]
        if any(not 0.0 <= f <= 1.0 for f in fracs):
            raise ContractError("report fractions must lie in [0, 1]")
        accs = [a for _, a in sorted(self.rank_k)]
        if any(b < a for a, b in zip(accs, accs[1:])):
            raise ContractError("rank-k accuracy must be non-decreasing in k")

    def vr(self, far):
        for f, v in self.vr_at_far:
            if np.isclose(f, far):
                return v
        raise KeyError(far)

    def to_dict(self):
        return {
            "rank1": self.rank1,
            "rank_k": [[int(k), float(a)] for k, a in self.rank_k],
            "vr_at_far": [[float(f), float(v)] for f, v in self.vr_at_far],
            "genuine_count": int(self.genuine_count),
            "impostor_count": int(self.impostor_count),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            rank1=float(d["rank1"]),
            rank_k=[(int(k), float(a)) for k, a in d["rank_k"]],
            vr_at_far=[(float(f), float(v)) for f, v in d["vr_at_far"]],
            genuine_count=int(d["genuine_count"]),
            impostor_count=int(d["impostor_count"]),
        )

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_roc_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["threshold", "far", "vr"])
            for t, f, v in self.roc:
                writer.writerow([repr(float(t)), repr(float(f)), repr(float(v))])


def _unit_rows(x, name):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {x.shape}")
    norms = np.linalg.norm(x, axis=1)
    bad = np.flatnonzero(norms < NORM_EPS)
    if bad.size:
        raise DegenerateInputError(f"{name} row {bad[0]} is (near) zero", row=int(bad[0]))
    return x / norms[:, None]


def similarity_matrix(probe, gallery):
    """Cosine similarity of every probe row against every gallery row."""
    p = _unit_rows(probe, "probe")
    g = _unit_rows(gallery, "gallery")
    if p.shape[1] != g.shape[1]:
        raise ShapeError(f"probe width {p.shape[1]} != gallery width {g.shape[1]}")
    return p @ g.T


def rank_k_accuracy(s, probe_labels, gallery_labels, k):
    s = np.asarray(s, dtype=np.float64)
    probe_labels = np.asarray(probe_labels).reshape(-1)
    gallery_labels = np.asarray(gallery_labels).reshape(-1)
    if s.shape != (probe_labels.size, gallery_labels.size):
        raise ShapeError(
            f"score matrix {s.shape} does not match {probe_labels.size} probe / "
            f"{gallery_labels.size} gallery labels"
        )
    if not 1 <= k <= s.shape[1]:
        raise RangeError(f"k={k} outside [1, {s.shape[1]}]")
    # stable sort on the negated scores keeps lower gallery indices first on ties
    top = np.argsort(-s, axis=1, kind="stable")[:, :k]
    hits = (gallery_labels[top] == probe_labels[:, None]).any(axis=1)
    return float(hits.mean())


def vr_at_far(genuine, impostor, far):
    """Verification rate at the smallest impostor-score threshold meeting ``far``.

    The threshold is the smallest impostor score ``t`` with
    ``#(impostor >= t) / #impostor <= far``; if none qualifies (e.g.
    ``far == 0``) it is the next float above the largest impostor score.
    Returns ``(vr, threshold)``.
    """
    gen = np.sort(np.asarray(genuine, dtype=np.float64).reshape(-1))
    imp = np.sort(np.asarray(impostor, dtype=np.float64).reshape(-1))
    if gen.size == 0 or imp.size == 0:
        raise ContractError("genuine and impostor score lists must be non-empty")
    if not 0.0 <= far <= 1.0:
        raise ContractError(f"far must lie in [0, 1], got {far}")
    # accepted impostors at threshold imp[i] = count of scores >= imp[i]
    accepted = imp.size - np.searchsorted(imp, imp, side="left")
    ok = accepted / imp.size <= far
    if ok.any():
        threshold = imp[np.argmax(ok)]
    else:
        threshold = np.nextafter(imp[-1], np.inf)
    vr = (gen.size - np.searchsorted(gen, threshold, side="left")) / gen.size
    return float(vr), float(threshold)


def roc_points(genuine, impostor):
    """``(threshold, far, vr)`` at every distinct score, thresholds descending."""
    gen = np.sort(np.asarray(genuine, dtype=np.float64).reshape(-1))
    imp = np.sort(np.asarray(impostor, dtype=np.float64).reshape(-1))
    thresholds = np.unique(np.concatenate([gen, imp]))[::-1]
    far = (imp.size - np.searchsorted(imp, thresholds, side="left")) / imp.size
    vr = (gen.size - np.searchsorted(gen, thresholds, side="left")) / gen.size
    return list(zip(thresholds.tolist(), far.tolist(), vr.tolist()))


def genuine_impostor_scores(s, probe_labels, gallery_labels):
    same = np.asarray(probe_labels)[:, None] == np.asarray(gallery_labels)[None, :]
    return s[same], s[~same]


def evaluate_embeddings(probe, probe_labels, gallery, gallery_labels, protocol=EvalProtocol()):
    if len(probe) == 0 or len(gallery) == 0:
        raise ProtocolError("probe and gallery sets must be non-empty")
    s = similarity_matrix(probe, gallery)
    g = s.shape[1]
    ranks = sorted({min(k, g) for k in protocol.ranks})
    rank_k = [(k, rank_k_accuracy(s, probe_labels, gallery_labels, k)) for k in ranks]
    genuine, impostor = genuine_impostor_scores(s, probe_labels, gallery_labels)
    if genuine.size == 0 or impostor.size == 0:
        raise ProtocolError("protocol needs both genuine and impostor pairs")
    vrs = [(far, vr_at_far(genuine, impostor, far)[0]) for far in protocol.fars]
    return EvalReport(
        rank1=rank_k_accuracy(s, probe_labels, gallery_labels, 1),
        rank_k=rank_k,
        vr_at_far=vrs,
        genuine_count=int(genuine.size),
        impostor_count=int(impostor.size),
        roc=roc_points(genuine, impostor),
    )


def embed(params, layer, features):
    """Encoder followed by the decorrelation projection, outside any graph."""
    return project(layer, encode_array(params, features))


def evaluate(params, layer, test_set, protocol=EvalProtocol()):
    """NIR samples are probes, VIS samples the gallery; all pairs are scored."""
    probe = test_set.domains == NIR
    gallery = test_set.domains == VIS
    if not probe.any() or not gallery.any():
        raise ProtocolError("test set needs both NIR probes and VIS gallery samples")
    z = embed(params, layer, test_set.features)
    return evaluate_embeddings(
        z[probe], test_set.identities[probe], z[gallery], test_set.identities[gallery], protocol
    )


def aggregate(reports):
    """Mean and standard deviation of rank-1 and each VR@FAR across folds."""
    if not reports:
        raise ProtocolError("no reports to aggregate")
    rank1 = np.array([r.rank1 for r in reports])
    out = {"folds": len(reports), "rank1_mean": rank1.mean(), "rank1_std": rank1.std()}
    for far, _ in reports[0].vr_at_far:
        vals = np.array([r.vr(far) for r in reports])
        out[f"vr@{far:g}_mean"] = vals.mean()
        out[f"vr@{far:g}_std"] = vals.std()
    return {k: float(v) if k != "folds" else v for k, v in out.items()}
