"""Synthetic two-domain identity data, CSV persistence, and batch sampling.

Each identity owns a unit latent vector shared by both domains.  It is
embedded isometrically into the input space, where each domain applies a
fixed distortion (a random orthogonal map blended with the identity by
``domain_gap``) and a constant offset of length ``domain_gap``; isotropic
Gaussian noise is added last.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, fields
from functools import cached_property

import numpy as np

from .errors import ConfigError, EmptyDatasetError, ParseError

NIR = 0
VIS = 1
DOMAIN_NAMES = {NIR: "NIR", VIS: "VIS"}
DOMAIN_CODES = {v: k for k, v in DOMAIN_NAMES.items()}

# rotation angle of each domain's distortion; VIS stays closest to the
# undistorted latent since pretraining only sees VIS
DOMAIN_ANGLES = {NIR: math.pi / 3, VIS: 0.0}


@dataclass(frozen=True)
class SynthConfig:
    identities: int = 40
    samples_per_identity: int = 8
    latent_dim: int = 16
    input_dim: int = 32
    domain_gap: float = 0.6
    noise_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if min(self.identities, self.samples_per_identity, self.latent_dim) < 1:
            raise ConfigError("counts must be >= 1")
        if self.input_dim < self.latent_dim:
            raise ConfigError("input_dim must be >= latent_dim")
        if self.domain_gap < 0 or self.noise_sigma < 0:
            raise ConfigError("domain_gap and noise_sigma must be >= 0")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown synth config keys: {sorted(unknown)}")
        return cls(**d)


class Dataset:
    """Immutable collection of samples: features, identity labels, domain codes."""

    def __init__(self, features, identities, domains):
        self.features = np.array(features, dtype=np.float64)
        self.identities = np.array(identities, dtype=np.int64).reshape(-1)
        self.domains = np.array(domains, dtype=np.int64).reshape(-1)
        if self.features.ndim != 2 or not (
            len(self.features) == len(self.identities) == len(self.domains)
        ):
            raise ConfigError("features/identities/domains lengths differ")
        if not np.all(np.isfinite(self.features)):
            raise ConfigError("features must be finite")
        if self.identities.size and self.identities.min() < 0:
            raise ConfigError("identities must be non-negative")
        if not np.isin(self.domains, list(DOMAIN_NAMES)).all():
            raise ConfigError("unknown domain code")
        for arr in (self.features, self.identities, self.domains):
            arr.setflags(write=False)

    def __len__(self):
        return len(self.identities)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.identities, other.identities)
            and np.array_equal(self.domains, other.domains)
        )

    __hash__ = None

    def __repr__(self):
        return f"Dataset(samples={len(self)}, identities={len(self.identity_set)}, dim={self.dim})"

    @property
    def dim(self):
        return self.features.shape[1]

    @cached_property
    def identity_set(self):
        return np.unique(self.identities)

    @cached_property
    def by_identity_domain(self):
        """``{identity: (nir_indices, vis_indices)}``."""
        out = {}
        for ident in self.identity_set:
            mask = self.identities == ident
            out[int(ident)] = (
                np.flatnonzero(mask & (self.domains == NIR)),
                np.flatnonzero(mask & (self.domains == VIS)),
            )
        return out

    @cached_property
    def paired_identity_set(self):
        """Identities that have at least one sample in each domain."""
        return np.array(
            [i for i, (n, v) in self.by_identity_domain.items() if n.size and v.size],
            dtype=np.int64,
        )

    def subset(self, index):
        return Dataset(self.features[index], self.identities[index], self.domains[index])

    def select_identities(self, idents):
        return self.subset(np.isin(self.identities, list(idents)))

    def domain(self, dom):
        return self.subset(self.domains == dom)

    def relabel(self):
        """Map identities onto ``0..k-1`` (sorted order); returns (dataset, mapping)."""
        ids = self.identity_set
        lookup = {int(v): i for i, v in enumerate(ids)}
        new = np.array([lookup[int(v)] for v in self.identities], dtype=np.int64)
        return Dataset(self.features, new, self.domains), lookup

    def fingerprint(self):
        h = hashlib.sha256()
        for arr in (self.features, self.identities, self.domains):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]


def domain_frame(latent_dim, input_dim, rng):
    """Random orthonormal frame split into signal, rotation-partner, and offset blocks.

    Returns ``(embed, partner, rest)``: ``embed`` (D×L) carries the latent
    code, ``partner`` (D×r, r = min(L, D-L)) receives the first r signal
    directions under the domain rotation, ``rest`` spans what is left.
    """
    frame, _ = np.linalg.qr(rng.normal(size=(input_dim, input_dim)))
    r = min(latent_dim, input_dim - latent_dim)
    return frame[:, :latent_dim], frame[:, latent_dim : latent_dim + r], frame[:, latent_dim + r :]


def domain_transform(embed, partner, angle, gap):
    """``(1-gap) I + gap R`` on the input space.

    ``R`` is orthogonal: it rotates each plane spanned by a signal direction
    and its partner direction by ``angle`` and fixes everything else.
    """
    r = partner.shape[1]
    e = embed[:, :r]
    c, s = math.cos(angle), math.sin(angle)
    rot = np.eye(embed.shape[0]) + (c - 1.0) * (e @ e.T + partner @ partner.T)
    rot += s * (partner @ e.T - e @ partner.T)
    return (1.0 - gap) * np.eye(embed.shape[0]) + gap * rot


def generate(cfg):
    """Draw a dataset; identities are ``0..cfg.identities-1``.

    Rows are ordered identity-major, NIR samples before VIS samples.  With
    ``noise_sigma == 0`` every sample of an identity in one domain is the
    same vector.  When ``input_dim > 2 * latent_dim`` the offsets are
    orthogonal to all signal directions and the noise-free cross-domain
    cosine is the same for every identity.
    """
    rng = np.random.default_rng(cfg.seed)
    embed, partner, rest = domain_frame(cfg.latent_dim, cfg.input_dim, rng)
    offset_basis = rest if rest.shape[1] else partner
    transforms, offsets = {}, {}
    for dom in (NIR, VIS):
        transforms[dom] = domain_transform(embed, partner, DOMAIN_ANGLES[dom], cfg.domain_gap)
        if offset_basis.shape[1]:
            o = offset_basis @ rng.normal(size=offset_basis.shape[1])
        else:
            o = rng.normal(size=cfg.input_dim)
        offsets[dom] = cfg.domain_gap * o / np.linalg.norm(o)

    latents = rng.normal(size=(cfg.identities, cfg.latent_dim))
    latents /= np.linalg.norm(latents, axis=1, keepdims=True)

    k = cfg.samples_per_identity
    feats, ids, doms = [], [], []
    for ident in range(cfg.identities):
        for dom in (NIR, VIS):
            clean = transforms[dom] @ (embed @ latents[ident]) + offsets[dom]
            noise = rng.normal(size=(k, cfg.input_dim)) * cfg.noise_sigma
            feats.append(clean[None, :] + noise)
            ids.extend([ident] * k)
            doms.extend([dom] * k)
    return Dataset(np.vstack(feats), ids, doms)


def split_identities(ds, n_test):
    """Split off the ``n_test`` highest-numbered identities as a disjoint test set."""
    ids = ds.identity_set
    if not 0 < n_test < ids.size:
        raise ConfigError(f"cannot hold out {n_test} of {ids.size} identities")
    return ds.select_identities(ids[:-n_test]), ds.select_identities(ids[-n_test:])


def write_dataset(ds, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["identity", "domain"] + [f"f{i}" for i in range(ds.dim)])
        for feat, ident, dom in zip(ds.features, ds.identities, ds.domains):
            writer.writerow([int(ident), DOMAIN_NAMES[int(dom)]] + [repr(float(v)) for v in feat])


def read_dataset(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise EmptyDatasetError(f"{path}: empty file")
    header = rows[0]
    if header[:2] != ["identity", "domain"]:
        raise ParseError("header must start with identity,domain", line=1)
    width = len(header)
    if width < 3:
        raise ParseError("header declares no feature columns", line=1)
    if len(rows) == 1:
        raise EmptyDatasetError(f"{path}: no samples")
    feats = np.empty((len(rows) - 1, width - 2))
    ids = np.empty(len(rows) - 1, dtype=np.int64)
    doms = np.empty(len(rows) - 1, dtype=np.int64)
    for i, row in enumerate(rows[1:]):
        line = i + 2
        if len(row) != width:
            raise ParseError(f"expected {width} columns, got {len(row)}", line=line)
        try:
            ids[i] = int(row[0])
        except ValueError:
            raise ParseError(f"bad identity {row[0]!r}", line=line) from None
        if ids[i] < 0:
            raise ParseError(f"negative identity {ids[i]}", line=line)
        if row[1] not in DOMAIN_CODES:
            raise ParseError(f"unknown domain tag {row[1]!r}", line=line)
        doms[i] = DOMAIN_CODES[row[1]]
        try:
            feats[i] = [float(v) for v in row[2:]]
        except ValueError as exc:
            raise ParseError(f"unparsable number ({exc})", line=line) from None
        if not np.all(np.isfinite(feats[i])):
            raise ParseError("non-finite feature", line=line)
    return Dataset(feats, ids, doms)


def sample_batch(ds, batch_size, rng):
    """Indices of an identity-balanced batch: b/2 distinct identities, one NIR + one VIS each.

    The result is ordered ``[nir_0, vis_0, nir_1, vis_1, ...]``.
    """
    if batch_size < 4 or batch_size % 2:
        raise ConfigError(f"batch size must be even and >= 4, got {batch_size}")
    eligible = ds.paired_identity_set
    k = batch_size // 2
    if eligible.size < max(2, k):
        raise ConfigError(
            f"need {k} identities with both domains for batch size {batch_size}, "
            f"dataset has {eligible.size}"
        )
    chosen = rng.choice(eligible, size=k, replace=False)
    out = np.empty(batch_size, dtype=np.intp)
    for slot, ident in enumerate(chosen):
        nir, vis = ds.by_identity_domain[int(ident)]
        out[2 * slot] = nir[rng.integers(nir.size)]
        out[2 * slot + 1] = vis[rng.integers(vis.size)]
    return out
