"""Alternating optimization of the encoder and the decorrelation layer.

Phases:

1. pretrain the encoder with a normalized-softmax head on VIS samples only;
2. fit the decorrelation layer on the pretrained representations;
3. per epoch, take SGD steps on the multi-margin loss with the projection
   frozen, then refit the projection with the encoder frozen.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import tensor as T
from .checkpoint import save_checkpoint
from .decorr import DecorrLayer, fit_decorrelation, project
from .encoder import LrSchedule, encode, encode_array, init_network, lr_at, parameter_nodes, sgd_step
from .errors import ConfigError, NumericError
from .losses import HamlHead, MmlConfig, haml, mine_quadruplets, mml, qml
from .synthdata import VIS, SynthConfig, generate, read_dataset, sample_batch, split_identities

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Every knob of a training run; JSON keys are the field names."""

    layer_sizes: tuple = (32, 128, 128, 64)
    q: int = 64
    batch_size: int = 16
    epochs: int = 50
    lr_initial: float = 0.003
    lr_final: float = 3e-5
    pretrain_epochs: int = 20
    pretrain_lr: float = 0.05
    alpha1: float = 0.2
    alpha2: float = 0.2
    lambda1: float = 10.0
    lambda2: float = 1.0
    scale: float = 16.0
    margin_nir: float = 0.9
    margin_vis: float = 0.9
    lambda_nir: float = 0.6
    lambda_vis: float = 0.4
    seed: int = 0
    use_decorr: bool = True
    use_qml: bool = True
    use_haml: bool = True
    baseline_softmax: bool = False
    dataset_path: str | None = None
    test_dataset_path: str | None = None
    checkpoint_path: str | None = None
    log_path: str | None = None
    report_path: str | None = None
    synth: dict | None = field(default=None, hash=False)
    test_identities: int = 20

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ConfigError(f"layer_sizes must hold >= 2 positive counts: {self.layer_sizes}")
        if not 1 <= self.q <= self.n:
            raise ConfigError(f"need 1 <= q <= n, got q={self.q}, n={self.n}")
        if self.batch_size < 4 or self.batch_size % 2:
            raise ConfigError(f"batch_size must be even and >= 4, got {self.batch_size}")
        if self.epochs < 0 or self.pretrain_epochs < 0:
            raise ConfigError("epoch counts must be non-negative")
        if abs(self.lambda_nir + self.lambda_vis - 1.0) > 1e-12:
            raise ConfigError("lambda_nir + lambda_vis must equal 1")
        if self.pretrain_lr <= 0:
            raise ConfigError("pretrain_lr must be positive")
        if self.test_identities < 1:
            raise ConfigError("test_identities must be >= 1")
        # construct the dependent configs eagerly so every invariant fails here
        self.schedule
        self.mml_config
        if self.synth is not None:
            self.synth_config
        HamlHead(np.ones((1, 1)), self.scale, self.margin_nir, self.margin_vis,
                 self.lambda_nir, self.lambda_vis)

    @property
    def n(self):
        return self.layer_sizes[-1]

    @property
    def schedule(self):
        return LrSchedule(self.lr_initial, self.lr_final, self.epochs)

    @property
    def mml_config(self):
        return MmlConfig(self.alpha1, self.alpha2, self.lambda1, self.lambda2)

    @property
    def synth_config(self):
        """Generator settings; the data seed follows ``seed`` unless set explicitly."""
        return SynthConfig.from_dict({"seed": self.seed, **(self.synth or {})})

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(d)

    def to_dict(self):
        d = asdict(self)
        d["layer_sizes"] = list(self.layer_sizes)
        return d

    def head(self, dim, n_classes, seed, plain=False):
        if plain:
            return HamlHead.initialize(dim, n_classes, seed, scale=self.scale, margin_nir=0.0,
                                       margin_vis=0.0, weight_nir=0.5, weight_vis=0.5)
        return HamlHead.initialize(dim, n_classes, seed, scale=self.scale,
                                   margin_nir=self.margin_nir, margin_vis=self.margin_vis,
                                   weight_nir=self.lambda_nir, weight_vis=self.lambda_vis)


@dataclass
class TrainResult:
    params: object
    layer: DecorrLayer
    head: HamlHead
    log: list  # one dict per logged line
    refit_errors: list = field(default_factory=list)  # max |W^T W - I| after each fit


def load_data(cfg):
    """Training and test sets, from CSV paths or generated from ``cfg.synth``."""
    if cfg.dataset_path is not None:
        train = read_dataset(cfg.dataset_path)
        test = read_dataset(cfg.test_dataset_path) if cfg.test_dataset_path else None
        return train, test
    if cfg.synth is None:
        raise ConfigError("config needs either dataset_path or synth")
    synth = cfg.synth_config
    total = replace(synth, identities=synth.identities + cfg.test_identities)
    return split_identities(generate(total), cfg.test_identities)


def _finite(value, where):
    if not math.isfinite(value):
        raise NumericError(f"non-finite loss {value} at {where}")
    return value


def _finite_rows(node, where):
    """Diverged parameters show up first as non-finite or collapsed representations."""
    if not np.all(np.isfinite(node.value)):
        raise NumericError(f"non-finite representations at {where}")
    return node


def pretrain(cfg, train, rng):
    """Encoder initialization plus normalized-softmax training on VIS samples."""
    params = init_network(cfg.layer_sizes, cfg.seed)
    vis = train.domain(VIS)
    if cfg.pretrain_epochs == 0 or len(vis) == 0:
        return params
    labels, _ = vis.relabel()
    head = cfg.head(cfg.n, labels.identity_set.size, cfg.seed + 1, plain=True)
    b = cfg.batch_size
    for epoch in range(cfg.pretrain_epochs):
        order = rng.permutation(len(vis))
        losses = []
        for start in range(0, len(order) - b + 1, b):
            idx = order[start : start + b]
            nodes = parameter_nodes(params)
            wf = T.parameter(head.class_weights)
            y = _finite_rows(encode(params, vis.features[idx], nodes), f"pretrain epoch {epoch}")
            loss = haml(y, labels.identities[idx], labels.domains[idx], head, wf)
            losses.append(_finite(loss.value[0, 0], f"pretrain epoch {epoch}"))
            T.backward(loss)
            params = sgd_step(params, [nd.grad for nd in nodes], cfg.pretrain_lr)
            head = head.replace_weights(head.class_weights - cfg.pretrain_lr * wf.grad)
        log.info("pretrain epoch %d loss %.4f", epoch, float(np.mean(losses)))
    return params


def _refit(cfg, params, train):
    if not cfg.use_decorr:
        return DecorrLayer.identity(cfg.n)
    return fit_decorrelation(encode_array(params, train.features), cfg.q)


def run_training(cfg, train=None, pretrained=None):
    """Run every phase and return the final state with the fine-tuning log.

    ``train`` overrides the configured data source; ``pretrained`` supplies
    encoder parameters in place of the pretraining phase (for sharing one
    pretrained encoder across ablation variants).
    """
    if train is None:
        train, _ = load_data(cfg)
    if train.dim != cfg.layer_sizes[0]:
        raise ConfigError(
            f"dataset has {train.dim} features but layer_sizes starts with {cfg.layer_sizes[0]}"
        )
    train, _ = train.relabel()
    rng = np.random.default_rng(cfg.seed)
    params = pretrain(cfg, train, rng) if pretrained is None else pretrained.copy()
    rng = np.random.default_rng([cfg.seed, 1])

    layer = _refit(cfg, params, train)
    refit_errors = [_orthonormality_error(layer)]
    # class weights are drawn in representation space and expressed in the projected basis
    head = cfg.head(cfg.n, train.identity_set.size, cfg.seed + 2, plain=not cfg.use_haml)
    head = head.replace_weights(layer.projection.T @ head.class_weights)
    use_softmax = cfg.use_haml or cfg.baseline_softmax
    records = []
    batches = max(1, len(train) // cfg.batch_size)
    for epoch in range(cfg.epochs):
        lr = lr_at(cfg.schedule, epoch)
        sums = np.zeros(3)
        for batch in range(batches):
            idx = sample_batch(train, cfg.batch_size, rng)
            ids, doms = train.identities[idx], train.domains[idx]
            nodes = parameter_nodes(params)
            wf = T.parameter(head.class_weights)
            y = encode(params, train.features[idx], nodes)
            z = project(layer, _finite_rows(y, f"epoch {epoch} batch {batch}"))
            if cfg.use_qml:
                tuples = mine_quadruplets(z.value, ids, doms)
                l_qml = qml(z, tuples, cfg.alpha1, cfg.alpha2)
            else:
                l_qml = T.constant([[0.0]])
            if use_softmax:
                l_haml = haml(z, ids, doms, head, wf)
            else:
                l_haml = T.constant([[0.0]])
            loss = mml(l_qml, l_haml, cfg.mml_config)
            values = [loss.value[0, 0], l_qml.value[0, 0], l_haml.value[0, 0]]
            for v in values:
                _finite(v, f"epoch {epoch} batch {batch}")
            T.backward(loss)
            params = sgd_step(params, [nd.grad for nd in nodes], lr)
            if use_softmax:
                head = head.replace_weights(head.class_weights - lr * wf.grad)
            sums += values
            records.append(_record(epoch, batch, values, lr))
        records.append(_record(epoch, None, sums / batches, lr))
        if cfg.use_decorr:
            new_layer = _refit(cfg, params, train)
            # carry the class weights into the new basis so logits are unchanged at q == n
            head = head.replace_weights(new_layer.projection.T @ layer.projection @ head.class_weights)
            layer = new_layer
            refit_errors.append(_orthonormality_error(layer))
        log.info("epoch %d lr %.3g mean l_mml %.4f", epoch, lr, records[-1]["l_mml"])

    result = TrainResult(params, layer, head, records, refit_errors)
    if cfg.checkpoint_path:
        save_checkpoint(params, layer, head, cfg.checkpoint_path)
    if cfg.log_path:
        write_log(records, cfg.log_path)
    return result


def _orthonormality_error(layer):
    w = layer.projection
    return float(np.max(np.abs(w.T @ w - np.eye(w.shape[1]))))


def _record(epoch, batch, values, lr):
    l_mml, l_qml, l_haml = (float(v) for v in values)
    return {"epoch": epoch, "batch": batch, "l_qml": l_qml, "l_haml": l_haml, "l_mml": l_mml, "lr": lr}


def write_log(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_log(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def epoch_means(records):
    """Per-epoch mean L_MML from the summary lines (``batch`` is null)."""
    return [r["l_mml"] for r in records if r["batch"] is None]
