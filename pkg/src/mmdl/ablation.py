"""Component ablation: four training variants on identical data and seeds."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace

import numpy as np

from .evalkit import evaluate
from .errors import ConfigError
from .training import load_data, pretrain, run_training

log = logging.getLogger(__name__)

FAR = 0.001


@dataclass(frozen=True)
class Variant:
    name: str
    use_decorr: bool
    use_qml: bool
    use_haml: bool


# rows in order of added components; the baseline fine-tunes with plain softmax
VARIANTS = (
    Variant("baseline", False, False, False),
    Variant("+HAML", False, False, True),
    Variant("+HAML+QML", False, True, True),
    Variant("MMDL", True, True, True),
)


@dataclass
class AblationRow:
    variant: Variant
    rank1: list  # one value per seed
    vr: list
    fingerprints: list  # test-set fingerprint per seed

    @property
    def median_rank1(self):
        return float(np.median(self.rank1))

    @property
    def median_vr(self):
        return float(np.median(self.vr))


def variant_config(cfg, variant):
    return replace(
        cfg,
        use_decorr=variant.use_decorr,
        use_qml=variant.use_qml,
        use_haml=variant.use_haml,
        baseline_softmax=not variant.use_haml,
        checkpoint_path=None,
        log_path=None,
    )


def run_ablation(cfg, seeds=None):
    """Train and evaluate every variant for each seed.

    One pretrained encoder per seed is shared by all variants, since
    pretraining does not depend on the toggles.
    """
    seeds = [cfg.seed] if seeds is None else list(seeds)
    if not seeds:
        raise ConfigError("at least one seed is required")
    rows = [AblationRow(v, [], [], []) for v in VARIANTS]
    for seed in seeds:
        seeded = replace(cfg, seed=seed)
        train, test = load_data(seeded)
        if test is None:
            raise ConfigError("ablation needs a test set (test_dataset_path or synth)")
        pretrained = pretrain(seeded, train.relabel()[0], np.random.default_rng(seed))
        for row in rows:
            result = run_training(variant_config(seeded, row.variant), train, pretrained)
            report = evaluate(result.params, result.layer, test)
            row.rank1.append(report.rank1)
            row.vr.append(report.vr(FAR))
            row.fingerprints.append(test.fingerprint())
            log.info("seed %d %s rank1 %.4f vr %.4f", seed, row.variant.name, report.rank1,
                     report.vr(FAR))
    return rows


def write_ablation_csv(rows, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["variant", "decorr", "qml", "haml", "rank1", "vr_at_far_0.001",
                         "seeds", "test_fingerprint"])
        for row in rows:
            v = row.variant
            writer.writerow([v.name, int(v.use_decorr), int(v.use_qml), int(v.use_haml),
                             repr(row.median_rank1), repr(row.median_vr), len(row.rank1),
                             "|".join(row.fingerprints)])
