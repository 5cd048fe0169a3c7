import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmdl import tensor as T
from mmdl.errors import ConfigError, DegenerateInputError, LabelError
from mmdl.losses import (
    HamlHead,
    MmlConfig,
    QuadrupletTuple,
    cosine_similarity,
    haml,
    mine_quadruplets,
    mml,
    qml,
)
from mmdl.synthdata import NIR, VIS
from mmdl.training import TrainConfig


def _cos(a, b):
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def qml_reference(z, tuples, a1, a2):
    """Scalar loop over the four hinges of every tuple."""
    if not tuples:
        return 0.0
    total = 0.0
    for an, av, nn, nv in tuples:
        pos = _cos(z[an], z[av])
        total += max(0.0, a1 + _cos(z[an], z[nv]) - pos)
        total += max(0.0, a2 + _cos(z[av], z[nv]) - pos)
        total += max(0.0, a1 + _cos(z[av], z[nn]) - pos)
        total += max(0.0, a2 + _cos(z[an], z[nn]) - pos)
    return total / len(tuples)


def haml_reference(z, labels, doms, w, s, m_nir, m_vis, lam_nir, lam_vis):
    per_domain = {NIR: [], VIS: []}
    for row, c, d in zip(z, labels, doms):
        cosines = [_cos(row, w[:, k]) for k in range(w.shape[1])]
        m = m_nir if d == NIR else m_vis
        ct = cosines[c]
        if ct > math.cos(math.pi - m):
            cosines[c] = math.cos(math.acos(ct) + m)
        else:
            cosines[c] = ct - m * math.sin(m)
        logits = [s * v for v in cosines]
        top = max(logits)
        lse = top + math.log(sum(math.exp(v - top) for v in logits))
        per_domain[d].append(lse - logits[c])
    total = 0.0
    for d, lam in ((NIR, lam_nir), (VIS, lam_vis)):
        if per_domain[d]:
            total += lam * sum(per_domain[d]) / len(per_domain[d])
    return total


class TestCosine:
    def test_self(self):
        v = T.constant([[0.3, -2.0, 1.5]])
        assert cosine_similarity(v, v).value[0, 0] == pytest.approx(1.0, abs=1e-15)

    def test_orthogonal(self):
        assert cosine_similarity(T.constant([[1, 0]]), T.constant([[0, 1]])).value[0, 0] == 0.0

    def test_diagonal(self):
        val = cosine_similarity(T.constant([[1, 1]]), T.constant([[1, 0]])).value[0, 0]
        assert abs(val - 0.70710678) < 1e-8
        assert abs(val - 1 / math.sqrt(2)) < 1e-10

    def test_degenerate(self):
        with pytest.raises(DegenerateInputError):
            cosine_similarity(T.constant([[0, 0]]), T.constant([[1, 0]]))

    def test_gradient(self):
        rng = np.random.default_rng(0)
        f = lambda ps: cosine_similarity(ps[0], ps[1])
        assert T.finite_diff_check(f, [rng.uniform(-1, 1, (1, 4)), rng.uniform(-1, 1, (1, 4))]) < 1e-5


class TestMining:
    def test_forced_choice(self):
        z = np.random.default_rng(0).normal(size=(4, 3))
        ids, doms = [0, 0, 1, 1], [NIR, VIS, NIR, VIS]
        tuples = mine_quadruplets(z, ids, doms)
        assert tuples == [QuadrupletTuple(0, 1, 2, 3), QuadrupletTuple(2, 3, 0, 1)]

    def test_hardest_is_max_cosine(self):
        # rows: A-NIR, A-VIS, B-NIR (opposite A-VIS), C-NIR (cos 0.5 with A-VIS), B-VIS, C-VIS
        z = np.array([
            [1.0, 0.0],
            [0.0, 1.0],
            [0.0, -1.0],
            [math.sqrt(3) / 2, 0.5],
            [1.0, 1.0],
            [1.0, -1.0],
        ])
        ids = [0, 0, 1, 2, 1, 2]
        doms = [NIR, VIS, NIR, NIR, VIS, VIS]
        first = mine_quadruplets(z, ids, doms)[0]
        assert first.anchor_nir == 0 and first.anchor_vis == 1
        assert first.neg_nir == 3
        # brute force over candidates
        cands = [i for i in range(6) if doms[i] == VIS and ids[i] != 0]
        assert first.neg_vis == max(cands, key=lambda i: (_cos(z[0], z[i]), -i))

    def test_single_identity(self):
        tuples, skipped = mine_quadruplets(np.eye(2), [3, 3], [NIR, VIS], return_skipped=True)
        assert tuples == [] and skipped == 1

    def test_tie_goes_to_lowest_index(self):
        z = np.array([[1.0, 0], [0, 1.0], [1.0, 1.0], [1.0, 1.0], [2.0, 2.0], [1.0, 1.0]])
        ids = [0, 0, 1, 2, 1, 2]
        doms = [NIR, VIS, NIR, NIR, VIS, VIS]
        t = mine_quadruplets(z, ids, doms)[0]
        assert (t.neg_nir, t.neg_vis) == (2, 4)

    def test_rescaling_invariance(self):
        rng = np.random.default_rng(1)
        z = rng.normal(size=(12, 5))
        ids = np.repeat(np.arange(3), 4)
        doms = np.tile([NIR, VIS], 6)
        scaled = z * rng.uniform(0.1, 10, size=(12, 1))
        assert mine_quadruplets(z, ids, doms) == mine_quadruplets(scaled, ids, doms)

    def test_tuple_invariants(self):
        rng = np.random.default_rng(2)
        ids = np.repeat(np.arange(4), 4)
        doms = np.tile([NIR, VIS], 8)
        for t in mine_quadruplets(rng.normal(size=(16, 6)), ids, doms):
            assert ids[t.anchor_nir] == ids[t.anchor_vis]
            assert ids[t.neg_nir] != ids[t.anchor_nir] and ids[t.neg_vis] != ids[t.anchor_nir]
            assert doms[t.anchor_nir] == doms[t.neg_nir] == NIR
            assert doms[t.anchor_vis] == doms[t.neg_vis] == VIS


class TestQml:
    def test_satisfied_margins(self):
        z = np.array([[1.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
        loss = qml(T.constant(z), [QuadrupletTuple(0, 1, 2, 3)], 0.2, 0.2)
        assert loss.value[0, 0] == 0.0

    def test_hand_arithmetic(self):
        # anchors orthogonal; each negative coincides with one anchor.  Two hinges see
        # cos 1 against the negative (1.2 each), two see cos 0 (0.2 each).
        z = np.array([[1.0, 0], [0, 1.0], [1.0, 0], [0, 1.0]])
        loss = qml(T.constant(z), [QuadrupletTuple(0, 1, 2, 3)], 0.2, 0.2)
        assert loss.value[0, 0] == pytest.approx(1.2 + 1.2 + 0.2 + 0.2, abs=1e-15)

    def test_cross_domain_negatives_coincide(self):
        # anchors orthogonal; each negative coincides with the opposite-domain anchor, so
        # the two cross-domain hinges are 0.2 + 1 - 0 and the within-domain ones 0.2 + 0 - 0
        z = np.array([[1.0, 0], [0, 1.0], [0, 1.0], [1.0, 0]])
        loss = qml(T.constant(z), [QuadrupletTuple(0, 1, 2, 3)], 0.2, 0.2).value[0, 0]
        assert loss == 1.2 + 0.2 + 1.2 + 0.2
        assert loss == qml_reference(z, [(0, 1, 2, 3)], 0.2, 0.2)

    def test_boundary(self):
        # tetrahedron vertices: every pair has cosine -1/3, so negatives tie the positive
        z = np.array([[1.0, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]])
        loss = qml(T.constant(z), [QuadrupletTuple(0, 1, 2, 3)], 0.0, 0.0).value[0, 0]
        assert loss == qml_reference(z, [(0, 1, 2, 3)], 0.0, 0.0)
        assert loss == 0.0

    def test_empty(self):
        out = qml(T.parameter(np.ones((2, 2))), [], 0.2, 0.2)
        assert out.value[0, 0] == 0.0

    def test_matches_reference(self):
        rng = np.random.default_rng(3)
        z = rng.normal(size=(16, 6))
        ids = np.repeat(np.arange(4), 4)
        doms = np.tile([NIR, VIS], 8)
        tuples = mine_quadruplets(z, ids, doms)
        got = qml(T.constant(z), tuples, 0.3, 0.1).value[0, 0]
        assert got == pytest.approx(qml_reference(z, tuples, 0.3, 0.1), abs=1e-12)

    def test_row_scale_invariance(self):
        rng = np.random.default_rng(4)
        z = rng.normal(size=(8, 4))
        ids = np.repeat(np.arange(2), 4)
        doms = np.tile([NIR, VIS], 4)
        tuples = mine_quadruplets(z, ids, doms)
        a = qml(T.constant(z), tuples, 0.5, 0.5).value[0, 0]
        b = qml(T.constant(z * rng.uniform(0.1, 5, (8, 1))), tuples, 0.5, 0.5).value[0, 0]
        assert abs(a - b) < 1e-10

    def test_gradient(self):
        rng = np.random.default_rng(5)
        z = rng.uniform(-1, 1, size=(8, 5))
        ids = np.repeat(np.arange(2), 4)
        doms = np.tile([NIR, VIS], 4)
        tuples = mine_quadruplets(z, ids, doms)
        assert T.finite_diff_check(lambda ps: qml(ps[0], tuples, 1.0, 1.0), [z]) < 1e-5


def _head(w, **kw):
    return HamlHead(w, **kw)


class TestHaml:
    def test_single_class(self):
        z = np.random.default_rng(0).normal(size=(4, 3))
        head = _head(np.ones((3, 1)) / math.sqrt(3))
        loss = haml(T.constant(z), [0, 0, 0, 0], [NIR, VIS, NIR, VIS], head)
        assert loss.value[0, 0] == 0.0

    def test_zero_margin_scalar(self):
        head = _head(np.eye(2), margin_nir=0.0, margin_vis=0.0, weight_nir=0.5, weight_vis=0.5)
        loss = haml(T.constant([[1.0, 0.0]]), [0], [NIR], head).value[0, 0]
        # only the NIR domain is present, so the batch value is 0.5 * per-sample loss
        np.testing.assert_allclose(loss / 0.5, math.log1p(math.exp(-16)), rtol=1e-12)
        assert abs(loss / 0.5 - 1.125e-7) < 1e-10

    def test_convex_weights(self):
        head = _head(np.eye(3))
        z = np.array([[0.4, 0.3, -0.2], [0.4, 0.3, -0.2]])
        both = haml(T.constant(z), [1, 1], [NIR, VIS], head).value[0, 0]
        single = haml_reference(z[:1], [1], [NIR], np.eye(3), 16, 0.9, 0.9, 1.0, 0.0)
        assert both == pytest.approx(single, abs=1e-12)

    def test_reduces_to_normalized_softmax(self):
        rng = np.random.default_rng(1)
        z = rng.normal(size=(8, 5))
        w = rng.normal(size=(5, 3))
        labels = rng.integers(0, 3, size=8)
        doms = np.tile([NIR, VIS], 4)
        head = HamlHead.initialize(5, 3, 0, margin_nir=0.0, margin_vis=0.0, weight_nir=0.5,
                                   weight_vis=0.5, scale=10.0).replace_weights(w)
        got = haml(T.constant(z), labels, doms, head).value[0, 0]
        u = z / np.linalg.norm(z, axis=1, keepdims=True)
        logits = 10.0 * u @ (w / np.linalg.norm(w, axis=0))
        ce = np.log(np.exp(logits).sum(axis=1)) - logits[np.arange(8), labels]
        assert abs(got - ce.mean()) < 1e-12

    def test_matches_reference_with_fallback(self):
        rng = np.random.default_rng(2)
        w = rng.normal(size=(4, 3))
        z = np.vstack([-w[:, 0], w[:, 1], rng.normal(size=(4, 4))])  # first row at theta = pi
        labels = [0, 1, 2, 0, 1, 2]
        doms = [NIR, VIS, NIR, VIS, NIR, VIS]
        head = HamlHead(w / np.linalg.norm(w, axis=0), scale=8.0, margin_nir=0.9, margin_vis=0.5)
        got = haml(T.constant(z), labels, doms, head).value[0, 0]
        ref = haml_reference(z, labels, doms, w, 8.0, 0.9, 0.5, 0.6, 0.4)
        assert got == pytest.approx(ref, abs=1e-12)

    def test_monotone_in_target_cosine(self):
        # z moves in the plane of class 0 and an unused axis, so other cosines stay fixed
        head = _head(np.eye(3)[:, :2])
        values = []
        for angle in np.linspace(0.05, math.pi - 0.05, 40):
            z = np.array([[math.cos(angle), 0.0, math.sin(angle)]])
            values.append(haml(T.constant(z), [0], [VIS], head).value[0, 0])
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_label_out_of_range(self):
        with pytest.raises(LabelError):
            haml(T.constant(np.ones((1, 2))), [2], [NIR], _head(np.eye(2)))

    def test_head_invariants(self):
        with pytest.raises(ConfigError):
            _head(np.eye(2), weight_nir=0.7, weight_vis=0.4)
        with pytest.raises(ConfigError):
            _head(np.eye(2), margin_nir=2.0)
        with pytest.raises(ConfigError):
            _head(np.eye(2), scale=0.0)
        head = _head(np.eye(2)).replace_weights(np.array([[3.0, 0.0], [4.0, 2.0]]))
        np.testing.assert_allclose(np.linalg.norm(head.class_weights, axis=0), 1.0)

    def test_gradient_z_and_weights(self):
        rng = np.random.default_rng(3)
        z = rng.uniform(-1, 1, size=(4, 5))
        w = rng.uniform(-1, 1, size=(5, 3))
        head = HamlHead(w)
        labels, doms = [0, 2, 1, 0], [NIR, VIS, NIR, VIS]
        f = lambda ps: haml(ps[0], labels, doms, head, ps[1])
        assert T.finite_diff_check(f, [z, w], eps=1e-5) < 1e-5


class TestMml:
    def test_lambda1_zero(self):
        h = T.constant([[0.7]])
        out = mml(T.constant([[123.0]]), h, MmlConfig(lambda1=0.0, lambda2=2.0))
        assert out.value[0, 0] == 1.4

    def test_arithmetic(self):
        out = mml(T.constant([[0.3]]), T.constant([[0.5]]), MmlConfig(lambda1=10, lambda2=1))
        assert out.value[0, 0] == pytest.approx(3.5, abs=1e-15)

    def test_defaults_from_config(self):
        cfg = TrainConfig()
        assert (cfg.lambda_nir, cfg.lambda_vis, cfg.lambda1, cfg.lambda2) == (0.6, 0.4, 10.0, 1.0)
        assert cfg.margin_nir == cfg.margin_vis == 0.9
        assert cfg.batch_size == 16

    def test_negative_rejected(self):
        with pytest.raises(ConfigError):
            MmlConfig(alpha1=-0.1)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_qml_nonnegative_and_zero_iff_inactive(seed, a1, a2):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(8, 4))
    ids = np.repeat(np.arange(2), 4)
    doms = np.tile([NIR, VIS], 4)
    tuples = mine_quadruplets(z, ids, doms)
    loss = qml(T.constant(z), tuples, a1, a2).value[0, 0]
    ref = qml_reference(z, tuples, a1, a2)
    assert loss >= 0.0
    assert loss == pytest.approx(ref, abs=1e-12)
    assert (loss == 0.0) == (ref == 0.0)
