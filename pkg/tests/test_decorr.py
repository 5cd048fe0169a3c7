import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.utils.estimator_checks import check_transformer_general

from mmdl import tensor as T
from mmdl.decorr import (
    Decorrelation,
    DecorrLayer,
    fit_decorrelation,
    jacobi_eigh,
    normalized_second_moment,
    objective,
    project,
)
from mmdl.errors import ConfigError, ContractError, DegenerateInputError, ShapeError


def _random_symmetric(rng, n):
    a = rng.normal(size=(n, n))
    return 0.5 * (a + a.T)


def _random_orthonormal(rng, n, q):
    qmat, r = np.linalg.qr(rng.normal(size=(n, q)))
    return qmat * np.sign(np.diag(r))


def _unit_cosines(x):
    u = x / np.linalg.norm(x, axis=1, keepdims=True)
    return u @ u.T


class TestSecondMoment:
    def test_standard_basis(self):
        np.testing.assert_allclose(normalized_second_moment(np.eye(4)), np.eye(4) / 4)

    def test_rank_one(self):
        y = np.array([[1.0, -2.0, 2.0]])
        c = normalized_second_moment(y)
        np.testing.assert_allclose(c, y.T @ y / 9.0, atol=1e-15)
        assert np.trace(c) == pytest.approx(1.0, abs=1e-15)

    def test_brute_force(self):
        y = np.random.default_rng(0).normal(size=(5, 3))
        expected = np.zeros((3, 3))
        for row in y:
            expected += np.outer(row, row) / row.dot(row)
        np.testing.assert_allclose(normalized_second_moment(y), expected / 5, atol=1e-12)

    def test_zero_row(self):
        y = np.ones((4, 3))
        y[2] = 0
        with pytest.raises(DegenerateInputError) as info:
            normalized_second_moment(y)
        assert info.value.row == 2

    def test_psd_trace_one(self):
        c = normalized_second_moment(np.random.default_rng(1).normal(size=(40, 6)))
        assert np.linalg.eigvalsh(c).min() > -1e-12
        assert np.trace(c) == pytest.approx(1.0, abs=1e-12)


class TestJacobi:
    def test_identity(self):
        vals, vecs = jacobi_eigh(np.eye(4))
        np.testing.assert_array_equal(vals, np.ones(4))
        np.testing.assert_array_equal(vecs, np.eye(4))

    def test_diagonal(self):
        vals, vecs = jacobi_eigh(np.diag([1.0, 3.0, 2.0]))
        np.testing.assert_array_equal(vals, [3, 2, 1])
        np.testing.assert_array_equal(vecs, np.eye(3)[:, [1, 2, 0]])

    def test_residual_and_reconstruction(self):
        c = _random_symmetric(np.random.default_rng(2), 6)
        vals, v = jacobi_eigh(c)
        for i in range(6):
            assert np.linalg.norm(c @ v[:, i] - vals[i] * v[:, i]) < 1e-9
        np.testing.assert_allclose(v @ np.diag(vals) @ v.T, c, atol=1e-9)
        np.testing.assert_allclose(v.T @ v, np.eye(6), atol=1e-10)

    def test_matches_lapack(self):
        # independent reference: LAPACK's symmetric solver
        c = _random_symmetric(np.random.default_rng(3), 10)
        vals, v = jacobi_eigh(c)
        np.testing.assert_allclose(vals, np.linalg.eigvalsh(c)[::-1], atol=1e-12)

    def test_descending_and_sign(self):
        vals, v = jacobi_eigh(_random_symmetric(np.random.default_rng(4), 7))
        assert np.all(np.diff(vals) <= 0)
        lead = v[np.abs(v).argmax(axis=0), np.arange(7)]
        assert np.all(lead >= 0)

    def test_tie_order(self):
        vals, vecs = jacobi_eigh(np.diag([2.0, 5.0, 2.0, 5.0]))
        np.testing.assert_array_equal(vals, [5, 5, 2, 2])
        np.testing.assert_array_equal(vecs, np.eye(4)[:, [1, 3, 0, 2]])

    def test_asymmetric(self):
        with pytest.raises(ContractError):
            jacobi_eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_one_by_one(self):
        vals, vecs = jacobi_eigh(np.array([[-3.0]]))
        assert vals.tolist() == [-3.0] and vecs.tolist() == [[1.0]]


class TestFit:
    def test_full_rank_is_rotation(self):
        y = np.random.default_rng(5).normal(size=(30, 6))
        layer = fit_decorrelation(y, 6)
        np.testing.assert_allclose(layer.projection.T @ layer.projection, np.eye(6), atol=1e-12)
        np.testing.assert_allclose(_unit_cosines(project(layer, y)), _unit_cosines(y), atol=1e-10)

    def test_axis_aligned(self):
        y = np.array([[2.0, 0], [1.0, 0], [5.0, 0], [0, 3.0]])
        layer = fit_decorrelation(y, 1)
        np.testing.assert_allclose(np.abs(layer.projection[:, 0]), [1, 0], atol=1e-15)
        np.testing.assert_allclose(layer.eigenvalues, [0.75])

    def test_beats_random_bases(self):
        rng = np.random.default_rng(6)
        y = rng.normal(size=(50, 8)) * np.linspace(2, 0.5, 8)
        c = normalized_second_moment(y)
        layer = fit_decorrelation(y, 3)
        best = objective(layer.projection, c)
        assert all(objective(_random_orthonormal(rng, 8, 3), c) <= best + 1e-12 for _ in range(1000))

    def test_q_too_large(self):
        with pytest.raises(ConfigError):
            fit_decorrelation(np.ones((3, 2)) + np.eye(3, 2), 3)

    def test_monotone_in_q(self):
        y = np.random.default_rng(7).normal(size=(40, 6))
        c = normalized_second_moment(y)
        values = [objective(fit_decorrelation(y, q).projection, c) for q in range(1, 7)]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_row_scale_invariance(self):
        rng = np.random.default_rng(8)
        y = rng.normal(size=(25, 5))
        scaled = y * rng.uniform(0.1, 10, size=(25, 1))
        a, b = fit_decorrelation(y, 5), fit_decorrelation(scaled, 5)
        np.testing.assert_allclose(normalized_second_moment(scaled), normalized_second_moment(y),
                                   atol=1e-12)
        np.testing.assert_allclose(b.projection, a.projection, atol=1e-12)

    def test_decorrelated_moment(self):
        y = np.random.default_rng(9).normal(size=(200, 16)) @ np.random.default_rng(10).normal(
            size=(16, 16))
        for q in (16, 10):
            layer = fit_decorrelation(y, q)
            u = y / np.linalg.norm(y, axis=1, keepdims=True)
            zhat = u @ layer.projection
            moment = zhat.T @ zhat / len(y)
            off = moment - np.diag(np.diag(moment))
            assert np.abs(off).max() < 1e-8
            np.testing.assert_allclose(np.diag(moment), layer.eigenvalues, atol=1e-8)


class TestProject:
    def test_identity(self):
        y = np.random.default_rng(0).normal(size=(4, 3))
        np.testing.assert_array_equal(project(DecorrLayer.identity(3), y), y)

    def test_zero(self):
        layer = fit_decorrelation(np.random.default_rng(1).normal(size=(10, 4)), 2)
        np.testing.assert_array_equal(project(layer, np.zeros((3, 4))), np.zeros((3, 2)))

    def test_width_mismatch(self):
        with pytest.raises(ShapeError):
            project(DecorrLayer.identity(3), np.ones((2, 4)))
        with pytest.raises(ShapeError):
            project(DecorrLayer.identity(3), T.constant(np.ones((2, 4))))

    def test_differentiable_in_y(self):
        rng = np.random.default_rng(2)
        layer = fit_decorrelation(rng.normal(size=(20, 5)), 3)
        f = lambda ps: T.total_sum(T.row_l2_normalize(project(layer, ps[0])))
        assert T.finite_diff_check(f, [rng.uniform(-1, 1, size=(4, 5))]) < 1e-5


class TestTransformer:
    def test_sklearn_api(self):
        X = np.random.default_rng(0).normal(size=(30, 5))
        model = Decorrelation(n_components=3)
        Z = model.fit_transform(X)
        assert Z.shape == (30, 3)
        assert model.get_params() == {"n_components": 3}
        np.testing.assert_array_equal(Z, X @ model.components_.T)

    def test_general_transformer_check(self):
        check_transformer_general("Decorrelation", Decorrelation())


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**31 - 1))
def test_jacobi_property(n, seed):
    c = _random_symmetric(np.random.default_rng(seed), n)
    vals, v = jacobi_eigh(c)
    np.testing.assert_allclose(c @ v, v * vals, atol=1e-9)
    np.testing.assert_allclose(v.T @ v, np.eye(n), atol=1e-10)
