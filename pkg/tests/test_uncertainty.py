import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fomas.uncertainty import (UncertaintyModel, UncertaintyRealization, delta_from_z, is_admissible_delta,
                               perturbation_matrix, sample_deltas, validate_model, worst_case_delta, z_from_delta)

M_T = np.array([[0.2], [0.0], [-0.1], [0.3]])
R_T = np.array([[0.0, 0.2, 0.4, -0.2]])


def _pair(m0, rng):
    g = rng.normal(size=(m0, m0))
    s = rng.normal(size=(m0, m0))
    z = g @ g.T + (s - s.T)
    h = rng.normal(size=(m0, m0))
    j = h @ h.T + 0.5 * np.eye(m0) + (s.T - s) * 0.3
    return z, j


class TestDeltaFromZ:
    def test_scalar_values(self):
        assert delta_from_z([[1.0]], [[1.0]])[0, 0] == pytest.approx(0.5)
        assert delta_from_z([[3.0]], [[1.0]])[0, 0] == pytest.approx(0.75)
        np.testing.assert_array_equal(delta_from_z(np.zeros((2, 2)), np.eye(2) * 2), np.zeros((2, 2)))

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            delta_from_z([[1.0]], [[-1.0]])
        with pytest.raises(ValueError):
            delta_from_z([[-1.0]], [[1.0]])

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 3), st.integers(0, 2**32 - 1))
    def test_round_trip(self, m0, seed):
        z, j = _pair(m0, np.random.default_rng(seed))
        d = delta_from_z(z, j)
        np.testing.assert_allclose(z_from_delta(d, j), z, atol=1e-9 * max(1.0, np.abs(z).max()))
        assert is_admissible_delta(d, j)

    def test_scalar_monotone_into_unit_interval(self):
        for jv in (0.5, 1.0, 4.0):
            zs = np.linspace(0, 200, 400)
            ds = [delta_from_z([[z]], [[jv]])[0, 0] for z in zs]
            assert np.all(np.diff(ds) > 0)
            assert ds[0] == 0 and ds[-1] < 1 / jv

    def test_negative_scalar_inadmissible(self):
        assert not is_admissible_delta([[-0.4]], [[1.0]])
        assert is_admissible_delta([[0.8]], [[1.0]])
        assert not is_admissible_delta([[1.0]], [[1.0]])


class TestValidateModel:
    def test_example_model(self):
        assert validate_model(UncertaintyModel(M_T, R_T, [[1.0]]), n=4)

    def test_negative_j(self, caplog):
        with caplog.at_level(logging.WARNING):
            assert not validate_model(UncertaintyModel(M_T, R_T, [[-1.0]]))

    def test_skew_j(self):
        m = UncertaintyModel(np.ones((2, 2)), np.ones((2, 2)), [[0, 1], [-1, 0]])
        assert not validate_model(m)

    def test_wrong_n(self):
        assert not validate_model(UncertaintyModel(M_T, R_T, [[1.0]]), n=3)


class TestWorstCase:
    def test_example(self):
        r = UncertaintyRealization(tuple(np.array([[d]]) for d in (0.5, -0.4, 0.1, 0.8)))
        assert worst_case_delta(r)[0, 0] == 0.8

    def test_zero(self):
        r = UncertaintyRealization((np.zeros((1, 1)),) * 3)
        assert worst_case_delta(r)[0, 0] == 0

    def test_single(self):
        r = UncertaintyRealization((np.array([[0.3]]),))
        assert worst_case_delta(r)[0, 0] == 0.3

    def test_tie_lowest_index(self):
        r = UncertaintyRealization((np.array([[-0.5]]), np.array([[0.5]])))
        assert worst_case_delta(r)[0, 0] == -0.5


class TestPerturbation:
    model = UncertaintyModel(M_T, R_T, [[1.0]])

    def test_zero(self):
        np.testing.assert_array_equal(perturbation_matrix(self.model, [[0.0]]), np.zeros((4, 4)))

    def test_example_entries(self):
        p = perturbation_matrix(self.model, [[0.5]])
        assert p[0, 1] == pytest.approx(0.02)
        assert p[0, 2] == pytest.approx(0.04)
        assert p[3, 3] == pytest.approx(-0.03)
        assert np.linalg.matrix_rank(p) == 1

    def test_unit(self):
        np.testing.assert_allclose(perturbation_matrix(self.model, [[1.0]]), M_T @ R_T)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 3), st.integers(4, 6), st.integers(0, 2**32 - 1))
    def test_rank_bound(self, m0, n, seed):
        r = np.random.default_rng(seed)
        model = UncertaintyModel(r.normal(size=(n, m0)), r.normal(size=(m0, n)), np.eye(m0))
        s = np.linalg.svd(perturbation_matrix(model, r.normal(size=(m0, m0))), compute_uv=False)
        assert np.sum(s > 1e-10 * max(1.0, s[0])) <= m0


def test_samples_admissible_and_seeded():
    j = np.array([[1.0, 0.2], [-0.2, 2.0]])
    a = sample_deltas(j, 20, np.random.default_rng(7))
    b = sample_deltas(j, 20, np.random.default_rng(7))
    assert all(is_admissible_delta(d, j) for d in a)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
