import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fomas.errors import ConnectivityError, DimensionError
from fomas.graph import (AgentGraph, DirectedGraphWarning, cycle_graph, is_connected, laplacian,
                         reduced_laplacian)
from fomas.matcore import kron

CYCLE_L = np.array([[2, -1, 0, -1], [-1, 2, -1, 0], [0, -1, 2, -1], [-1, 0, -1, 2]], dtype=float)


def random_connected(n, rng):
    """Spanning path plus random extra undirected edges."""
    a = np.zeros((n, n))
    perm = rng.permutation(n)
    for i, j in zip(perm[:-1], perm[1:]):
        a[i, j] = a[j, i] = rng.uniform(0.5, 2.0)
    extra = rng.random((n, n)) < 0.3
    w = np.triu(extra * rng.uniform(0.1, 1.0, (n, n)), 1)
    a += w + w.T
    return AgentGraph(a)


class TestLaplacian:
    def test_cycle(self):
        np.testing.assert_array_equal(laplacian(cycle_graph(4)), CYCLE_L)

    def test_single_agent(self):
        np.testing.assert_array_equal(laplacian(AgentGraph([[0.0]])), [[0.0]])

    def test_pair(self):
        np.testing.assert_array_equal(laplacian(AgentGraph([[0, 1], [1, 0]])), [[1, -1], [-1, 1]])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 7), st.integers(0, 2**32 - 1))
    def test_rows_sum_to_zero(self, n, seed):
        r = np.random.default_rng(seed)
        a = r.uniform(0, 3, (n, n)) * (r.random((n, n)) < 0.5)
        np.fill_diagonal(a, 0)
        assert np.max(np.abs(laplacian(AgentGraph(a)) @ np.ones(n))) <= 1e-12

    def test_validation(self):
        with pytest.raises(DimensionError):
            AgentGraph(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            AgentGraph([[0, -1], [1, 0]])
        with pytest.raises(ValueError):
            AgentGraph([[1, 0], [0, 0]])


class TestReducedLaplacian:
    def test_cycle_drops_last_row(self):
        pair = reduced_laplacian(CYCLE_L)
        np.testing.assert_array_equal(pair.reduced, CYCLE_L[:3])
        assert pair.removed_row == 3
        assert np.linalg.svd(pair.reduced, compute_uv=False)[-1] > 1e-9

    def test_pair(self):
        np.testing.assert_array_equal(reduced_laplacian([[1, -1], [-1, 1]]).reduced, [[1, -1]])

    def test_disconnected(self):
        a = np.zeros((4, 4))
        a[0, 1] = a[1, 0] = a[2, 3] = a[3, 2] = 1
        with pytest.raises(ConnectivityError, match="insufficient connectivity"):
            reduced_laplacian(laplacian(AgentGraph(a)))

    def test_single_agent(self):
        with pytest.raises(ConnectivityError):
            reduced_laplacian([[0.0]])

    def test_falls_back_to_earlier_row(self):
        # dropping the last row would leave only the zero row
        lap = np.array([[0.0, 0.0], [-1.0, 1.0]])
        pair = reduced_laplacian(lap)
        assert pair.removed_row == 0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 6), st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_rank_and_lift(self, n_agents, n, seed):
        g = random_connected(n_agents, np.random.default_rng(seed))
        red = reduced_laplacian(laplacian(g)).reduced
        assert np.linalg.svd(red, compute_uv=False)[-1] > 1e-9
        assert kron(red, np.eye(n)).shape == ((n_agents - 1) * n, n_agents * n)


class TestConnectivity:
    def test_cycle(self):
        assert is_connected(cycle_graph(4))

    def test_single(self):
        assert is_connected(AgentGraph([[0.0]]))

    def test_no_edges(self):
        assert not is_connected(AgentGraph(np.zeros((2, 2))))

    def test_directed_warns(self):
        with pytest.warns(DirectedGraphWarning):
            assert is_connected(AgentGraph([[0, 1], [0, 0]]))

    def test_undirected_is_silent(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            is_connected(cycle_graph(5))
