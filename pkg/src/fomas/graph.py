"""Communication graphs, Laplacians and the reduced Laplacian."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConnectivityError, DimensionError
from .matcore import as_matrix

# smallest singular value / eigenvalue magnitude treated as nonzero
RANK_TOL = 1e-9


class DirectedGraphWarning(UserWarning):
    """Emitted for non-symmetric adjacency; the consensus theory is only exercised on undirected graphs."""


@dataclass(frozen=True, eq=False)
class AgentGraph:
    """Weighted communication graph over ``n_agents`` agents.

    ``adjacency[i, j] > 0`` means agent ``i`` listens to agent ``j``.
    """

    adjacency: np.ndarray

    def __post_init__(self):
        a = as_matrix(self.adjacency, "adjacency")
        if a.shape[0] != a.shape[1]:
            raise DimensionError(f"adjacency must be square, got {a.shape}")
        if np.any(a < 0):
            raise ValueError("adjacency weights must be nonnegative")
        if np.any(np.diag(a) != 0):
            raise ValueError("adjacency diagonal must be zero (no self loops)")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)

    @property
    def n_agents(self) -> int:
        return self.adjacency.shape[0]

    @property
    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.adjacency, self.adjacency.T))

    def __eq__(self, other):
        return isinstance(other, AgentGraph) and np.array_equal(self.adjacency, other.adjacency)


@dataclass(frozen=True, eq=False)
class LaplacianPair:
    full: np.ndarray
    reduced: np.ndarray
    removed_row: int


def laplacian(g: AgentGraph) -> np.ndarray:
    """Graph Laplacian: row sums of the adjacency on the diagonal, ``-a_ij`` elsewhere."""
    a = g.adjacency
    return np.diag(a.sum(axis=1)) - a


def reduced_laplacian(lap) -> LaplacianPair:
    """Drop one row of ``lap`` so the remainder has full row rank.

    The last row is tried first, then earlier rows in reverse order.
    """
    full = as_matrix(lap, "laplacian")
    n = full.shape[0]
    if n == 1:
        raise ConnectivityError("insufficient connectivity: a single agent has no relative states")
    for row in range(n - 1, -1, -1):
        red = np.delete(full, row, axis=0)
        s = np.linalg.svd(red, compute_uv=False)
        if s[-1] > RANK_TOL:
            return LaplacianPair(full=full, reduced=red, removed_row=row)
    raise ConnectivityError()


def is_connected(g: AgentGraph) -> bool:
    """True when the Laplacian has exactly one (near-)zero eigenvalue."""
    if not g.is_symmetric:
        warnings.warn(
            "non-symmetric adjacency: consensus guarantees are only established for undirected graphs",
            DirectedGraphWarning,
            stacklevel=2,
        )
    if g.n_agents == 1:
        return True
    ev = np.linalg.eigvals(laplacian(g))
    return int(np.sum(np.abs(ev) <= RANK_TOL)) == 1


def cycle_graph(n_agents: int, weight: float = 1.0) -> AgentGraph:
    a = np.zeros((n_agents, n_agents))
    for i in range(n_agents):
        j = (i + 1) % n_agents
        if i != j:
            a[i, j] = a[j, i] = weight
    return AgentGraph(a)
