"""Positive-real parametric uncertainty.

Each agent's drift matrix is perturbed by ``left @ delta_i @ right`` where
``delta_i = Z_i (I + J Z_i)^{-1}`` for some ``Z_i`` with ``Z_i + Z_i^T >= 0``
and ``J + J^T > 0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .matcore import as_matrix, sym

log = logging.getLogger(__name__)

PSD_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class UncertaintyModel:
    left_factor: np.ndarray   # n x m0
    right_factor: np.ndarray  # m0 x n
    j_matrix: np.ndarray      # m0 x m0

    def __post_init__(self):
        for name in ("left_factor", "right_factor", "j_matrix"):
            a = as_matrix(getattr(self, name), name)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def n(self) -> int:
        return self.left_factor.shape[0]

    @property
    def m0(self) -> int:
        return self.j_matrix.shape[0]

    def __eq__(self, other):
        return isinstance(other, UncertaintyModel) and all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("left_factor", "right_factor", "j_matrix")
        )


@dataclass(frozen=True, eq=False)
class UncertaintyRealization:
    """One ``delta_i`` per agent."""

    per_agent_delta: tuple = field(default_factory=tuple)

    def __post_init__(self):
        deltas = tuple(as_matrix(d, f"delta[{i}]") for i, d in enumerate(self.per_agent_delta))
        object.__setattr__(self, "per_agent_delta", deltas)

    @classmethod
    def from_z(cls, zs, j) -> "UncertaintyRealization":
        return cls(tuple(delta_from_z(z, j) for z in zs))

    def __len__(self):
        return len(self.per_agent_delta)

    def __eq__(self, other):
        return (
            isinstance(other, UncertaintyRealization)
            and len(self) == len(other)
            and all(np.array_equal(a, b) for a, b in zip(self.per_agent_delta, other.per_agent_delta))
        )


def _min_sym_eig(m: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(sym(m))[0])


def delta_from_z(z, j) -> np.ndarray:
    """Map ``Z`` to ``delta = Z (I + J Z)^{-1}``."""
    z = as_matrix(z, "z")
    j = as_matrix(j, "j")
    if z.shape != j.shape or z.shape[0] != z.shape[1]:
        raise DimensionError(f"z {z.shape} and j {j.shape} must be equal square shapes")
    lam_j = _min_sym_eig(j)
    if lam_j <= 0:
        raise ValueError(f"Sym{{J}} must be positive definite; smallest eigenvalue is {lam_j:.3e}")
    lam_z = _min_sym_eig(z)
    if lam_z < -PSD_TOL:
        raise ValueError(f"Sym{{Z}} must be positive semidefinite; smallest eigenvalue is {lam_z:.3e}")
    # delta = Z (I + JZ)^{-1}  <=>  (I + JZ)^T delta^T = Z^T
    return np.linalg.solve((np.eye(z.shape[0]) + j @ z).T, z.T).T


def z_from_delta(delta, j) -> np.ndarray:
    """Inverse map ``Z = delta (I - J delta)^{-1}``."""
    d = as_matrix(delta, "delta")
    j = as_matrix(j, "j")
    return np.linalg.solve((np.eye(d.shape[0]) - j @ d).T, d.T).T


def is_admissible_delta(delta, j, tol: float = PSD_TOL) -> bool:
    """Whether ``delta`` lies in the positive-real class generated by ``j``."""
    d = as_matrix(delta, "delta")
    j = as_matrix(j, "j")
    if np.linalg.matrix_rank(np.eye(d.shape[0]) - j @ d) < d.shape[0]:
        return False
    return _min_sym_eig(z_from_delta(d, j)) >= -tol


def validate_model(m: UncertaintyModel, n: int | None = None) -> bool:
    """Check ``Sym{J} > 0`` and dimension consistency; diagnostics go to the log."""
    m0 = m.j_matrix.shape[0]
    ok = True
    if m.j_matrix.shape[1] != m0:
        log.warning("J must be square, got %s", m.j_matrix.shape)
        return False
    if m.left_factor.shape[1] != m0 or m.right_factor.shape[0] != m0:
        log.warning("factor shapes %s / %s do not match m0 = %d", m.left_factor.shape, m.right_factor.shape, m0)
        ok = False
    if m.left_factor.shape[0] != m.right_factor.shape[1]:
        log.warning("left factor has %d rows but right factor has %d columns",
                    m.left_factor.shape[0], m.right_factor.shape[1])
        ok = False
    if n is not None and m.left_factor.shape[0] != n:
        log.warning("uncertainty acts on dimension %d, agents have n = %d", m.left_factor.shape[0], n)
        ok = False
    lam = _min_sym_eig(m.j_matrix)
    if lam <= 0:
        log.warning("Sym{J} not positive definite (smallest eigenvalue %.3e)", lam)
        ok = False
    return ok


def worst_case_delta(r: UncertaintyRealization) -> np.ndarray:
    """The ``delta_i`` of largest spectral norm; ties go to the lowest agent index."""
    if len(r) == 0:
        raise ValueError("empty realization")
    norms = [np.linalg.norm(d, 2) for d in r.per_agent_delta]
    return r.per_agent_delta[int(np.argmax(norms))]


def perturbation_matrix(m: UncertaintyModel, delta) -> np.ndarray:
    d = as_matrix(delta, "delta")
    if d.shape != (m.m0, m.m0):
        raise DimensionError(f"delta must be {m.m0}x{m.m0}, got {d.shape}")
    return m.left_factor @ d @ m.right_factor


def sample_deltas(j, n_samples: int, rng: np.random.Generator, scale: float = 3.0) -> list[np.ndarray]:
    """Random admissible deltas built from ``Z = G G^T + S`` with ``S`` skew.

    ``Z + Z^T = 2 G G^T >= 0`` so every draw is admissible by construction.
    """
    j = as_matrix(j, "j")
    m0 = j.shape[0]
    out = []
    for _ in range(n_samples):
        g = rng.normal(scale=np.sqrt(scale), size=(m0, m0))
        s = rng.normal(scale=scale, size=(m0, m0))
        out.append(delta_from_z(g @ g.T + (s - s.T) / 2, j))
    return out
