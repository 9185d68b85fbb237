"""Multi-agent plant, decentralized dynamic output-feedback protocol and the
reduced closed loop used for synthesis.

Agent ``i`` obeys ``D^alpha x_i = (A + dA_i) x_i + B_i u_i``, ``y_i = C x_i``.
Its controller sees the Laplacian-weighted output combination
``sum_p l_ip y_p`` and has ``n_c`` internal states. Consensus of the agents is
stability of the relative states ``x_r = (L_hat (x) I_n) x`` together with the
controller states.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NotDecentralizedError, NumericalError
from .graph import AgentGraph, laplacian, reduced_laplacian
from .matcore import as_matrix, block_diag, pseudo_inverse
from .uncertainty import UncertaintyModel, UncertaintyRealization, perturbation_matrix

STRUCT_TOL = 1e-10
MASK_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class AgentDynamics:
    a_tilde: np.ndarray
    b_list: tuple
    c_tilde: np.ndarray

    def __post_init__(self):
        a = as_matrix(self.a_tilde, "A")
        if a.shape[0] != a.shape[1]:
            raise DimensionError(f"A must be square, got {a.shape}")
        c = as_matrix(self.c_tilde, "C")
        if c.shape[1] != a.shape[0]:
            raise DimensionError(f"C must have {a.shape[0]} columns, got {c.shape}")
        bs = []
        for i, b in enumerate(self.b_list):
            b = np.array(b, dtype=float)
            if b.ndim == 1:
                b = b.reshape(-1, 1)
            b = as_matrix(b, f"agents[{i}].B")
            if b.shape[0] != a.shape[0]:
                raise DimensionError(f"agents[{i}].B must have {a.shape[0]} rows, got {b.shape}")
            if bs and b.shape != bs[0].shape:
                raise DimensionError(f"agents[{i}].B has shape {b.shape}, expected {bs[0].shape}")
            bs.append(b)
        if not bs:
            raise DimensionError("at least one agent is required")
        object.__setattr__(self, "a_tilde", a)
        object.__setattr__(self, "c_tilde", c)
        object.__setattr__(self, "b_list", tuple(bs))

    @property
    def n(self) -> int:
        return self.a_tilde.shape[0]

    @property
    def l(self) -> int:
        return self.b_list[0].shape[1]

    @property
    def q(self) -> int:
        return self.c_tilde.shape[0]

    def __eq__(self, other):
        return (isinstance(other, AgentDynamics)
                and np.array_equal(self.a_tilde, other.a_tilde)
                and np.array_equal(self.c_tilde, other.c_tilde)
                and len(self.b_list) == len(other.b_list)
                and all(np.array_equal(x, y) for x, y in zip(self.b_list, other.b_list)))


@dataclass(frozen=True)
class FomasProblem:
    dynamics: AgentDynamics
    graph: AgentGraph
    alpha: float
    n_c: int = 0
    uncertainty: UncertaintyModel | None = None
    realization: UncertaintyRealization | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0,1), got {self.alpha}")
        if self.n_c < 0 or int(self.n_c) != self.n_c:
            raise ValueError(f"n_c must be a nonnegative integer, got {self.n_c}")
        if self.graph.n_agents != len(self.dynamics.b_list):
            raise DimensionError(
                f"adjacency is {self.graph.n_agents}x{self.graph.n_agents} but {len(self.dynamics.b_list)} agents are given"
            )
        if self.uncertainty is not None:
            u = self.uncertainty
            if u.left_factor.shape != (self.n, u.m0) or u.right_factor.shape != (u.m0, self.n):
                raise DimensionError(
                    f"uncertainty factors must be {self.n}x{u.m0} and {u.m0}x{self.n}, "
                    f"got {u.left_factor.shape} and {u.right_factor.shape}"
                )
        if self.realization is not None:
            if len(self.realization) != self.n_agents:
                raise DimensionError(f"expected {self.n_agents} deltas, got {len(self.realization)}")
            m0 = self.uncertainty.m0 if self.uncertainty is not None else None
            for i, d in enumerate(self.realization.per_agent_delta):
                if m0 is not None and d.shape != (m0, m0):
                    raise DimensionError(f"delta[{i}] must be {m0}x{m0}, got {d.shape}")

    @property
    def n_agents(self) -> int:
        return self.graph.n_agents

    @property
    def n(self) -> int:
        return self.dynamics.n

    @property
    def l(self) -> int:
        return self.dynamics.l

    @property
    def q(self) -> int:
        return self.dynamics.q

    @property
    def n_cl(self) -> int:
        return (self.n_agents - 1) * self.n + self.n_agents * self.n_c

    def nominal(self) -> "FomasProblem":
        return FomasProblem(self.dynamics, self.graph, self.alpha, self.n_c)

    def with_order(self, n_c: int) -> "FomasProblem":
        return FomasProblem(self.dynamics, self.graph, self.alpha, n_c, self.uncertainty, self.realization)


def _shaped(m, shape, name) -> np.ndarray:
    arr = np.asarray(m, dtype=float)
    if arr.size != shape[0] * shape[1] or (arr.ndim == 2 and arr.size and arr.shape != shape):
        raise DimensionError(f"{name} must be {shape[0]}x{shape[1]}, got shape {arr.shape}")
    return arr.reshape(shape)


@dataclass(frozen=True, eq=False)
class ControllerBlock:
    """One agent's controller; ``n_c = 0`` leaves only the static gain ``d_c``."""

    a_c: np.ndarray
    b_c: np.ndarray
    c_c: np.ndarray
    d_c: np.ndarray

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.d_c, dtype=float))
        l, q = d.shape
        a = np.asarray(self.a_c, dtype=float)
        n_c = 0 if a.size == 0 else a.shape[0]
        a = _shaped(a, (n_c, n_c), "A_c")
        b = _shaped(self.b_c, (n_c, q), "B_c")
        c = _shaped(self.c_c, (l, n_c), "C_c")
        for name, arr in (("A_c", a), ("B_c", b), ("C_c", c), ("D_c", d)):
            if not np.all(np.isfinite(arr)):
                raise NumericalError(f"{name} contains non-finite entries")
        for name, arr in (("a_c", a), ("b_c", b), ("c_c", c), ("d_c", d)):
            object.__setattr__(self, name, arr)

    @classmethod
    def static(cls, d_c) -> "ControllerBlock":
        d = np.atleast_2d(np.asarray(d_c, dtype=float))
        return cls(np.zeros((0, 0)), np.zeros((0, d.shape[1])), np.zeros((d.shape[0], 0)), d)

    @property
    def n_c(self) -> int:
        return self.a_c.shape[0]

    def __eq__(self, other):
        return isinstance(other, ControllerBlock) and all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in ("a_c", "b_c", "c_c", "d_c"))


@dataclass(frozen=True, eq=False)
class DecentralizedController:
    blocks: tuple

    def __post_init__(self):
        blocks = tuple(self.blocks)
        if not blocks:
            raise DimensionError("controller needs at least one block")
        shapes = {(b.n_c, b.d_c.shape) for b in blocks}
        if len(shapes) != 1:
            raise DimensionError(f"controller blocks disagree in order or I/O size: {sorted(shapes)}")
        object.__setattr__(self, "blocks", blocks)

    @property
    def n_c(self) -> int:
        return self.blocks[0].n_c

    @property
    def a_c(self):
        return block_diag(*[b.a_c for b in self.blocks])

    @property
    def b_c(self):
        return block_diag(*[b.b_c for b in self.blocks])

    @property
    def c_c(self):
        return block_diag(*[b.c_c for b in self.blocks])

    @property
    def d_c(self):
        return block_diag(*[b.d_c for b in self.blocks])

    def k_matrix(self) -> np.ndarray:
        """``K = [[D_c, C_c], [B_c, A_c]]``."""
        return np.block([[self.d_c, self.c_c], [self.b_c, self.a_c]])

    @classmethod
    def zeros(cls, p: FomasProblem) -> "DecentralizedController":
        blk = ControllerBlock(np.zeros((p.n_c, p.n_c)), np.zeros((p.n_c, p.q)),
                              np.zeros((p.l, p.n_c)), np.zeros((p.l, p.q)))
        return cls((blk,) * p.n_agents)

    def __eq__(self, other):
        return isinstance(other, DecentralizedController) and self.blocks == other.blocks


@dataclass(frozen=True, eq=False)
class ClosedLoopSystem:
    a_cl: np.ndarray
    m_channel: np.ndarray
    r_channel: np.ndarray
    alpha: float
    n_relative: int  # (N-1) n
    n_controller: int  # N n_c

    @property
    def n_cl(self) -> int:
        return self.a_cl.shape[0]

    def perturbed(self, delta) -> np.ndarray:
        """``A_cl + M (I_{N-1} (x) delta) R``."""
        if self.m_channel.shape[1] == 0:
            return self.a_cl.copy()
        d = as_matrix(delta, "delta")
        reps = self.m_channel.shape[1] // d.shape[0]
        return self.a_cl + self.m_channel @ np.kron(np.eye(reps), d) @ self.r_channel


@dataclass(frozen=True, eq=False)
class Reduction:
    """Reduced-coordinate operators shared by closed-loop assembly and synthesis."""

    l_hat: np.ndarray
    l_hat_n: np.ndarray
    l_hat_n_pinv: np.ndarray
    c_r: np.ndarray
    lb: np.ndarray  # L_hat_n B
    a_rel: np.ndarray  # I_{N-1} (x) A


def augment(p: FomasProblem):
    """Stacked plant matrices ``(I_N (x) A, diag(B_i), I_N (x) C, L (x) I_q)``."""
    n_agents = p.n_agents
    a_n = np.kron(np.eye(n_agents), p.dynamics.a_tilde)
    b = block_diag(*p.dynamics.b_list)
    c_n = np.kron(np.eye(n_agents), p.dynamics.c_tilde)
    l_q = np.kron(laplacian(p.graph), np.eye(p.q))
    return a_n, b, c_n, l_q


def commutation_check(p: FomasProblem, tol: float = STRUCT_TOL) -> bool:
    """``L_q C_N = C_N L_n`` and ``L_n A_N = A_N L_n``."""
    a_n, _, c_n, l_q = augment(p)
    l_n = np.kron(laplacian(p.graph), np.eye(p.n))
    ok_c = np.max(np.abs(l_q @ c_n - c_n @ l_n)) <= tol
    ok_a = np.max(np.abs(l_n @ a_n - a_n @ l_n)) <= tol
    return bool(ok_c and ok_a)


def reduction(p: FomasProblem) -> Reduction:
    lap = laplacian(p.graph)
    pair = reduced_laplacian(lap)
    n = p.n
    l_hat_n = np.kron(pair.reduced, np.eye(n))
    l_hat_n_pinv = pseudo_inverse(l_hat_n)
    a_n, b, c_n, _ = augment(p)
    l_n = np.kron(lap, np.eye(n))
    a_rel = np.kron(np.eye(p.n_agents - 1), p.dynamics.a_tilde)
    resid = np.max(np.abs(l_hat_n @ a_n @ l_hat_n_pinv - a_rel), initial=0.0)
    if resid > 1e-8 * max(1.0, np.max(np.abs(a_rel))):
        raise NumericalError(f"reduction identity violated (residual {resid:.2e})")
    return Reduction(
        l_hat=pair.reduced,
        l_hat_n=l_hat_n,
        l_hat_n_pinv=l_hat_n_pinv,
        c_r=c_n @ l_n @ l_hat_n_pinv,
        lb=l_hat_n @ b,
        a_rel=a_rel,
    )


def uncertainty_channels(p: FomasProblem) -> tuple[np.ndarray, np.ndarray]:
    """``M = [I (x) M~^T | 0]^T`` and ``R = [I (x) R~ | 0]``; empty for nominal problems."""
    nr = (p.n_agents - 1) * p.n
    nk = p.n_agents * p.n_c
    if p.uncertainty is None:
        return np.zeros((nr + nk, 0)), np.zeros((0, nr + nk))
    eye = np.eye(p.n_agents - 1)
    m = np.vstack([np.kron(eye, p.uncertainty.left_factor),
                   np.zeros((nk, (p.n_agents - 1) * p.uncertainty.m0))])
    r = np.hstack([np.kron(eye, p.uncertainty.right_factor),
                   np.zeros(((p.n_agents - 1) * p.uncertainty.m0, nk))])
    return m, r


def _check_controller(p: FomasProblem, k: DecentralizedController) -> None:
    if len(k.blocks) != p.n_agents:
        raise DimensionError(f"controller has {len(k.blocks)} blocks, problem has {p.n_agents} agents")
    blk = k.blocks[0]
    if blk.d_c.shape != (p.l, p.q):
        raise DimensionError(f"D_c blocks must be {p.l}x{p.q}, got {blk.d_c.shape}")
    if k.n_c != p.n_c:
        raise DimensionError(f"controller order {k.n_c} differs from problem n_c = {p.n_c}")


def closed_loop(p: FomasProblem, k: DecentralizedController, red: Reduction | None = None) -> ClosedLoopSystem:
    """Nominal reduced closed loop plus uncertainty channels."""
    _check_controller(p, k)
    red = red or reduction(p)
    a_cl = np.block([
        [red.a_rel + red.lb @ k.d_c @ red.c_r, red.lb @ k.c_c],
        [k.b_c @ red.c_r, k.a_c],
    ])
    m, r = uncertainty_channels(p)
    return ClosedLoopSystem(a_cl, m, r, p.alpha, red.a_rel.shape[0], p.n_agents * p.n_c)


@dataclass(frozen=True, eq=False)
class KDecomposition:
    a_k: np.ndarray
    b_k: np.ndarray
    c_k: np.ndarray
    mask: np.ndarray

    def a_cl(self, k_matrix) -> np.ndarray:
        return self.a_k + self.b_k @ k_matrix @ self.c_k


def decentralized_mask(p: FomasProblem) -> np.ndarray:
    """0/1 pattern of ``K = [[D_c, C_c], [B_c, A_c]]`` allowed by per-agent blocks."""
    n_agents, l, q, n_c = p.n_agents, p.l, p.q, p.n_c
    eye = np.eye(n_agents)
    return np.block([
        [np.kron(eye, np.ones((l, q))), np.kron(eye, np.ones((l, n_c)))],
        [np.kron(eye, np.ones((n_c, q))), np.kron(eye, np.ones((n_c, n_c)))],
    ])


def k_decomposition(p: FomasProblem, red: Reduction | None = None) -> KDecomposition:
    """Split the closed loop as ``A_K + B_K K C_K``; ``A_K`` uses the nominal drift."""
    red = red or reduction(p)
    nk = p.n_agents * p.n_c
    a_k = block_diag(red.a_rel, np.zeros((nk, nk)))
    b_k = block_diag(red.lb, np.eye(nk))
    c_k = block_diag(red.c_r, np.eye(nk))
    return KDecomposition(a_k, b_k, c_k, decentralized_mask(p))


def controller_from_k(k_matrix, p: FomasProblem) -> DecentralizedController:
    """Partition ``K`` into per-agent controller blocks."""
    km = np.atleast_2d(np.asarray(k_matrix, dtype=float))
    mask = decentralized_mask(p)
    if km.shape != mask.shape:
        raise DimensionError(f"K must be {mask.shape[0]}x{mask.shape[1]}, got {km.shape}")
    off = np.abs(km[mask == 0])
    if off.size and off.max() > MASK_TOL:
        raise NotDecentralizedError(f"K couples different agents (largest off-pattern entry {off.max():.3e})")
    n_agents, l, q, n_c = p.n_agents, p.l, p.q, p.n_c
    rl, cq = n_agents * l, n_agents * q
    blocks = []
    for i in range(n_agents):
        d = km[i * l:(i + 1) * l, i * q:(i + 1) * q]
        c = km[i * l:(i + 1) * l, cq + i * n_c:cq + (i + 1) * n_c]
        b = km[rl + i * n_c:rl + (i + 1) * n_c, i * q:(i + 1) * q]
        a = km[rl + i * n_c:rl + (i + 1) * n_c, cq + i * n_c:cq + (i + 1) * n_c]
        blocks.append(ControllerBlock(a.copy(), b.copy(), c.copy(), d.copy()))
    return DecentralizedController(tuple(blocks))


def full_loop_matrix(p: FomasProblem, k: DecentralizedController,
                     realization: UncertaintyRealization | None = None) -> np.ndarray:
    """System matrix of the unreduced loop over ``[x; x_c]`` (dimension ``N n + N n_c``).

    Each agent's drift is perturbed by its own ``delta_i`` when a realization is
    given together with an uncertainty model.
    """
    _check_controller(p, k)
    a_n, b, c_n, l_q = augment(p)
    if realization is not None and p.uncertainty is not None:
        a_n = a_n + block_diag(*[perturbation_matrix(p.uncertainty, d) for d in realization.per_agent_delta])
    return np.block([
        [a_n + b @ k.d_c @ l_q @ c_n, b @ k.c_c],
        [k.b_c @ l_q @ c_n, k.a_c],
    ])
