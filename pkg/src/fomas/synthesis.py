"""Controller synthesis by homotopy continuation on the consensus matrix inequality.

The robust condition is bilinear in the certificate ``X = (X11, X12, X21, X22)``
and the stacked gain ``K``. Starting from a problem in which the closed-loop
matrix is replaced by the Hurwitz matrix ``A_K - Q``, the blend parameter
``eta`` is raised from 0 to 1 while alternately solving for ``(X, mu)`` with
``K`` fixed and for ``K`` with ``(X, mu)`` fixed. Each sub-problem is an LMI.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import lmi
from .errors import HomotopyStalled
from .graph import is_connected
from .lmi import AffineLmiSystem, LmiBlock, VarLayout, linearize
from .matcore import spectrum
from .model import (ClosedLoopSystem, DecentralizedController, FomasProblem, closed_loop,
                    controller_from_k, k_decomposition, reduction, uncertainty_channels)
from .stability import bkron, bsym, pair_block, sector_margin, sector_sum, theta_blocks, x_layout, THETA_KEYS
from .uncertainty import worst_case_delta

log = logging.getLogger(__name__)

X_NAMES = ("X11", "X12", "X21", "X22")


@dataclass(frozen=True)
class HomotopyConfig:
    t_steps: int = 10
    max_refinements: int = 6
    eps_feas: float = lmi.DEFAULT_EPS_FEAS
    q_shift: float = 1.0
    mu_min: float = 1e-6
    x_radius: float = 1e3    # norm bound on (X, mu) in the X-step
    k_radius: float = 1e2    # norm bound on the free gain entries in the K-step
    rel_gap: float = 0.05    # relative accuracy of each sub-problem optimum
    max_iter: int = lmi.DEFAULT_MAX_ITER

    def __post_init__(self):
        if self.t_steps < 1:
            raise ValueError("t_steps must be >= 1")
        if self.q_shift <= 0:
            raise ValueError("q_shift must be positive")
        if self.eps_feas <= 0:
            raise ValueError("eps_feas must be positive")
        if self.max_refinements < 0:
            raise ValueError("max_refinements must be >= 0")


@dataclass(frozen=True, eq=False)
class SynthesisResult:
    controller: DecentralizedController
    x_matrices: dict
    mu: float
    eta_trace: list
    robustly_stable: bool
    robust: bool = True
    verification: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# block assembly (batched over a leading axis)


def _robust_main(a, xs, mu, thetas, m_ch, r_ch, j_matrix):
    """Summed 3x3 block matrix of the robust condition.

    ``a`` is ``(batch, n, n)`` or ``(n, n)``; ``xs`` values are ``(batch, n, n)``;
    ``mu`` is ``(batch,)``.
    """
    batch = mu.shape[0]
    k = m_ch.shape[1]
    e = sector_sum(a, xs, thetas, prefix="X")
    theta_sum = sum(thetas[ij] for ij in THETA_KEYS)
    top_mid = np.broadcast_to(np.kron(theta_sum, m_ch), (batch,) + (e.shape[-1], 2 * k))
    top_right = sum(bkron(np.eye(2), np.swapaxes(xs[f"X{i}{j}"], -1, -2) @ r_ch.T) for i, j in THETA_KEYS)
    eye = np.eye(2 * k)
    w = np.kron(np.eye(2), np.kron(np.eye(k // j_matrix.shape[0]), j_matrix))
    w = w + w.T
    mu_i = mu[:, None, None] * eye
    n_terms = len(THETA_KEYS)
    mid = -n_terms * mu_i
    cross = n_terms * mu_i
    y = n_terms * (-w - mu_i)
    row1 = np.concatenate([e, top_mid, top_right], axis=-1)
    row2 = np.concatenate([np.swapaxes(top_mid, -1, -2), mid, cross], axis=-1)
    row3 = np.concatenate([np.swapaxes(top_right, -1, -2), cross, y], axis=-1)
    return np.concatenate([row1, row2, row3], axis=-2)


def _positivity(xs):
    return [-pair_block(xs["X11"], xs["X12"]), -pair_block(xs["X21"], xs["X22"])]


def _channels(p: FomasProblem):
    if p.uncertainty is None:
        raise ValueError("robust constraints need an uncertainty model")
    m_ch, r_ch = uncertainty_channels(p)
    return m_ch, r_ch, p.uncertainty.j_matrix


def _xmu_layout(n_cl: int, with_mu: bool) -> VarLayout:
    lay = x_layout(n_cl, prefix="X")
    return lay.scalar("mu") if with_mu else lay


def _xmu_blocks(p, a_of_batch, robust: bool, mu_min: float):
    """Block function over (X, mu) for a fixed closed-loop matrix."""
    thetas = theta_blocks(p.alpha)
    if robust:
        m_ch, r_ch, j = _channels(p)

    def blocks(v):
        xs = {k: v[k] for k in X_NAMES}
        a = a_of_batch
        if robust:
            main = _robust_main(a, xs, v["mu"], thetas, m_ch, r_ch, j)
            mu_blk = (mu_min - v["mu"])[:, None, None]
            return [main, *_positivity(xs), mu_blk]
        return [sector_sum(a, xs, thetas, prefix="X"), *_positivity(xs)]

    names = ("main", "pos1", "pos2", "mu_min") if robust else ("main", "pos1", "pos2")
    return blocks, names


def theorem1_constraints(p: FomasProblem, k: DecentralizedController, mu_min: float = 1e-6) -> AffineLmiSystem:
    """Robust consensus LMI in ``(X11, X12, X21, X22, mu)`` for a fixed controller."""
    if p.uncertainty is None:
        raise ValueError("theorem1_constraints needs an uncertainty model")
    a_cl = closed_loop(p, k).a_cl
    blocks, names = _xmu_blocks(p, a_cl, True, mu_min)
    return linearize(_xmu_layout(p.n_cl, True), blocks, names)


def corollary1_constraints(p: FomasProblem, k: DecentralizedController) -> AffineLmiSystem:
    """Nominal consensus LMI in ``(X11, X12, X21, X22)`` for a fixed controller."""
    a_cl = closed_loop(p.nominal(), k).a_cl
    blocks, names = _xmu_blocks(p, a_cl, False, 0.0)
    return linearize(_xmu_layout(p.n_cl, False), blocks, names)


def default_q(p: FomasProblem, q_shift: float = 1.0, red=None) -> np.ndarray:
    """``Q = A_K + c I`` so that ``A_K - Q = -c I``."""
    kd = k_decomposition(p, red)
    return kd.a_k + q_shift * np.eye(kd.a_k.shape[0])


def f1_constraints(p: FomasProblem, q=None, robust: bool = True, mu_min: float = 1e-6,
                   red=None) -> AffineLmiSystem:
    """Starting system: the consensus LMI with ``A_cl`` replaced by ``A_K - Q``."""
    kd = k_decomposition(p, red)
    q = default_q(p, red=red) if q is None else np.asarray(q, dtype=float)
    shifted = kd.a_k - q
    if np.max(spectrum(shifted).real) >= 0:
        raise ValueError("A_K - Q must be Hurwitz")
    blocks, names = _xmu_blocks(p, shifted, robust, mu_min)
    return linearize(_xmu_layout(p.n_cl, robust), blocks, names)


def k_step_constraints(p: FomasProblem, x_fixed: dict, mu_fixed: float | None, eta: float = 1.0,
                       q=None, robust: bool = True, red=None) -> AffineLmiSystem:
    """Main block of the blended inequality as an LMI in the free entries of ``K``.

    The positivity and ``mu`` blocks do not involve ``K`` and are omitted.
    """
    red = red or reduction(p)
    kd = k_decomposition(p, red)
    q = default_q(p, red=red) if q is None else np.asarray(q, dtype=float)
    shifted = kd.a_k - q
    thetas = theta_blocks(p.alpha)
    xs1 = {name: np.asarray(x_fixed[name], dtype=float)[None] for name in X_NAMES}
    layout = VarLayout().masked("K", kd.mask)
    if robust:
        m_ch, r_ch, j = _channels(p)

    def blocks(v):
        kk = v["K"]
        a = (1.0 - eta) * shifted + eta * (kd.a_k + kd.b_k @ kk @ kd.c_k)
        batch = kk.shape[0]
        xs = {name: np.broadcast_to(xs1[name], (batch,) + xs1[name].shape[1:]) for name in X_NAMES}
        if robust:
            mu = np.full(batch, float(mu_fixed))
            return [_robust_main(a, xs, mu, thetas, m_ch, r_ch, j)]
        return [sector_sum(a, xs, thetas, prefix="X")]

    return linearize(layout, blocks, ("main",))


def homotopy_blend(f1: AffineLmiSystem, f2: AffineLmiSystem, eta: float) -> AffineLmiSystem:
    """Blockwise ``(1 - eta) F1 + eta F2``."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0,1], got {eta}")
    if f1.n_vars != f2.n_vars or len(f1.blocks) != len(f2.blocks):
        raise ValueError("systems differ in decision dimension or block count")
    if eta == 0.0:
        return f1
    if eta == 1.0:
        return f2
    out = []
    for b1, b2 in zip(f1.blocks, f2.blocks):
        if b1.size != b2.size:
            raise ValueError(f"block {b1.name!r} sizes differ: {b1.size} vs {b2.size}")
        out.append(LmiBlock((1 - eta) * b1.f0 + eta * b2.f0, (1 - eta) * b1.coeffs + eta * b2.coeffs, b1.name))
    return AffineLmiSystem(f1.n_vars, tuple(out), f1.var_labels)


# ---------------------------------------------------------------------------
# verification


def verification_deltas(p: FomasProblem, extra=()) -> list[tuple[str, np.ndarray]]:
    """Listed realizations, the worst case among them, then any extra samples."""
    out = []
    if p.uncertainty is None:
        return out
    if p.realization is not None and len(p.realization):
        for i, d in enumerate(p.realization.per_agent_delta):
            out.append((f"agent{i + 1}", d))
        out.append(("worst", worst_case_delta(p.realization)))
    for i, d in enumerate(extra):
        out.append((f"sample{i}", np.asarray(d, dtype=float).reshape(p.uncertainty.m0, p.uncertainty.m0)))
    return out


def verify_closed_loop(cl: ClosedLoopSystem, deltas) -> dict:
    """Sector margins (radians) for the nominal loop and each ``(label, delta)``."""
    out = {"nominal": sector_margin(cl.a_cl, cl.alpha)}
    for label, d in deltas:
        out[label] = sector_margin(cl.perturbed(d), cl.alpha)
    return out


def verify(p: FomasProblem, k: DecentralizedController, extra=()) -> dict:
    return verify_closed_loop(closed_loop(p, k), verification_deltas(p, extra))


# ---------------------------------------------------------------------------
# continuation


def _full_margin(blocks_fn, v) -> float:
    return max(float(np.linalg.eigvalsh(b[0])[-1]) for b in blocks_fn(v))


def synthesize(p: FomasProblem, cfg: HomotopyConfig = HomotopyConfig(), robust: bool = True) -> SynthesisResult:
    """Design a decentralized controller of order ``p.n_c``.

    Raises :class:`~fomas.errors.HomotopyStalled` if the step size has been
    halved ``cfg.max_refinements`` times without progress.
    """
    if robust and p.uncertainty is None:
        raise ValueError("robust synthesis needs an uncertainty model (use robust=False)")
    if not is_connected(p.graph):
        from .errors import ConnectivityError
        raise ConnectivityError()
    red = reduction(p)
    kd = k_decomposition(p, red)
    q = default_q(p, cfg.q_shift, red)
    shifted = kd.a_k - q
    xlay = _xmu_layout(p.n_cl, robust)
    klay = VarLayout().masked("K", kd.mask)

    def sub_solve(sys, x0, radius):
        return lmi.solve(sys, cfg.eps_feas, cfg.max_iter, target=-np.inf, radius=radius,
                         x0=x0, rel_gap=cfg.rel_gap)

    def x_system(kmat, eta):
        a = (1.0 - eta) * shifted + eta * kd.a_cl(kmat)
        blocks, names = _xmu_blocks(p, a, robust, cfg.mu_min)
        return linearize(xlay, blocks, names), blocks

    t_start = time.perf_counter()
    f1, _ = x_system(np.zeros(kd.mask.shape), 0.0)
    res = sub_solve(f1, None, cfg.x_radius)
    if not res.feasible:
        raise HomotopyStalled(0.0, res.margin)
    xv = res.point
    kv = np.zeros(klay.n_vars)
    trace = [(0.0, res.margin)]
    log.info("step 0 eta=0.000 sub=F1 margin=%.3e t=%.2fs", res.margin, time.perf_counter() - t_start)

    eta, step, refinements, idx = 0.0, 1.0 / cfg.t_steps, 0, 0
    best_margin = res.margin
    while eta < 1.0:
        eta_new = min(1.0, eta + step)
        if 1.0 - eta_new < 1e-12:
            eta_new = 1.0
        kmat = klay.unpack(kv)["K"]
        sub = []
        xsys, xblocks = x_system(kmat, eta_new)
        xr = sub_solve(xsys, xv, cfg.x_radius)
        if xr.feasible:
            xv = xr.point
            sub.append("X")
        vals = xlay.unpack(xv)
        xs = {name: vals[name] for name in X_NAMES}
        mu = float(vals["mu"]) if robust else None
        ksys = k_step_constraints(p, xs, mu, eta_new, q, robust, red)
        kr = sub_solve(ksys, kv, cfg.k_radius)
        if kr.feasible:
            kv = kr.point
            sub.append("K")
        if sub:
            kmat = klay.unpack(kv)["K"]
            _, blocks_now = x_system(kmat, eta_new)
            margin = _full_margin(blocks_now, xlay.unpack(xv[None]))
        else:
            margin = min(xr.margin, kr.margin)
        best_margin = min(best_margin, margin) if sub else best_margin
        idx += 1
        log.info("step %d eta=%.4f sub=%s margin=%.3e t=%.2fs", idx, eta_new, "+".join(sub) or "-",
                 margin, time.perf_counter() - t_start)
        if sub and margin <= -cfg.eps_feas:
            eta = eta_new
            trace.append((eta, margin))
            continue
        refinements += 1
        if refinements > cfg.max_refinements:
            raise HomotopyStalled(eta_new, margin)
        step /= 2.0

    kmat = klay.unpack(kv)["K"]
    controller = controller_from_k(kmat, p)
    vals = xlay.unpack(xv)
    x_mats = {name: vals[name] for name in X_NAMES}
    mu = float(vals["mu"]) if robust else 0.0
    checks = verify(p, controller) if robust else {"nominal": sector_margin(closed_loop(p, controller).a_cl, p.alpha)}
    from .stability import MARGIN_TOL
    ok = all(m > MARGIN_TOL for m in checks.values())
    log.info("verification: %s -> %s", ", ".join(f"{k}={v:.4f}" for k, v in checks.items()),
             "robustly stable" if ok else "NOT stable")
    return SynthesisResult(controller, x_mats, mu, trace, ok, robust, checks)


def certificate_margin(p: FomasProblem, result: SynthesisResult, mu_min: float = 1e-6) -> float:
    """Re-evaluate the returned certificate on a freshly assembled constraint system."""
    if result.robust:
        sys = theorem1_constraints(p, result.controller, mu_min)
        point = _xmu_layout(p.n_cl, True).pack({**result.x_matrices, "mu": result.mu})
    else:
        sys = corollary1_constraints(p, result.controller)
        point = _xmu_layout(p.n_cl, False).pack(result.x_matrices)
    return lmi.eigen_margin(sys, point)
