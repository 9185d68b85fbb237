"""Feasibility solver for affine symmetric matrix inequalities.

A system is a list of blocks ``F_b(x) = F_b0 + sum_k x_k F_bk`` that must all
be negative definite. :func:`solve` minimises the largest eigenvalue ``t`` over
all blocks with a log-det barrier path-following method and stops as soon as
``t`` drops below the requested margin. The decision vector is confined to a
large ball so that homogeneous systems stay bounded.

Matrix-valued decision variables are described by :class:`VarLayout`;
:func:`linearize` turns any function of those variables that is affine into
explicit coefficient matrices by probing it at the basis vectors.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, NumericalError

log = logging.getLogger(__name__)

DEFAULT_EPS_FEAS = 1e-7
DEFAULT_MAX_ITER = 5000
DEFAULT_RADIUS = 1e6


class Status(str, enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible_certificate_absent"
    MAX_ITER = "max_iter"


@dataclass(frozen=True, eq=False)
class LmiBlock:
    """``f0 + sum_k x_k coeffs[k]``, required to be negative definite."""

    f0: np.ndarray
    coeffs: np.ndarray  # (n_vars, m, m)
    name: str = ""

    def __post_init__(self):
        f0 = np.asarray(self.f0, dtype=float)
        coeffs = np.asarray(self.coeffs, dtype=float)
        if f0.ndim != 2 or f0.shape[0] != f0.shape[1]:
            raise DimensionError(f"block {self.name!r}: constant term must be square, got {f0.shape}")
        if coeffs.ndim != 3 or coeffs.shape[1:] != f0.shape:
            raise DimensionError(f"block {self.name!r}: coefficients shape {coeffs.shape} does not match {f0.shape}")
        if not (np.all(np.isfinite(f0)) and np.all(np.isfinite(coeffs))):
            raise NumericalError(f"block {self.name!r} has non-finite coefficients")
        object.__setattr__(self, "f0", 0.5 * (f0 + f0.T))
        object.__setattr__(self, "coeffs", 0.5 * (coeffs + coeffs.transpose(0, 2, 1)))

    @property
    def size(self) -> int:
        return self.f0.shape[0]

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return self.f0 + np.tensordot(x, self.coeffs, axes=1)

    def scaled(self, c: float) -> "LmiBlock":
        return LmiBlock(c * self.f0, c * self.coeffs, self.name)


@dataclass(frozen=True, eq=False)
class AffineLmiSystem:
    n_vars: int
    blocks: tuple
    var_labels: tuple = ()

    def __post_init__(self):
        blocks = tuple(self.blocks)
        for b in blocks:
            if b.coeffs.shape[0] != self.n_vars:
                raise DimensionError(
                    f"block {b.name!r} has {b.coeffs.shape[0]} coefficient matrices, system has {self.n_vars} variables"
                )
        object.__setattr__(self, "blocks", blocks)
        labels = tuple(self.var_labels) or tuple(f"x{k}" for k in range(self.n_vars))
        object.__setattr__(self, "var_labels", labels)

    def block(self, name: str) -> LmiBlock:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    def evaluate(self, x) -> list[np.ndarray]:
        x = np.asarray(x, dtype=float)
        return [b.evaluate(x) for b in self.blocks]


@dataclass(frozen=True, eq=False)
class FeasibilityResult:
    status: Status
    point: np.ndarray | None
    margin: float
    iterations: int = 0

    @property
    def feasible(self) -> bool:
        return self.status is Status.FEASIBLE


# ---------------------------------------------------------------------------
# matrix-valued decision variables


@dataclass(frozen=True)
class _Var:
    name: str
    kind: str  # "sym" | "skew" | "scalar" | "masked"
    shape: tuple
    offset: int
    size: int
    index: tuple = ()  # (rows, cols) arrays of free positions for "masked"


@dataclass
class VarLayout:
    """Packing of named matrix variables into one flat decision vector."""

    vars: list = field(default_factory=list)
    n_vars: int = 0

    def _add(self, name, kind, shape, size, index=()):
        if any(v.name == name for v in self.vars):
            raise ValueError(f"duplicate variable {name!r}")
        self.vars.append(_Var(name, kind, tuple(shape), self.n_vars, size, index))
        self.n_vars += size

    def symmetric(self, name: str, n: int) -> "VarLayout":
        self._add(name, "sym", (n, n), n * (n + 1) // 2)
        return self

    def skew(self, name: str, n: int) -> "VarLayout":
        self._add(name, "skew", (n, n), n * (n - 1) // 2)
        return self

    def scalar(self, name: str) -> "VarLayout":
        self._add(name, "scalar", (), 1)
        return self

    def masked(self, name: str, mask) -> "VarLayout":
        """A general matrix whose free entries are the nonzeros of ``mask``."""
        mask = np.asarray(mask) != 0
        rows, cols = np.nonzero(mask)
        self._add(name, "masked", mask.shape, rows.size, (rows, cols))
        return self

    def labels(self) -> tuple:
        out = []
        for v in self.vars:
            if v.kind == "scalar":
                out.append(v.name)
            elif v.kind == "masked":
                out.extend(f"{v.name}[{r},{c}]" for r, c in zip(*v.index))
            else:
                iu = np.triu_indices(v.shape[0], 0 if v.kind == "sym" else 1)
                out.extend(f"{v.name}[{r},{c}]" for r, c in zip(*iu))
        return tuple(out)

    def unpack(self, x: np.ndarray) -> dict:
        """Unpack ``x`` of shape ``(n_vars,)`` or ``(batch, n_vars)``; leading dims are kept."""
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        out = {}
        for v in self.vars:
            seg = x[..., v.offset:v.offset + v.size]
            if v.kind == "scalar":
                out[v.name] = seg[..., 0]
                continue
            mat = np.zeros(lead + v.shape)
            if v.kind == "masked":
                mat[..., v.index[0], v.index[1]] = seg
            else:
                n = v.shape[0]
                iu = np.triu_indices(n, 0 if v.kind == "sym" else 1)
                mat[..., iu[0], iu[1]] = seg
                sign = 1.0 if v.kind == "sym" else -1.0
                mat[..., iu[1], iu[0]] = sign * seg
            out[v.name] = mat
        return out

    def pack(self, values: dict) -> np.ndarray:
        x = np.zeros(self.n_vars)
        for v in self.vars:
            val = np.asarray(values[v.name], dtype=float)
            if v.kind == "scalar":
                x[v.offset] = float(val)
            elif v.kind == "masked":
                x[v.offset:v.offset + v.size] = val[v.index[0], v.index[1]]
            else:
                iu = np.triu_indices(v.shape[0], 0 if v.kind == "sym" else 1)
                x[v.offset:v.offset + v.size] = val[iu]
        return x


def linearize(layout: VarLayout, blocks_fn: Callable[[dict], Sequence[np.ndarray]],
              names: Sequence[str] = ()) -> AffineLmiSystem:
    """Build an :class:`AffineLmiSystem` from an affine block function.

    ``blocks_fn`` receives unpacked variables carrying a leading batch axis and
    must return one ``(batch, m, m)`` array per block. It is called once on the
    zero point and once on the stacked unit vectors.
    """
    d = layout.n_vars
    zero = blocks_fn(layout.unpack(np.zeros((1, d))))
    basis = blocks_fn(layout.unpack(np.eye(d))) if d else [np.zeros((0,) + z.shape[1:]) for z in zero]
    names = list(names) + [f"block{i}" for i in range(len(names), len(zero))]
    blocks = []
    for name, f0, fk in zip(names, zero, basis):
        blocks.append(LmiBlock(f0[0], fk - f0, name))
    return AffineLmiSystem(d, tuple(blocks), layout.labels())


# ---------------------------------------------------------------------------
# solver


def eigen_margin(sys: AffineLmiSystem, point) -> float:
    """Largest eigenvalue over all blocks at ``point``."""
    x = np.asarray(point, dtype=float).reshape(-1)
    if x.shape[0] != sys.n_vars:
        raise DimensionError(f"point has dimension {x.shape[0]}, system expects {sys.n_vars}")
    return max(float(np.linalg.eigvalsh(f)[-1]) for f in sys.evaluate(x))


def _check_system(sys: AffineLmiSystem):
    for b in sys.blocks:
        if not (np.all(np.isfinite(b.f0)) and np.all(np.isfinite(b.coeffs))):
            raise NumericalError(f"block {b.name!r} has non-finite coefficients")


class _Barrier:
    """Barrier ``tau*t - sum log det(tI - F_b(x)) - log(R^2 - |x|^2)`` over z = (x, t)."""

    def __init__(self, sys: AffineLmiSystem, radius: float):
        self.sys = sys
        self.r2 = radius * radius
        self.d = sys.n_vars
        # upper-triangle packing with sqrt(2) off-diagonal weights turns the
        # Frobenius inner product into a plain dot product
        self.packs = []
        for b in sys.blocks:
            m = b.size
            iu = np.triu_indices(m)
            w = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
            self.packs.append((iu, w))
        self.nu = sum(b.size for b in sys.blocks) + 1

    def slack_factors(self, z):
        """Cholesky factors of every slack block, or None if z is not interior."""
        x, t = z[:-1], z[-1]
        if x @ x >= self.r2:
            return None
        facs = []
        for b in self.sys.blocks:
            s = t * np.eye(b.size) - b.evaluate(x)
            try:
                facs.append(np.linalg.cholesky(s))
            except np.linalg.LinAlgError:
                return None
        return facs

    def value(self, z, tau, facs) -> float:
        x = z[:-1]
        v = tau * z[-1] - np.log(self.r2 - x @ x)
        for lf in facs:
            v -= 2.0 * np.sum(np.log(np.diag(lf)))
        return float(v)

    def derivatives(self, z, tau, facs):
        d = self.d
        x = z[:-1]
        g = np.zeros(d + 1)
        h = np.zeros((d + 1, d + 1))
        g[-1] = tau
        for b, lf, (iu, w) in zip(self.sys.blocks, facs, self.packs):
            li = np.linalg.inv(lf)
            # dS/dx_k = -F_k, dS/dt = I ; G_k = L^{-1} (dS/dz_k) L^{-T}
            gk = -(li @ b.coeffs @ li.T)
            gt = li @ li.T
            flat = np.empty((d + 1, iu[0].size))
            flat[:d] = gk[:, iu[0], iu[1]] * w
            flat[d] = gt[iu] * w
            # grad of -log det S is -tr(S^{-1} dS)
            g[:d] -= np.trace(gk, axis1=1, axis2=2)
            g[d] -= np.trace(gt)
            h += flat @ flat.T
        slack = self.r2 - x @ x
        g[:d] += 2.0 * x / slack
        h[:d, :d] += 2.0 * np.eye(d) / slack + 4.0 * np.outer(x, x) / slack**2
        return g, h


def solve(sys: AffineLmiSystem, eps_feas: float = DEFAULT_EPS_FEAS, max_iter: int = DEFAULT_MAX_ITER,
          *, target: float | None = None, radius: float = DEFAULT_RADIUS,
          x0=None, rel_gap: float | None = None) -> FeasibilityResult:
    """Search for ``x`` with every block's largest eigenvalue below ``-eps_feas``.

    Parameters
    ----------
    sys : AffineLmiSystem
    eps_feas : float
        Required strictness; a returned feasible point has margin ``<= -eps_feas``.
    max_iter : int
        Budget of Newton steps.
    target : float, optional
        Stop once the margin falls below this value instead of ``-eps_feas``.
        Must be ``<= -eps_feas``. Deeper targets give better-centred points.
    radius : float
        Bound on the Euclidean norm of the decision vector.
    x0 : array, optional
        Starting point (defaults to the origin); must lie inside the ball.
    rel_gap : float, optional
        With ``target=-inf`` the margin is minimised over the ball; stop once
        the optimality gap is below ``rel_gap * |t|``.

    Returns
    -------
    FeasibilityResult
        ``INFEASIBLE`` means the barrier path proved that no point in the ball
        reaches margin ``-eps_feas``; it is not a certificate for the unbounded
        problem.
    """
    if eps_feas <= 0:
        raise ValueError("eps_feas must be positive")
    _check_system(sys)
    target = -eps_feas if target is None else min(float(target), -eps_feas)
    d = sys.n_vars
    if not sys.blocks:
        return FeasibilityResult(Status.FEASIBLE, np.zeros(d), -np.inf, 0)

    x = np.zeros(d) if x0 is None else np.array(x0, dtype=float).reshape(d)
    if x @ x >= (0.99 * radius) ** 2:
        x *= 0.5 * radius / np.linalg.norm(x)
    margin = eigen_margin(sys, x)
    best_x, best_margin = x.copy(), margin
    if margin <= target:
        return FeasibilityResult(Status.FEASIBLE, x, margin, 0)
    if d == 0:
        status = Status.FEASIBLE if margin <= -eps_feas else Status.INFEASIBLE
        return FeasibilityResult(status, x, margin, 0)

    bar = _Barrier(sys, radius)
    z = np.append(x, margin + 1.0 + 0.1 * abs(margin))
    tau = 1.0 / (1.0 + abs(margin))
    iters = 0
    while True:
        facs = bar.slack_factors(z)
        for _ in range(200):
            g, h = bar.derivatives(z, tau, facs)
            try:
                dz = -np.linalg.solve(h, g)
            except np.linalg.LinAlgError:
                dz = -np.linalg.lstsq(h, g, rcond=None)[0]
            dec = float(-g @ dz)
            if not np.isfinite(dec):
                raise NumericalError("Newton system became non-finite")
            if dec < 1e-5:
                break
            f0 = bar.value(z, tau, facs)
            step = 1.0
            while step > 1e-12:
                zn = z + step * dz
                fn = bar.slack_factors(zn)
                if fn is not None and bar.value(zn, tau, fn) <= f0 - 0.25 * step * dec:
                    break
                step *= 0.5
            else:
                break
            z, facs = zn, fn
            iters += 1
            margin = eigen_margin(sys, z[:-1])
            if margin < best_margin:
                best_x, best_margin = z[:-1].copy(), margin
            if margin <= target:
                return FeasibilityResult(Status.FEASIBLE, z[:-1].copy(), margin, iters)
            if iters >= max_iter:
                status = Status.FEASIBLE if best_margin <= -eps_feas else Status.MAX_ITER
                return FeasibilityResult(status, best_x, best_margin, iters)
        # duality bound on t - t*, padded for inexact centring
        gap = (bar.nu + np.sqrt(bar.nu)) / tau
        lower = z[-1] - gap
        log.debug("tau=%.3e t=%.6e gap=%.3e margin=%.6e iters=%d", tau, z[-1], gap, best_margin, iters)
        if rel_gap is not None and best_margin <= -eps_feas and gap <= rel_gap * abs(z[-1]):
            return FeasibilityResult(Status.FEASIBLE, best_x, best_margin, iters)
        if lower > -eps_feas or gap < 1e-12 * max(1.0, abs(z[-1])):
            status = Status.FEASIBLE if best_margin <= -eps_feas else Status.INFEASIBLE
            return FeasibilityResult(status, best_x, best_margin, iters)
        tau *= 8.0


def dump(sys: AffineLmiSystem, path) -> None:
    """Text dump: a header line per block, then its matrices row-major with 17 significant digits."""
    def fmt(m):
        return "\n".join(" ".join(f"{v:.17g}" for v in row) for row in m)

    with open(path, "w") as fh:
        fh.write(f"n_vars {sys.n_vars} n_blocks {len(sys.blocks)}\n")
        for b in sys.blocks:
            fh.write(f"block {b.name} size {b.size} n_vars {sys.n_vars}\n")
            fh.write(fmt(b.f0) + "\n")
            for k in range(sys.n_vars):
                fh.write(fmt(b.coeffs[k]) + "\n")
