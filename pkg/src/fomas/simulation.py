"""Caputo fractional simulation of linear loops, consensus errors and error indices.

The integrator works on the shifted variable ``z = y - y(0)``, whose Caputo and
Grunwald-Letnikov derivatives coincide, and keeps the full memory. Two schemes
are available:

``gl_implicit``
    ``h^-a sum_j w_j z_{k-j} = A y_k``. First order for smooth solutions, and
    only ``O(h^a)`` near ``t = 0`` where solutions behave like ``t^a``.
``gl_corrected`` (default)
    Evaluates the right-hand side at ``t_k - a h / 2``, where the GL operator is
    second-order accurate, and adds one starting weight that makes the operator
    exact on ``t^a``. For ``a = 1`` this is the trapezoidal rule.

History sums are split into a near field (direct) and a far field evaluated
blockwise by FFT convolution.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.integrate import trapezoid

from .errors import DimensionError, NumericalError
from .matcore import as_matrix

MAX_STEPS = 10**7
SCHEMES = ("gl_corrected", "gl_implicit")
_BLOCK = 256


@dataclass(frozen=True)
class SimulationConfig:
    step: float = 1e-3
    t_end: float = 30.0
    scheme: str = "gl_corrected"

    def __post_init__(self):
        if not self.step > 0 or not self.t_end > 0:
            raise ValueError("step and t_end must be positive")
        if self.step > self.t_end:
            raise ValueError("step must not exceed t_end")
        if self.t_end / self.step > MAX_STEPS:
            raise ValueError(f"more than {MAX_STEPS} steps requested")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.step))


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (len(times), N n + N n_c)
    n: int = 0
    n_agents: int = 0
    n_c: int = 0

    def agent_states(self) -> np.ndarray:
        """``(T, N, n)`` view of the agent part of the state."""
        return self.states[:, :self.n_agents * self.n].reshape(len(self.times), self.n_agents, self.n)


def gl_weights(alpha: float, count: int) -> np.ndarray:
    """Grunwald-Letnikov weights ``w_0 .. w_{count-1}`` of ``(1 - z)^alpha``."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0,1], got {alpha}")
    if count < 1:
        raise ValueError("count must be >= 1")
    j = np.arange(1, count)
    w = np.empty(count)
    w[0] = 1.0
    w[1:] = np.cumprod(1.0 - (alpha + 1.0) / j)
    return w


def _starting_weights(alpha: float, w: np.ndarray) -> np.ndarray:
    """``s_k = Gamma(a+1) - sum_j w_j (k-j)^a`` so that the scheme is exact for ``t^a``."""
    k = np.arange(w.size, dtype=float)
    s = math.gamma(alpha + 1.0) - np.convolve(w, k**alpha)[:w.size]
    s[0] = 0.0
    return s


def _far_field(w: np.ndarray, z: np.ndarray, start: int, stop: int) -> np.ndarray:
    """``sum_{i < start} w_{k-i} z_i`` for ``k`` in ``[start, stop)``."""
    if start == 0:
        return np.zeros((stop - start, z.shape[1]))
    nfft = 1 << int(math.ceil(math.log2(stop + start)))
    wf = np.fft.rfft(w[:stop], nfft)
    zf = np.fft.rfft(z[:start], nfft, axis=0)
    conv = np.fft.irfft(wf[:, None] * zf, nfft, axis=0)
    return conv[start:stop]


def simulate(a, x0, cfg: SimulationConfig, alpha: float) -> Trajectory:
    """Integrate ``D^alpha y = A y`` from ``y(0) = x0`` (Caputo sense)."""
    a = as_matrix(a, "A")
    dim = a.shape[0]
    if a.shape[1] != dim:
        raise DimensionError("A must be square")
    y0 = np.asarray(x0, dtype=float).reshape(-1)
    if y0.size != dim:
        raise DimensionError(f"x0 has {y0.size} entries, system dimension is {dim}")
    n_steps = cfg.n_steps
    h = cfg.step
    w = gl_weights(alpha, n_steps + 1)
    corrected = cfg.scheme == "gl_corrected"
    shift = alpha / 2 if corrected else 0.0
    s = _starting_weights(alpha, w) if corrected else np.zeros(n_steps + 1)
    ha = h ** (-alpha)
    eye = np.eye(dim)

    def factor(scale):
        mat = scale * ha * eye - (1.0 - shift) * a
        if np.linalg.cond(mat) > 1e12:
            raise NumericalError(f"implicit step matrix is singular at h = {h}; reduce the step")
        return scipy.linalg.lu_factor(mat)

    lu = factor(1.0)
    ay0 = a @ y0
    y = np.empty((n_steps + 1, dim))
    z = np.zeros((n_steps + 1, dim))
    y[0] = y0
    if n_steps >= 1:
        # first step: h^-a (1 + s_1) z_1 = A((1 - shift) y_1 + shift y_0)
        lu1 = factor(1.0 + s[1]) if corrected else lu
        y[1] = scipy.linalg.lu_solve(lu1, (1.0 + s[1]) * ha * y0 + shift * ay0)
        z[1] = y[1] - y0
    wrev = w[::-1].copy()  # wrev[n_steps - m] == w[m]
    for start in range(1, n_steps + 1, _BLOCK):
        stop = min(start + _BLOCK, n_steps + 1)
        far = _far_field(w, z, start, stop)
        for k in range(max(start, 2), stop):
            # near field: i in [start, k) -> w_{k-i}
            hist = far[k - start] + wrev[n_steps - k + start:n_steps] @ z[start:k] if k > start else far[0]
            rhs = ha * (y0 - hist - s[k] * z[1]) + shift * (a @ y[k - 1])
            y[k] = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
            z[k] = y[k] - y0
    times = np.arange(n_steps + 1) * h
    return Trajectory(times, y)


def simulate_loop(a_full, x0_agents, cfg: SimulationConfig, alpha: float, n: int, n_agents: int,
                  n_c: int) -> Trajectory:
    """Simulate the unreduced loop with controller states starting at zero."""
    x0 = np.concatenate([np.asarray(x0_agents, dtype=float).reshape(-1), np.zeros(n_agents * n_c)])
    if x0.size != n_agents * (n + n_c):
        raise DimensionError(f"x0 must have {n_agents * n} agent entries")
    tr = simulate(a_full, x0, cfg, alpha)
    return Trajectory(tr.times, tr.states, n, n_agents, n_c)


def mittag_leffler(alpha: float, z: float, tol: float = 1e-16) -> float:
    """One-parameter Mittag-Leffler function by its power series.

    Valid for ``|z| <= 5``; beyond that cancellation in the alternating series
    destroys accuracy in double precision.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0,1], got {alpha}")
    if abs(z) > 5.0:
        raise ValueError(f"|z| = {abs(z)} outside the series range |z| <= 5")
    terms = [1.0]
    k = 1
    while True:
        term = z**k / math.gamma(alpha * k + 1.0)
        terms.append(term)
        if abs(term) < tol and k > 2:
            break
        k += 1
        if k > 2000:
            raise NumericalError("Mittag-Leffler series did not converge")
    return math.fsum(terms)


def consensus_error(traj: Trajectory, n: int | None = None, n_agents: int | None = None) -> np.ndarray:
    """Distance of each agent from the instantaneous agent mean, shape ``(T, N)``."""
    n = n or traj.n
    n_agents = n_agents or traj.n_agents
    x = traj.states[:, :n * n_agents].reshape(len(traj.times), n_agents, n)
    return np.linalg.norm(x - x.mean(axis=1, keepdims=True), axis=2)


@dataclass(frozen=True)
class MetricsReport:
    ise: float
    iae: float
    itse: float
    itae: float

    def as_row(self) -> tuple:
        return (self.ise, self.iae, self.itse, self.itae)


def metrics(error, times) -> MetricsReport:
    """Trapezoidal ISE, IAE, ITSE and ITAE of a scalar error signal."""
    e = np.asarray(error, dtype=float)
    t = np.asarray(times, dtype=float)
    if e.shape != t.shape:
        raise DimensionError("error and times must have equal length")
    return MetricsReport(
        ise=float(trapezoid(e**2, t)),
        iae=float(trapezoid(np.abs(e), t)),
        itse=float(trapezoid(t * e**2, t)),
        itae=float(trapezoid(t * np.abs(e), t)),
    )


def agent_metrics(traj: Trajectory) -> list[MetricsReport]:
    err = consensus_error(traj)
    return [metrics(err[:, i], traj.times) for i in range(err.shape[1])]


# ---------------------------------------------------------------------------
# CSV interchange

_COL = re.compile(r"agent(\d+)_x(\d+)$")


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Agent states only: ``time,agent1_x1,...,agentN_xn`` with 12 significant digits."""
    header = ["time"] + [f"agent{i + 1}_x{j + 1}" for i in range(traj.n_agents) for j in range(traj.n)]
    body = traj.states[:, :traj.n_agents * traj.n]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for t, row in zip(traj.times, body):
            wr.writerow([f"{t:.12g}"] + [f"{v:.12g}" for v in row])


def read_trajectory_csv(path) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "time":
        raise ValueError(f"{path}: expected a header starting with 'time'")
    cols = []
    for name in rows[0][1:]:
        m = _COL.match(name)
        if not m:
            raise ValueError(f"{path}: unexpected column {name!r}")
        cols.append((int(m.group(1)), int(m.group(2))))
    n_agents = max(c[0] for c in cols)
    n = max(c[1] for c in cols)
    if len(cols) != n_agents * n:
        raise ValueError(f"{path}: columns do not form a complete agent x state grid")
    data = np.array(rows[1:], dtype=float)
    return Trajectory(data[:, 0], data[:, 1:], n, n_agents, 0)


def write_metrics_csv(reports: list[MetricsReport], path) -> None:
    """``agent,ISE,IAE,ITSE,ITAE``; ``path`` may also be an open text stream."""
    if hasattr(path, "write"):
        _metrics_rows(reports, csv.writer(path))
        return
    with open(path, "w", newline="") as fh:
        _metrics_rows(reports, csv.writer(fh))


def _metrics_rows(reports, wr) -> None:
    wr.writerow(["agent", "ISE", "IAE", "ITSE", "ITAE"])
    for i, r in enumerate(reports):
        wr.writerow([i + 1] + [f"{v:.12g}" for v in r.as_row()])
