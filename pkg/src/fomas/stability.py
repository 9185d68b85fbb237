"""Stability of commensurate fractional-order systems ``D^alpha x = A x``, 0 < alpha < 1.

Two routes are provided: the eigenvalue sector test, and the equivalent LMI
in four matrix variables (two symmetric, two skew) coupled through 2x2
rotation blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lmi import AffineLmiSystem, VarLayout, linearize
from .matcore import as_matrix, spectrum

# eigenvalues within this many radians of the sector edge count as unstable
MARGIN_TOL = 1e-9

THETA_KEYS = ((1, 1), (1, 2), (2, 1), (2, 2))


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0,1), got {alpha}")


@dataclass(frozen=True, eq=False)
class ThetaBlocks:
    theta: float
    blocks: dict  # (i, j) -> 2x2 array

    def __getitem__(self, key):
        return self.blocks[key]


def theta_blocks(alpha: float) -> ThetaBlocks:
    _check_alpha(alpha)
    th = alpha * math.pi / 2
    s, c = math.sin(th), math.cos(th)
    blocks = {
        (1, 1): np.array([[s, -c], [c, s]]),
        (1, 2): np.array([[c, s], [-s, c]]),
        (2, 1): np.array([[s, c], [-c, s]]),
        (2, 2): np.array([[-c, s], [-s, -c]]),
    }
    return ThetaBlocks(th, blocks)


def sector_margin(a, alpha: float) -> float:
    """``min |arg(lambda)| - alpha*pi/2`` over the eigenvalues of ``a`` (radians)."""
    ev = spectrum(a)
    return float(np.min(np.abs(np.angle(ev)))) - alpha * math.pi / 2


def spectral_stable(a, alpha: float) -> bool:
    """Every eigenvalue satisfies ``|arg(lambda)| > alpha*pi/2``."""
    _check_alpha(alpha)
    return sector_margin(a, alpha) > MARGIN_TOL


def bkron(small: np.ndarray, big: np.ndarray) -> np.ndarray:
    """Kronecker product ``small (x) big`` broadcast over leading axes of ``big``."""
    p, q = small.shape
    r, s = big.shape[-2:]
    out = small[:, None, :, None] * big[..., None, :, None, :]
    return out.reshape(big.shape[:-2] + (p * r, q * s))


def bsym(m: np.ndarray) -> np.ndarray:
    return m + np.swapaxes(m, -1, -2)


def pair_block(p1: np.ndarray, p2: np.ndarray) -> np.ndarray:
    """``[[P1, P2], [-P2, P1]]`` with leading batch axes."""
    top = np.concatenate([p1, p2], axis=-1)
    bottom = np.concatenate([-p2, p1], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def x_layout(dim: int, prefix: str = "P") -> VarLayout:
    return (VarLayout()
            .symmetric(f"{prefix}11", dim).skew(f"{prefix}12", dim)
            .symmetric(f"{prefix}21", dim).skew(f"{prefix}22", dim))


def sector_sum(a: np.ndarray, xs: dict, thetas: ThetaBlocks, prefix: str = "P") -> np.ndarray:
    """``sum_ij Sym{Theta_ij (x) (A X_ij)}`` for batched X."""
    return sum(bsym(bkron(thetas[ij], a @ xs[f"{prefix}{ij[0]}{ij[1]}"])) for ij in THETA_KEYS)


def lemma1_lmi(a, alpha: float) -> AffineLmiSystem:
    """LMI whose strict feasibility is equivalent to ``spectral_stable(a, alpha)``.

    Variables ``P11, P21`` symmetric and ``P12, P22`` skew, all ``d x d``.
    """
    a = as_matrix(a)
    thetas = theta_blocks(alpha)
    layout = x_layout(a.shape[0])

    def blocks(v):
        return [
            sector_sum(a, v, thetas),
            -pair_block(v["P11"], v["P12"]),
            -pair_block(v["P21"], v["P22"]),
        ]

    return linearize(layout, blocks, ("sector", "pos1", "pos2"))
