"""Dense matrix helpers shared by every other module.

Everything here works on plain ``numpy.ndarray`` values. Inputs are validated
(two-dimensional, finite) and never mutated.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, NumericalError

# singular values below  s_max * PINV_RTOL * max(rows, cols)  count as zero
PINV_RTOL = 1e-12


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Coerce ``m`` to a finite 2-D float array.

    Scalars become 1x1 and 1-D sequences become a single row.
    """
    a = np.array(m, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    elif a.ndim != 2:
        raise DimensionError(f"{name} must be two-dimensional, got shape {a.shape}")
    if a.size == 0:
        raise DimensionError(f"{name} is empty")
    if not np.all(np.isfinite(a)):
        raise NumericalError(f"{name} contains NaN or Inf entries")
    return a


def _require_square(a: np.ndarray, name: str) -> None:
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got {a.shape[0]}x{a.shape[1]}")


def kron(a, b) -> np.ndarray:
    """Kronecker product; block (i, j) of the result is ``a[i, j] * b``."""
    return np.kron(as_matrix(a, "a"), as_matrix(b, "b"))


def sym(m) -> np.ndarray:
    """Return ``m + m.T`` for a square matrix."""
    a = as_matrix(m)
    _require_square(a, "sym argument")
    return a + a.T


def pseudo_inverse(m) -> np.ndarray:
    """Moore-Penrose pseudo-inverse through a truncated SVD.

    Singular values below ``s_max * 1e-12 * max(rows, cols)`` are dropped,
    which makes exactly rank-deficient inputs such as graph Laplacians behave.
    """
    a = as_matrix(m)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((a.shape[1], a.shape[0]))
    cutoff = s[0] * PINV_RTOL * max(a.shape)
    keep = s > cutoff
    return (vt[keep].T / s[keep]) @ u[:, keep].T


def spectrum(m) -> np.ndarray:
    """Eigenvalues of a square real matrix as a complex array.

    Uses the general nonsymmetric (Hessenberg QR) LAPACK driver regardless of
    structure so that results are comparable across callers.
    """
    a = as_matrix(m)
    _require_square(a, "spectrum argument")
    try:
        return np.linalg.eigvals(a).astype(complex)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue iteration failed to converge for a {a.shape[0]}x{a.shape[0]} matrix") from exc


def symmetric_spectrum(m) -> np.ndarray:
    """Ascending eigenvalues of a symmetric matrix (specialised path)."""
    a = as_matrix(m)
    _require_square(a, "symmetric_spectrum argument")
    try:
        return np.linalg.eigvalsh(0.5 * (a + a.T))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"symmetric eigensolver failed for a {a.shape[0]}x{a.shape[0]} matrix") from exc


def block_diag(*blocks) -> np.ndarray:
    """Block-diagonal stack. Zero-sized blocks (e.g. order-0 controllers) are allowed."""
    mats = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]
    rows = sum(b.shape[0] for b in mats)
    cols = sum(b.shape[1] for b in mats)
    out = np.zeros((rows, cols))
    r = c = 0
    for b in mats:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out
