"""Dense symmetric / positive semi-definite linear-algebra primitives.

Everything downstream (objective evaluation, the fixed-point iteration,
kernel estimators) is built on the routines here. Inputs are plain numpy
arrays; matrices are symmetrized on entry so LAPACK always sees exactly
symmetric data, and all determinants of PSD matrices are computed in
log-space through Cholesky factors, never through raw determinants.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, TYPE_CHECKING

import numpy as np
from scipy.linalg import lapack

from .errors import ConditioningError, InputError, NotPsdError

if TYPE_CHECKING:  # pragma: no cover
    from .model import RkhsKernel

#: jitter escalation cap for `chol_psd`; the ladder starts at the caller's
#: base value (1e-10 by default) and multiplies by 10 per retry.
MAX_JITTER = 1e-4


def symmetrize(m: np.ndarray) -> np.ndarray:
    """Return the symmetric part ``(M + M^T)/2`` as a new array."""
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def validate_symmetric(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Check shape and finiteness, then return the symmetrized copy."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InputError(f"{name} must be square, got shape {m.shape}")
    if m.shape[0] < 1:
        raise InputError(f"{name} must have dimension >= 1")
    if not np.all(np.isfinite(m)):
        raise InputError(f"{name} contains non-finite entries")
    return symmetrize(m)


@dataclass(frozen=True)
class EigDecomp:
    """Full symmetric eigendecomposition, eigenvalues in descending order.

    ``vectors`` holds orthonormal eigenvectors as columns, aligned with
    ``values``, so that ``vectors @ diag(values) @ vectors.T`` reconstructs
    the input.
    """

    values: np.ndarray
    vectors: np.ndarray


class CholResult(NamedTuple):
    """Upper-triangular factor ``R`` and the diagonal jitter that was
    actually applied, so that ``R.T @ R = M + jitter * I``."""

    factor: np.ndarray
    jitter: float


def build_gram(points: np.ndarray, kernel: "RkhsKernel") -> np.ndarray:
    """Kernel matrix ``K[i, j] = k_H(z_i, z_j)`` for a list of points.

    Parameters
    ----------
    points : array_like, shape (m, d)
        Point coordinates; every coordinate must be finite.
    kernel : RkhsKernel
        Reproducing kernel; the Gaussian family has unit diagonal.

    Returns
    -------
    ndarray, shape (m, m)
        Exactly symmetric Gram matrix.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise InputError(f"points must be a (m, d) array, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise InputError("points contain non-finite coordinates")
    return symmetrize(kernel.gram(pts))


def chol_psd(m: np.ndarray, base_jitter: float = 1e-10) -> CholResult:
    """Cholesky factorization with an escalating diagonal jitter ladder.

    Attempts ``M + j*I = R^T R`` with ``j = base_jitter`` and multiplies
    ``j`` by 10 on each failure, capped at ``MAX_JITTER``. A base of 0 is
    tried as-is before the ladder starts at 1e-10.

    Returns
    -------
    CholResult
        Upper-triangular ``R`` and the jitter actually applied.

    Raises
    ------
    ConditioningError
        If the matrix cannot be factored at the maximum jitter; the message
        names the smallest eigenvalue estimate.
    """
    m = validate_symmetric(m)
    if base_jitter < 0:
        raise InputError(f"base_jitter must be >= 0, got {base_jitter}")
    if base_jitter > MAX_JITTER:
        raise InputError(f"base_jitter {base_jitter} exceeds the cap {MAX_JITTER}")
    dim = m.shape[0]
    jitters = [base_jitter]
    while jitters[-1] < MAX_JITTER:
        jitters.append(min(MAX_JITTER, jitters[-1] * 10 if jitters[-1] > 0 else 1e-10))
    for jitter in jitters:
        a = m if jitter == 0.0 else m + jitter * np.eye(dim)
        c, info = lapack.dpotrf(a, lower=0, clean=1, overwrite_a=0)
        if info == 0:
            return CholResult(c, jitter)
        if info < 0:  # pragma: no cover - argument error, should not happen
            raise ValueError(f"dpotrf: illegal argument {-info}")
    min_eig = float(np.linalg.eigvalsh(m)[0])
    raise ConditioningError(
        f"matrix not factorizable at maximum jitter {MAX_JITTER:g}; "
        f"smallest eigenvalue estimate {min_eig:.3e}",
        detail=min_eig,
    )


def sym_eig(m: np.ndarray) -> EigDecomp:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending."""
    m = validate_symmetric(m)
    values, vectors = np.linalg.eigh(m)
    return EigDecomp(values[::-1].copy(), vectors[:, ::-1].copy())


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix via eigendecomposition.

    Eigenvalues in ``[-1e-10 * ||M||_op, 0)`` are treated as roundoff and
    clamped to zero before rooting; anything more negative raises.
    """
    m = validate_symmetric(m)
    values, vectors = np.linalg.eigh(m)
    op_norm = float(np.max(np.abs(values))) if values.size else 0.0
    floor = -1e-10 * op_norm
    if values[0] < floor:
        raise NotPsdError(
            f"matrix is not PSD: smallest eigenvalue {values[0]:.3e} "
            f"below tolerance {floor:.3e}"
        )
    root = np.sqrt(np.clip(values, 0.0, None))
    return symmetrize((vectors * root) @ vectors.T)


def logdet_psd(m: np.ndarray) -> float:
    """Log-determinant of a symmetric positive definite matrix.

    Computed as twice the log-trace of the Cholesky diagonal, which is
    robust for determinants far outside double range.

    Raises
    ------
    ConditioningError
        If the matrix is not positive definite; carries the 1-based index
        of the first non-positive pivot.
    """
    m = validate_symmetric(m)
    c, info = lapack.dpotrf(m, lower=0, clean=0, overwrite_a=0)
    if info > 0:
        raise ConditioningError(
            f"matrix is not positive definite: leading minor of order {info}",
            detail=int(info),
        )
    if info < 0:  # pragma: no cover
        raise ValueError(f"dpotrf: illegal argument {-info}")
    return float(2.0 * np.sum(np.log(np.diag(c))))
