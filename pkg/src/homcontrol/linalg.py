"""Dense linear algebra for parameter continuation.

Pseudoinverse, numerical rank, and the oriented unit tangent of an
underdetermined m x (m+1) system, plus the augmented tangent
``alpha * tau + pinv(A) @ B`` used to follow a time-varying solution curve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_RANK_TOL = 1e-9
# |det([A; tau^T])| below this cannot be trusted for orientation.
DET_TOL = 1e-12


class RankDeficient(np.linalg.LinAlgError):
    """Raised when a matrix has lower numerical rank than required."""


def _as_finite_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A.reshape(1, -1)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix contains non-finite entries")
    return A


def numerical_rank(A, rank_tol: float = DEFAULT_RANK_TOL) -> int:
    """Number of singular values above ``rank_tol * sigma_max``."""
    A = _as_finite_matrix(A)
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rank_tol * s[0]))


def is_invertible(A, rank_tol: float = DEFAULT_RANK_TOL) -> bool:
    """Square-matrix test ``sigma_min > rank_tol * max(sigma_max, 1)``.

    The absolute floor keeps 1 x 1 and uniformly tiny matrices from passing
    a purely relative test.
    """
    A = _as_finite_matrix(A)
    if A.shape[0] != A.shape[1]:
        return False
    s = np.linalg.svd(A, compute_uv=False)
    return bool(s[-1] > rank_tol * max(s[0], 1.0))


def pseudoinverse(A, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD.

    Singular values at or below ``rank_tol * sigma_max`` are treated as zero,
    so the result is the exact pseudoinverse of the rank-truncated matrix.
    """
    A = _as_finite_matrix(A)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((A.shape[1], A.shape[0]))
    keep = s > rank_tol * s[0]
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (Vt.T * s_inv) @ U.T


def oriented_nullspace_tangent(A, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Unit vector spanning ker(A) with ``det([A; tau^T]) > 0``.

    Parameters
    ----------
    A : array_like, shape (m, m+1)
        Jacobian of the homotopy with respect to (unknowns, parameter).
    rank_tol : float
        Relative singular value threshold for the full-rank test.

    Raises
    ------
    RankDeficient
        If rank(A) < m, or if the orientation determinant is too close to
        zero to be decided.
    """
    A = _as_finite_matrix(A)
    m, k = A.shape
    if k != m + 1:
        raise ValueError(f"expected an m x (m+1) matrix, got {A.shape}")
    _, s, Vt = np.linalg.svd(A, full_matrices=True)
    if s[0] == 0.0 or s[-1] <= rank_tol * s[0]:
        raise RankDeficient(f"rank(A) < {m}: singular values {s}")
    tau = Vt[-1].copy()
    tau /= np.linalg.norm(tau)
    det = np.linalg.det(np.vstack([A, tau]))
    if abs(det) < DET_TOL:
        raise RankDeficient(f"orientation undecidable, det={det:.3e}")
    if det < 0.0:
        tau = -tau
    return tau


@dataclass(frozen=True)
class TangentSolution:
    """Decomposition ``combined = alpha * tau + tau_bar`` of all solutions of A t = B."""

    tau: np.ndarray
    tau_bar: np.ndarray
    alpha: float

    @property
    def combined(self) -> np.ndarray:
        return self.alpha * self.tau + self.tau_bar


def augmented_tangent(A, B, alpha: float,
                      rank_tol: float = DEFAULT_RANK_TOL) -> TangentSolution:
    """Solve the underdetermined system ``A t = B`` along the oriented tangent.

    ``tau_bar = pinv(A) @ B`` is the minimum-norm particular solution, so it is
    orthogonal to ``tau``; ``alpha`` sets the speed along the curve.
    """
    if not alpha > 0.0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    A = _as_finite_matrix(A)
    B = np.asarray(B, dtype=float).reshape(-1)
    if B.shape[0] != A.shape[0]:
        raise ValueError(f"B has length {B.shape[0]}, expected {A.shape[0]}")
    if not np.all(np.isfinite(B)):
        raise ValueError("B contains non-finite entries")
    tau = oriented_nullspace_tangent(A, rank_tol)
    tau_bar = pseudoinverse(A, rank_tol) @ B
    return TangentSolution(tau=tau, tau_bar=tau_bar, alpha=float(alpha))
