"""Dense symmetric linear algebra used throughout the package.

Matrices here are small (at most a few dozen rows), so the eigensolver is a
plain cyclic Jacobi iteration rather than a LAPACK call.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

SYMMETRY_RTOL = 1e-8


class InvalidInput(ValueError):
    """Raised for non-finite, non-square or visibly asymmetric input."""


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Raised when a Cholesky pivot is not strictly positive."""


class EigDecomposition(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _finite_square(A) -> np.ndarray:
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInput("matrix has non-finite entries")
    return A


def as_symmetric(A) -> np.ndarray:
    """Return ``(A + A.T) / 2`` after checking that ``A`` is symmetric.

    Asymmetry up to ``1e-8 * max(1, ||A||)`` is treated as rounding noise from
    assembling block forms and removed; anything larger is an error.
    """
    A = _finite_square(A)
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if A.size and np.max(np.abs(A - A.T)) > SYMMETRY_RTOL * scale:
        raise InvalidInput("matrix is not symmetric")
    return 0.5 * (A + A.T)


def sym_eig(A, tol: float = 1e-15, max_sweeps: int = 100) -> EigDecomposition:
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.

    Eigenvalues are returned in ascending order with the matching
    orthonormal eigenvectors as columns.
    """
    A = as_symmetric(A)
    n = A.shape[0]
    V = np.eye(n)
    if n == 0:
        return EigDecomposition(np.zeros(0), V)
    scale = np.linalg.norm(A)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off <= tol * scale or off == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                gap = A[q, q] - A[p, p]
                if abs(apq) < 1e-150 * abs(gap):
                    # tan of the rotation angle is apq / gap to machine precision
                    t = apq / gap
                else:
                    theta = gap / (2.0 * apq)
                    t = 1.0 if theta == 0.0 else np.sign(theta) / (abs(theta) + np.sqrt(1.0 + theta * theta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                ap = A[:, p].copy()
                aq = A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                rp = A[p, :].copy()
                rq = A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                A[p, q] = A[q, p] = 0.0
                vp = V[:, p].copy()
                V[:, p] = c * vp - s * V[:, q]
                V[:, q] = s * vp + c * V[:, q]
    else:
        raise np.linalg.LinAlgError("Jacobi sweeps did not converge")
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return EigDecomposition(w[order], V[:, order])


def lambda_max(A) -> float:
    w = sym_eig(A).eigenvalues
    return float(w[-1]) if w.size else -np.inf


def lambda_min(A) -> float:
    w = sym_eig(A).eigenvalues
    return float(w[0]) if w.size else np.inf


def cholesky(A) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == A``.

    Raises NotPositiveDefinite when ``A`` is not positive definite; callers
    use that as a strict feasibility test.
    """
    A = as_symmetric(A)
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def solve_spd(A, b) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive definite ``A``."""
    L = cholesky(A)
    b = np.asarray(b, dtype=float)
    y = np.linalg.solve(L, b)
    return np.linalg.solve(L.T, y)


def spectral_norm(M) -> float:
    """Largest singular value, computed as ``sqrt(lambda_max(M.T @ M))``."""
    M = np.array(M, dtype=float)
    if M.ndim != 2:
        raise InvalidInput("expected a matrix")
    if not np.all(np.isfinite(M)):
        raise InvalidInput("matrix has non-finite entries")
    if M.size == 0:
        return 0.0
    return float(np.sqrt(max(lambda_max(M.T @ M), 0.0)))


def sym(M: np.ndarray) -> np.ndarray:
    """``M + M.T``; the symmetric part scaled by two."""
    return M + M.T
