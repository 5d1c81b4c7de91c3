"""Dense symmetric eigensolver based on cyclic Jacobi rotations.

Kept self-contained so that quadrature-rule generation (Golub-Welsch) and
all spectral analysis run through one auditable code path instead of an
opaque LAPACK driver.
"""
from __future__ import annotations

import numpy as np

__all__ = ["EigenError", "jacobi_eigh", "jacobi_eigvalsh"]


class EigenError(RuntimeError):
    """Raised for asymmetric input or a non-converged Jacobi sweep loop."""


def _check_symmetric(a: np.ndarray, rtol: float) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise EigenError(f"expected a square matrix, got shape {a.shape}")
    scale = np.max(np.abs(a)) if a.size else 0.0
    if scale > 0.0:
        skew = np.max(np.abs(a - a.T))
        if skew > rtol * scale:
            raise EigenError(
                f"matrix is not symmetric: max|A - A^T| = {skew:.3e} "
                f"exceeds {rtol:.1e} * max|A| = {rtol * scale:.3e}"
            )
    return 0.5 * (a + a.T)


def _offdiag_norm(A: np.ndarray) -> float:
    B = A.copy()
    np.fill_diagonal(B, 0.0)
    return float(np.linalg.norm(B))


def jacobi_eigh(a, *, max_sweeps: int = 50, tol: float = 1e-14,
                symmetry_rtol: float = 1e-8):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(w, v)`` with eigenvalues ``w`` ascending and the columns of
    ``v`` the corresponding orthonormal eigenvectors.  Convergence target is
    ``off(A) <= tol * ||A||_F``; per-pair residuals then satisfy
    ``||A x - w x|| <~ n*eps*||A||``.
    """
    A = _check_symmetric(a, symmetry_rtol)
    n = A.shape[0]
    V = np.eye(n)
    if n <= 1:
        return A.diagonal().copy(), V

    norm = np.linalg.norm(A)
    if norm == 0.0:
        return np.zeros(n), V

    converged = False
    for _ in range(max_sweeps):
        off = _offdiag_norm(A)
        if off <= tol * norm:
            converged = True
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-3 * tol * norm / n:
                    continue
                app, aqq = A[p, p], A[q, q]
                tau = (aqq - app) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # A <- J^T A J applied as column then row rotation
                col_p = A[:, p].copy()
                col_q = A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p = A[p, :].copy()
                row_q = A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                # closed-form updates keep the zeroed pair exact
                A[p, p] = app - t * apq
                A[q, q] = aqq + t * apq
                A[p, q] = 0.0
                A[q, p] = 0.0
                col_p = V[:, p].copy()
                col_q = V[:, q].copy()
                V[:, p] = c * col_p - s * col_q
                V[:, q] = s * col_p + c * col_q
    else:
        off = _offdiag_norm(A)
        raise EigenError(
            f"Jacobi sweeps did not converge after {max_sweeps} sweeps; "
            f"off-diagonal norm {off:.3e} (target {tol * norm:.3e})"
        )
    if not converged:  # pragma: no cover - loop exits via break or raise
        raise EigenError("unreachable")

    w = A.diagonal().copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def jacobi_eigvalsh(a, **kwargs) -> np.ndarray:
    """Eigenvalues only, ascending."""
    w, _ = jacobi_eigh(a, **kwargs)
    return w
