"""Small dense linear algebra: Lyapunov equations and definiteness tests."""

from __future__ import annotations

from typing import Optional

import numpy as np

MAX_DIM = 64


class SingularSystem(np.linalg.LinAlgError):
    """The Lyapunov equation has no unique positive definite solution."""


class DimensionError(ValueError):
    pass


def _square(M, name="matrix") -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")
    if M.shape[0] > MAX_DIM:
        raise DimensionError(f"{name} exceeds the supported size {MAX_DIM}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def lyapunov_solve(A, Q=None, check_pd: bool = True) -> np.ndarray:
    """Solve ``P A + A^T P = -Q`` for symmetric ``P``.

    The equation is vectorized to ``(I kron A^T + A^T kron I) vec(P) = -vec(Q)``
    and solved by LU with partial pivoting, then symmetrized.  The residual is
    checked on every call.
    """
    A = _square(A, "A")
    n = A.shape[0]
    Q = np.eye(n) if Q is None else _square(Q, "Q")
    if Q.shape != A.shape:
        raise DimensionError("A and Q must have the same shape")
    I = np.eye(n)
    K = np.kron(I, A.T) + np.kron(A.T, I)
    rhs = -Q.reshape(-1, order="F")
    try:
        vec = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("Lyapunov operator is singular; A is not Hurwitz") from exc
    P = vec.reshape(n, n, order="F")
    P = 0.5 * (P + P.T)
    qnorm = np.linalg.norm(Q)
    res = P @ A + A.T @ P + Q
    if np.linalg.norm(res) >= 1e-10 * qnorm:
        # one step of iterative refinement
        corr = np.linalg.solve(K, -res.reshape(-1, order="F")).reshape(n, n, order="F")
        P = P + 0.5 * (corr + corr.T)
        res = P @ A + A.T @ P + Q
        if not np.all(np.isfinite(res)) or np.linalg.norm(res) >= 1e-10 * qnorm:
            raise SingularSystem("Lyapunov solve failed the residual check")
    if check_pd and cholesky(P) is None:
        raise SingularSystem("solution is not positive definite; A is not Hurwitz")
    return P


def cholesky(M) -> Optional[np.ndarray]:
    """Lower-triangular ``L`` with ``L L^T = M``, or ``None`` when ``M`` is not
    positive definite."""
    M = _square(M)
    n = M.shape[0]
    L = np.zeros_like(M)
    # a nearly singular pivot can overflow the next one to inf, which then fails the test
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(n):
            d = M[j, j] - L[j, :j] @ L[j, :j]
            if not d > 0.0:
                return None
            L[j, j] = np.sqrt(d)
            L[j + 1:, j] = (M[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    if not np.all(np.isfinite(L)):
        return None
    return L


def is_positive_definite(M) -> bool:
    return cholesky(M) is not None


def is_hurwitz(A) -> bool:
    """Lyapunov criterion: ``A`` is Hurwitz iff ``P A + A^T P = -I`` has a
    positive definite solution."""
    try:
        lyapunov_solve(A, check_pd=True)
    except SingularSystem:
        return False
    return True


def min_eigenvalue_sym(M, tol: float = 1e-12) -> float:
    """Smallest eigenvalue of symmetric ``M`` by bisection on the shift ``s``
    for which ``M - s I`` stops being positive definite."""
    M = _square(M)
    n = M.shape[0]
    bound = max(np.linalg.norm(M), 1e-300)
    lo, hi = -bound - 1.0, bound + 1.0
    I = np.eye(n)
    while hi - lo > tol * max(1.0, abs(lo) + abs(hi)) * 0.5:
        mid = 0.5 * (lo + hi)
        if cholesky(M - mid * I) is not None:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15:
            break
    return 0.5 * (lo + hi)


def max_eigenvalue_sym(M, tol: float = 1e-12) -> float:
    return -min_eigenvalue_sym(-np.asarray(M, dtype=float), tol)


def block_diag(*blocks) -> np.ndarray:
    blocks = [np.atleast_2d(np.asarray(b, float)) for b in blocks]
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n))
    k = 0
    for b in blocks:
        m = b.shape[0]
        out[k:k + m, k:k + m] = b
        k += m
    return out
