"""Small dense linear algebra: Cholesky factorization, triangular inverse,
cyclic Jacobi diagonalization and the whitened generalized eigenproblem.

Matrices here are at most a few dozen wide, so clarity wins over speed.
"""
from __future__ import annotations

import math

import numpy as np


class NotPositiveDefinite(np.linalg.LinAlgError):
    pass


def cholesky(A: np.ndarray, rel_tol: float = 0.0) -> np.ndarray:
    """Lower-triangular L with A = L L^T.

    Raises NotPositiveDefinite when pivot ``j`` is not above
    ``rel_tol * A[j, j]``, i.e. when column ``j`` is (numerically) a linear
    combination of the earlier ones.
    """
    A = np.asarray(A, dtype=float)
    p = A.shape[0]
    L = np.zeros_like(A)
    for j in range(p):
        d = A[j, j] - L[j, :j] @ L[j, :j]
        if not (d > 0 and d > rel_tol * A[j, j]):
            raise NotPositiveDefinite(f"pivot {j} is {d:.3e}")
        L[j, j] = math.sqrt(d)
        for i in range(j + 1, p):
            L[i, j] = (A[i, j] - L[i, :j] @ L[j, :j]) / L[j, j]
    return L


def lower_inverse(L: np.ndarray) -> np.ndarray:
    """Inverse of a nonsingular lower-triangular matrix by forward substitution."""
    p = L.shape[0]
    inv = np.zeros_like(L)
    for c in range(p):
        inv[c, c] = 1.0 / L[c, c]
        for i in range(c + 1, p):
            inv[i, c] = -(L[i, c:i] @ inv[c:i, c]) / L[i, i]
    return inv


def jacobi_eigh(S: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100
                ) -> tuple[np.ndarray, np.ndarray, int]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi sweeps.

    Sweeps continue until the largest off-diagonal magnitude drops below
    ``tol * ||S||_F``. Returns ``(eigenvalues, eigenvectors, sweeps)``
    with eigenvalues in descending order and eigenvectors as columns.
    """
    A = np.array(S, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    A = (A + A.T) / 2
    p = A.shape[0]
    V = np.eye(p)
    threshold = tol * np.linalg.norm(A)
    sweeps = 0
    while sweeps < max_sweeps:
        off = np.abs(A - np.diag(np.diag(A)))
        if p < 2 or off.max() <= threshold:
            break
        sweeps += 1
        for i in range(p - 1):
            for j in range(i + 1, p):
                aij = A[i, j]
                if aij == 0.0:
                    continue
                theta = (A[j, j] - A[i, i]) / (2 * aij)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                s = t * c
                # A <- J^T A J, J the rotation in the (i, j) plane
                ai = A[:, i].copy()
                aj = A[:, j].copy()
                A[:, i] = c * ai - s * aj
                A[:, j] = s * ai + c * aj
                ri = A[i, :].copy()
                rj = A[j, :].copy()
                A[i, :] = c * ri - s * rj
                A[j, :] = s * ri + c * rj
                A[i, j] = A[j, i] = 0.0
                vi = V[:, i].copy()
                vj = V[:, j].copy()
                V[:, i] = c * vi - s * vj
                V[:, j] = s * vi + c * vj
    else:
        off = np.abs(A - np.diag(np.diag(A)))
        if p >= 2 and off.max() > threshold:
            raise np.linalg.LinAlgError(f"Jacobi did not converge in {max_sweeps} sweeps")
    w = np.diag(A).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order], sweeps


def whitened_geneig(B: np.ndarray, W: np.ndarray, rel_tol: float = 0.0
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Solve B v = lambda W v for symmetric B and positive definite W.

    W = L L^T, S = L^-1 B L^-T is diagonalized by Jacobi and eigenvectors
    are mapped back with v = L^-T u, so that v^T W v = 1.
    """
    L = cholesky(W, rel_tol)
    Linv = lower_inverse(L)
    S = Linv @ B @ Linv.T
    S = (S + S.T) / 2
    lam, U, _ = jacobi_eigh(S)
    return lam, Linv.T @ U
