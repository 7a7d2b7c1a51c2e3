"""Active-set non-negative least squares (Lawson-Hanson)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["NNLSResult", "nnls", "kkt_residual"]


@dataclass
class NNLSResult:
    x: np.ndarray
    rnorm: float
    kkt: float
    iterations: int
    rank_deficient: bool


def kkt_residual(A, b, x) -> float:
    """Largest KKT violation of ``min ||Ax - b||^2, x >= 0`` at ``x``.

    With ``w = A^T (b - A x)`` the conditions are ``w_i = 0`` where
    ``x_i > 0`` and ``w_i <= 0`` where ``x_i = 0``.
    """
    A = np.asarray(A, dtype=float)
    w = A.T @ (np.asarray(b, dtype=float) - A @ x)
    free = x > 0
    viol = np.where(free, np.abs(w), np.maximum(w, 0.0))
    return float(viol.max(initial=0.0))


def nnls(A, b, maxiter: int | None = None, tol: float | None = None) -> NNLSResult:
    """Solve ``min ||A x - b||_2`` subject to ``x >= 0``.

    Parameters
    ----------
    A : array_like, shape (m, n)
    b : array_like, shape (m,)
    maxiter : int, optional
        Cap on outer iterations (default ``3 * n``).
    tol : float, optional
        Dual feasibility tolerance (default scales with machine epsilon,
        ``max(m, n)`` and the norms of ``A`` and ``b``).

    Notes
    -----
    Sub-problems on the passive set are solved with ``lstsq`` so a
    rank-deficient passive block still yields the minimum-norm solution;
    ``rank_deficient`` in the result reports this.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if b.shape != (m,):
        raise ValueError(f"b must have shape ({m},), got {b.shape}")
    if maxiter is None:
        maxiter = 3 * n
    if tol is None:
        tol = 10 * np.finfo(float).eps * max(m, n) * max(1.0, np.linalg.norm(A, 1)) * max(1.0, np.abs(b).max(initial=0.0))

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = A.T @ b
    rank_deficient = False
    it = 0
    while (~passive).any() and w[~passive].max() > tol and it < maxiter:
        it += 1
        candidates = np.where(~passive, w, -np.inf)
        passive[int(np.argmax(candidates))] = True
        while True:
            z = np.zeros(n)
            cols = np.flatnonzero(passive)
            sol, _, rank, _ = np.linalg.lstsq(A[:, cols], b, rcond=None)
            if rank < cols.size:
                rank_deficient = True
            z[cols] = sol
            if (z[cols] > 0).all():
                x = z
                break
            # Step back to the boundary of the feasible region.
            bad = cols[z[cols] <= 0]
            alpha = np.min(x[bad] / (x[bad] - z[bad]))
            x = x + alpha * (z - x)
            passive &= x > np.finfo(float).eps * max(1.0, np.abs(x).max())
            x[~passive] = 0.0
            if not passive.any():
                break
        w = A.T @ (b - A @ x)
    r = b - A @ x
    return NNLSResult(x=x, rnorm=float(np.linalg.norm(r)), kkt=kkt_residual(A, b, x), iterations=it, rank_deficient=rank_deficient)
