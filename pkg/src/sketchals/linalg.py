"""Dense factorizations, leverage scores, and the randomized low-rank LS solver.

QR and SVD are backed by LAPACK through numpy; the contracts here (orthonormal
columns, reconstruction accuracy, explicit rank-deficiency errors) are what the
decomposition drivers rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


class RankDeficientError(ValueError):
    """A matrix that must have full column rank numerically does not."""


@dataclass
class SvdResult:
    u: np.ndarray
    singular_values: np.ndarray
    v: np.ndarray

    def reconstruct(self):
        return (self.u * self.singular_values) @ self.v.T


@dataclass
class LeverageProfile:
    """Squared row norms of an orthonormal column basis; they sum to the rank."""

    scores: np.ndarray
    rank: int


def reduced_qr(mat):
    """Reduced QR of a tall matrix, rejecting rank-deficient input.

    Raises RankDeficientError when any |R diagonal| falls below
    1e-12 * ||mat||_F.
    """
    mat = np.asarray(mat, dtype=np.float64)
    q, r = np.linalg.qr(mat)
    tol = 1e-12 * np.linalg.norm(mat)
    diag = np.abs(np.diag(r))
    if (diag < tol).any():
        raise RankDeficientError(
            f"rank-deficient input: min |R_ii| = {diag.min():.3e} < {tol:.3e}"
        )
    return q, r


def thin_svd(mat):
    """Thin SVD with k = min(m, n) components, singular values non-increasing."""
    mat = np.asarray(mat, dtype=np.float64)
    try:
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"SVD failed to converge on a {mat.shape} matrix: {exc}"
        ) from exc
    return SvdResult(u, s, vt.T)


def truncated_svd(mat, rank):
    """Leading-rank part of the thin SVD (best rank-R approximation)."""
    res = thin_svd(mat)
    return SvdResult(res.u[:, :rank], res.singular_values[:rank], res.v[:, :rank])


def leverage_scores(a):
    """Leverage scores of the rows of a tall full-column-rank matrix.

    The scores are the squared row norms of any orthonormal basis for the
    column space; they are independent of the basis choice and sum to the
    column count.
    """
    a = np.asarray(a)
    if a.shape[0] <= a.shape[1]:
        raise ValueError("leverage scores need a strictly tall matrix")
    q, _ = reduced_qr(a)
    return LeverageProfile(np.einsum("ij,ij->i", q, q), a.shape[1])


def rsvd_lrls(z, y, rank, rng, oversample=10):
    """Rank-constrained least squares min ||z x - y|| via randomized SVD.

    Returns (core_t, v) with core_t of shape (cols(z), rank) carrying the
    singular values, and v of shape (cols(y), rank) with orthonormal columns,
    such that core_t @ v.T approximates the best rank-`rank` part of the
    unconstrained solution.  The normal-equations solve runs through the QR
    factors of z (triangular solves) rather than an explicit inverse.
    """
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    m, r = z.shape
    if m < r:
        raise ValueError(f"need at least as many rows as columns in z ({m} < {r})")
    if rank > min(r, y.shape[1]):
        raise ValueError(f"rank {rank} exceeds min({r}, {y.shape[1]})")
    qz, rz = reduced_qr(z)  # raises RankDeficientError for degenerate z
    # x_ls = rz^{-1} qz^T y  is the full least squares solution (r x s)
    x_ls = scipy.linalg.solve_triangular(rz, qz.T @ y, lower=False)
    width = min(rank + oversample, y.shape[1])
    gauss = rng.standard_normal((y.shape[1], width))
    c = x_ls @ gauss
    q, _ = np.linalg.qr(c)
    d = q.T @ x_ls
    res = thin_svd(d)
    core_t = q @ (res.u[:, :rank] * res.singular_values[:rank])
    return core_t, res.v[:, :rank]
