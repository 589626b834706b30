"""Truncated SVD baseline via one-sided (Hestenes) Jacobi rotations.

The matrix is first reduced by column-pivoted QR, A P = Q R, and the
columns of R^T are then orthogonalized by plane rotations; R^T is already
close to having orthogonal columns, so few sweeps are needed.  Rotations in
one round-robin step touch disjoint column pairs, so each step is applied to
all of its pairs at once.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr as pivoted_qr

from .core import Factorization, PLike, as_matrix, entrywise_norm

__all__ = ["SvdResult", "jacobi_svd", "truncated_svd", "baseline_error"]

JACOBI_TOL = 1e-12
MAX_SWEEPS = 60


@dataclass(frozen=True)
class SvdResult:
    u: np.ndarray
    singular_values: np.ndarray
    vt: np.ndarray
    converged: bool
    sweeps: int

    @property
    def rank(self) -> int:
        """Number of stored singular triplets."""
        return len(self.singular_values)

    def numerical_rank(self, rtol: float | None = None) -> int:
        """Count of singular values above rtol * sigma_max (default max(n, m) * eps)."""
        s = self.singular_values
        if s.size == 0 or s[0] == 0:
            return 0
        if rtol is None:
            rtol = max(self.u.shape[0], self.vt.shape[1]) * np.finfo(float).eps
        return int(np.sum(s > rtol * s[0]))


def _round_robin(m: int):
    """Pairings of a round-robin tournament on m players (circle method)."""
    players = list(range(m)) + ([-1] if m % 2 else [])
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        pairs = [(players[i], players[size - 1 - i]) for i in range(size // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a >= 0 and b >= 0]
        if pairs:
            rounds.append((np.array([a for a, _ in pairs]), np.array([b for _, b in pairs])))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _jacobi(g: np.ndarray, tol: float, max_sweeps: int):
    """Return (w, v, sweeps, converged) with w = g v having orthogonal columns."""
    m = g.shape[1]
    w = g.copy()
    v = np.eye(m)
    rounds = _round_robin(m)
    for sweep in range(1, max_sweeps + 1):
        off = 0.0
        for pi, qi in rounds:
            wp, wq = w[:, pi], w[:, qi]
            a = np.sum(wp * wp, axis=0)
            b = np.sum(wq * wq, axis=0)
            c = np.sum(wp * wq, axis=0)
            denom = np.sqrt(a * b)
            rel = np.where(denom > 0, np.abs(c) / np.where(denom > 0, denom, 1.0), 0.0)
            if rel.size:
                off = max(off, float(rel.max()))
            hit = rel > tol
            if not np.any(hit):
                continue
            pi, qi = pi[hit], qi[hit]
            a, b, c = a[hit], b[hit], c[hit]
            zeta = (b - a) / (2.0 * c)
            sgn = np.where(zeta >= 0, 1.0, -1.0)
            t = sgn / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            cs = 1.0 / np.sqrt(1.0 + t * t)
            sn = cs * t
            for mat in (w, v):
                xp, xq = mat[:, pi].copy(), mat[:, qi]
                mat[:, pi] = cs * xp - sn * xq
                mat[:, qi] = sn * xp + cs * xq
        if off <= tol:
            return w, v, sweep, True
    return w, v, max_sweeps, False


def _complete(u: np.ndarray, rank: int) -> np.ndarray:
    """Replace columns rank.. of u by an orthonormal completion."""
    n, r = u.shape
    if rank == r:
        return u
    if rank == 0:
        return np.eye(n)[:, :r]
    q, _ = np.linalg.qr(np.hstack([u[:, :rank], np.eye(n)]))
    out = u.copy()
    out[:, rank:] = q[:, rank:r]
    return out


def jacobi_svd(a, tol: float = JACOBI_TOL, max_sweeps: int = MAX_SWEEPS) -> SvdResult:
    """Thin SVD a = u diag(s) vt with s nonincreasing.

    Each left singular vector is signed so that its largest-magnitude entry
    is nonnegative.
    """
    a = as_matrix(a, "A")
    transpose = a.shape[0] < a.shape[1]
    g = a.T if transpose else a
    n, m = g.shape
    q, r, perm = pivoted_qr(g, mode="economic", pivoting=True)
    # g[:, perm] = q r, and r^T v = w with orthogonal columns, so
    # g = (q v) diag(s) (P w / s)^T
    w, v, sweeps, converged = _jacobi(r.T, tol, max_sweeps)
    s = np.sqrt(np.sum(w * w, axis=0))
    order = np.argsort(-s, kind="stable")
    s, w, v = s[order], w[:, order], v[:, order]
    floor = max(n, m) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > floor))
    wr = np.zeros_like(w)
    wr[:, :rank] = w[:, :rank] / s[:rank]
    # directions of negligible singular values are not normalizable; any
    # orthonormal completion is a valid choice for them
    right = np.empty_like(wr)
    right[perm] = _complete(wr, rank)
    u = q @ v
    left, right = (right, u) if transpose else (u, right)
    peak = np.argmax(np.abs(left), axis=0)
    flip = left[peak, np.arange(left.shape[1])] < 0
    left[:, flip] *= -1
    right[:, flip] *= -1
    return SvdResult(left, s, right.T.copy(), converged, sweeps)


def truncated_svd(a, k: int):
    """Best rank-k Frobenius approximation as (SvdResult, Factorization).

    The factorization is (U_k diag(s_k), Vt_k).
    """
    a = as_matrix(a, "A")
    if not 1 <= k <= min(a.shape):
        raise ValueError(f"k={k} must lie in [1, {min(a.shape)}]")
    full = jacobi_svd(a)
    res = SvdResult(full.u[:, :k].copy(), full.singular_values[:k].copy(),
                    full.vt[:k].copy(), full.converged, full.sweeps)
    fac = Factorization(res.u * res.singular_values, res.vt)
    return res, fac


def baseline_error(a, k: int, p: PLike) -> float:
    """|A - SVD_k(A)|_p."""
    a = as_matrix(a, "A")
    _, fac = truncated_svd(a, k)
    return entrywise_norm(a - fac.product(), p)
