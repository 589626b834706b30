"""Collapse a rank-r factorization to rank k, exhaustively or by sketching.

The well-conditioned basis is a thin orthonormal basis Q of span(U), scaled
by an upper bound c on its p -> p operator norm, so B = Q / c satisfies
|Bx|_p <= |x|_p for every x.  Because Q^T Q = I, |x|_p <= |Q^T|_{p->p} |Qx|_p,
so kappa = c |Q^T|_{p->p} gives the lower side |x|_p / kappa <= |Bx|_p.
Both operator norms are bounded by Riesz-Thorin interpolation between the
exact 1, 2 and inf operator norms.  Random and extreme test vectors then
re-check both inequalities numerically.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    ApproxReport,
    Factorization,
    PLike,
    PNorm,
    as_matrix,
    as_pnorm,
    column_norms,
    residual_norm,
    resolve_seed,
)
from .enumeration import Exhaustive, Sampled, SubsetSearchConfig, best_subset
from .errors import IsoperimetryError, UnsupportedNormError
from .regression import DEFAULT_CONFIG, RegressionConfig, solve_multi_regression
from .svd_baseline import jacobi_svd

__all__ = [
    "IsoBasis",
    "SketchPair",
    "ALL_ROWS",
    "isoperimetric_basis",
    "certify_isoperimetry",
    "isoperimetry_samples",
    "reduce_rank",
    "lp_leverage_scores",
    "draw_sketch",
    "sketched_reduce",
    "rank_constrained_frobenius",
]

ALL_ROWS = "all"
DEFAULT_CERTIFY = 10_000
_SLACK = 1e-9


@dataclass(frozen=True)
class IsoBasis:
    b: np.ndarray
    kappa: float
    construction: str  # "qr" or "qr-rescaled"
    samples_checked: int
    upper_scale: float = 1.0
    dropped_columns: tuple = ()
    kept_columns: tuple = ()


@dataclass(frozen=True)
class SketchPair:
    """Sampling-and-rescaling matrices S (rows) and T (columns) as index lists."""

    rows: np.ndarray
    row_weights: np.ndarray
    cols: np.ndarray
    col_weights: np.ndarray
    seed: int

    def apply_rows(self, m: np.ndarray) -> np.ndarray:
        return self.row_weights[:, None] * m[self.rows]

    def apply_cols(self, m: np.ndarray) -> np.ndarray:
        return m[:, self.cols] * self.col_weights[None, :]


# ---------------------------------------------------------------------------
# well-conditioned basis


def _interpolated_norm(m: np.ndarray, p: PNorm) -> float:
    """Upper bound on the p -> p operator norm of m (Riesz-Thorin)."""
    n1 = float(np.max(np.sum(np.abs(m), axis=0)))
    ninf = float(np.max(np.sum(np.abs(m), axis=1)))
    n2 = float(np.linalg.norm(m, 2))
    if p.is_inf:
        return ninf
    q = p.value
    if q <= 2:
        theta = 2.0 * (1.0 - 1.0 / q)
        return n1 ** (1.0 - theta) * n2 ** theta
    theta = 1.0 - 2.0 / q
    return n2 ** (1.0 - theta) * ninf ** theta


def _upper_scale(q: np.ndarray, p: PNorm) -> float:
    r = q.shape[1]
    bound = _interpolated_norm(q, p)
    # |Qx|_p <= max_j |Q_j|_p |x|_1 <= max_j |Q_j|_p r^(1 - 1/p) |x|_p
    colmax = float(np.max(column_norms(q, p)))
    power = 1.0 if p.is_inf else 1.0 - 1.0 / p.value
    return min(bound, colmax * r ** power)


def _independent_columns(u: np.ndarray):
    """Greedy left-to-right selection of linearly independent columns."""
    n, r = u.shape
    scale = max(float(np.max(np.abs(u))), 1e-300)
    kept = []
    basis = np.zeros((n, 0))
    for j in range(r):
        col = u[:, j]
        resid = col - basis @ (basis.T @ col)
        resid = resid - basis @ (basis.T @ resid)
        if np.linalg.norm(resid) > 1e-10 * max(np.linalg.norm(col), scale):
            kept.append(j)
            basis = np.hstack([basis, (resid / np.linalg.norm(resid))[:, None]])
    return kept


def isoperimetry_samples(r: int, p: PLike, count: int, seed: int) -> np.ndarray:
    """(count, r) unit-lp test vectors.

    Canonical vectors and 100 sign patterns come first (the extremes of |Bx|_p
    sit near sparse and flat vectors), the rest are sign-symmetric draws
    x_i = s_i g_i^(1/p) with g uniform on the simplex.
    """
    p = as_pnorm(p)
    rng = np.random.default_rng(seed)
    parts = [np.eye(r)]
    signs = rng.choice([-1.0, 1.0], size=(100, r))
    parts.append(signs)
    rest = max(0, count - r - 100)
    if rest:
        g = rng.dirichlet(np.ones(r), size=rest) if r > 1 else np.ones((rest, 1))
        s = rng.choice([-1.0, 1.0], size=(rest, r))
        if p.is_inf:
            x = s * rng.random((rest, r))
        else:
            x = s * g ** (1.0 / p.value)
        parts.append(x)
    x = np.vstack(parts)[: max(count, r)]
    norms = _row_norms(x, p)
    return x / norms[:, None]


def _row_norms(x: np.ndarray, p: PNorm) -> np.ndarray:
    return column_norms(x.T, p)


def certify_isoperimetry(b: np.ndarray, kappa: float, p: PLike, samples: int = DEFAULT_CERTIFY,
                         seed: int = 0) -> int:
    """Number of sampled x violating |x|/kappa <= |Bx| <= |x| (1 + 1e-9)."""
    p = as_pnorm(p)
    x = isoperimetry_samples(b.shape[1], p, samples, seed)
    xn = _row_norms(x, p)
    bx = _row_norms(x @ b.T, p)
    low = bx < xn / kappa * (1 - _SLACK)
    high = bx > xn * (1 + _SLACK)
    return int(np.sum(low | high))


def isoperimetric_basis(u, p: PLike, certify_samples: int = DEFAULT_CERTIFY,
                        seed: Optional[int] = None) -> IsoBasis:
    """Basis B of span(u) with |x|_p / kappa <= |Bx|_p <= |x|_p.

    Linearly dependent columns of u are dropped first (recorded in
    ``dropped_columns``); the result has as many columns as rank(u).
    """
    u = as_matrix(u, "U")
    p = as_pnorm(p)
    seed = resolve_seed(seed)
    kept = _independent_columns(u)
    dropped = tuple(j for j in range(u.shape[1]) if j not in kept)
    if not kept:
        raise IsoperimetryError("U has rank 0; no basis to build")
    q, rr = np.linalg.qr(u[:, kept])
    q = q * np.where(np.diag(rr) < 0, -1.0, 1.0)[None, :]
    r = q.shape[1]
    if r == 1:
        c = float(column_norms(q, p)[0])
        kappa = 1.0
    else:
        c = _upper_scale(q, p)
        kappa = c * _interpolated_norm(q.T, p)
        # p <= 2: |Qx|_p >= |x|_2 >= r^(1/2 - 1/p) |x|_p
        if not p.is_inf and p.value <= 2:
            kappa = min(kappa, c * r ** (1.0 / p.value - 0.5))
        kappa = max(kappa, 1.0)
    b = q / c
    construction = "qr" if abs(c - 1.0) <= 1e-15 else "qr-rescaled"
    bad = certify_isoperimetry(b, kappa, p, certify_samples, seed) if certify_samples > 0 else 0
    if bad:
        raise IsoperimetryError(f"{bad} of {certify_samples} samples violate kappa = {kappa:.6g}")
    return IsoBasis(b=b, kappa=float(kappa), construction=construction,
                    samples_checked=int(certify_samples), upper_scale=float(c),
                    dropped_columns=dropped, kept_columns=tuple(kept))


# ---------------------------------------------------------------------------
# exhaustive rank reduction


def _refit(a, w, p, cfg):
    fit = solve_multi_regression(w, a, p, cfg)
    return fit.v, fit.all_converged


def reduce_rank(a, f: Factorization, k: int, p: PLike, inner: SubsetSearchConfig | None = None,
                cfg: RegressionConfig | None = None, *, refit: bool = True,
                certify_samples: int = DEFAULT_CERTIFY, seed: Optional[int] = None):
    """Rank-k factorization W Z from a rank-r one U V.

    W0 is the well-conditioned basis of span(U), Z0 the column-wise fit of
    UV onto W0, and the k-subset search on Z0^T gives X, Y with
    Z0^T ~ X Y; then Z = X^T and W = W0 Y^T.  With ``refit`` Z is finally
    replaced by the column-wise lp fit of A onto W, which never increases
    the error; the unrefitted error is kept in the report.
    """
    t0 = time.perf_counter()
    a = as_matrix(a, "A")
    p = as_pnorm(p)
    cfg = cfg or DEFAULT_CONFIG
    seed = resolve_seed(seed)
    u, v = f.u, f.v
    r = u.shape[1]
    if a.shape != (u.shape[0], v.shape[1]):
        raise ValueError(f"factorization {u.shape} x {v.shape} does not match A {a.shape}")
    if r < k:
        raise ValueError(f"input rank {r} is below the target rank {k}")
    iso = isoperimetric_basis(u, p, certify_samples, seed)
    w0 = iso.b
    uv = u @ v
    z0 = solve_multi_regression(w0, uv, p, cfg).v
    r_eff = w0.shape[1]
    notes = []
    params = {"kappa": iso.kappa, "construction": iso.construction,
              "dropped_columns": iso.dropped_columns, "input_rank": r}
    if r_eff <= k:
        # span(U) already has dimension <= k; pad to exactly k columns
        w = np.hstack([w0, np.zeros((w0.shape[0], k - r_eff))])
        z = np.vstack([z0, np.zeros((k - r_eff, z0.shape[1]))])
        inner_name = "identity"
        if r_eff < k:
            notes.append(f"span(U) has dimension {r_eff} < k; padded with zero columns")
    else:
        inner = inner or SubsetSearchConfig(regression=cfg)
        budget = inner.budget
        if isinstance(inner.strategy, Exhaustive) and math.comb(r_eff, k) > budget:
            inner = SubsetSearchConfig(Sampled(2000, seed), budget, inner.regression, inner.tie_rtol)
            notes.append(f"C({r_eff}, {k}) > {budget}: inner search downgraded to Sampled(2000)")
            params["downgraded"] = True
        sub, rep = best_subset(z0.T, k, p, inner, delta2=0.0)
        x, y = sub.u, sub.v
        z = x.T
        w = w0 @ y.T
        inner_name = rep.algorithm
        params["inner_subset"] = sub.source_columns
    err_direct = residual_norm(a, Factorization(w, z), p)
    params["error_before_refit"] = err_direct
    converged = True
    if refit:
        z_new, converged = _refit(a, w, p, cfg)
        if residual_norm(a, Factorization(w, z_new), p) <= err_direct:
            z = z_new
    fac = Factorization(w, z)
    params["inner"] = inner_name
    report = ApproxReport(
        algorithm="reduce", error_p=residual_norm(a, fac, p), delta2=0.0, seed=seed,
        elapsed=time.perf_counter() - t0, p=p, k=k, columns_used=k, converged=converged,
        notes=notes, params=params,
    )
    return fac, report


# ---------------------------------------------------------------------------
# sketched variant


def lp_leverage_scores(u, p: PLike, certify_samples: int = 0) -> np.ndarray:
    """Row probabilities proportional to |row_i|_p^p of the well-conditioned basis."""
    p = as_pnorm(p)
    if p.is_inf:
        raise UnsupportedNormError("lp leverage scores are defined for finite p only")
    iso = isoperimetric_basis(u, p, certify_samples)
    b = iso.b
    peak = float(np.max(np.abs(b)))
    w = np.sum((np.abs(b) / peak) ** p.value, axis=1)
    return w / np.sum(w)


def _draw(prob: np.ndarray, count, p: PNorm, rng):
    size = prob.size
    if count == ALL_ROWS:
        return np.arange(size), np.ones(size)
    idx = rng.choice(size, size=int(count), replace=True, p=prob)
    # E |S y|_p^p = |y|_p^p for weights (1 / (s q_i))^(1/p)
    weights = (1.0 / (int(count) * prob[idx])) ** (1.0 / p.value)
    return idx, weights


def default_sketch_size(k: int, m: int, cap: int) -> int:
    return int(min(cap, max(1, math.ceil((k * math.log(max(m, 2))) ** 2))))


def draw_sketch(u: np.ndarray, v: np.ndarray, p: PLike, k: int, sketch_rows=None,
                seed: Optional[int] = None) -> SketchPair:
    """Row sketch from the leverage scores of U and column sketch from those of V^T.

    ``sketch_rows`` is the number of draws for each side; ``ALL_ROWS`` uses
    every row and column with weight one.
    """
    p = as_pnorm(p)
    if p.is_inf:
        raise UnsupportedNormError("sketching needs finite p; use reduce_rank for p = inf")
    seed = resolve_seed(seed)
    rng_rows, rng_cols = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    n, m = u.shape[0], v.shape[1]
    if sketch_rows is None or sketch_rows == ALL_ROWS:
        srows = scols = sketch_rows
    else:
        srows = scols = int(sketch_rows)
    if sketch_rows is None:
        srows = default_sketch_size(k, m, n)
        scols = default_sketch_size(k, m, m)
    if sketch_rows != ALL_ROWS and (srows < 1 or scols < 1):
        raise ValueError("sketch_rows must be positive")
    rows, rw = _draw(lp_leverage_scores(u, p), srows, p, rng_rows)
    cols, cw = _draw(lp_leverage_scores(v.T, p), scols, p, rng_cols)
    return SketchPair(rows, rw, cols, cw, seed)


def _orth(m: np.ndarray) -> np.ndarray:
    if not np.any(m):
        return np.zeros((m.shape[0], 0))
    q, s, _ = np.linalg.svd(m, full_matrices=False)
    rank = int(np.sum(s > max(m.shape) * np.finfo(float).eps * s[0]))
    return q[:, :rank]


def _rcf_factors(pmat, qmat, rmat, k):
    """(L, R) with X = L R the rank-<=k minimizer of |P X Q - R|_F."""
    qp = _orth(pmat)
    qq = _orth(qmat.T)
    core = qp.T @ rmat @ qq
    r0, c0 = pmat.shape[1], qmat.shape[0]
    if core.size == 0:
        return np.zeros((r0, k)), np.zeros((k, c0))
    sv = jacobi_svd(core)
    kk = min(k, sv.numerical_rank())
    left = np.linalg.pinv(pmat) @ qp @ (sv.u[:, :kk] * sv.singular_values[:kk])
    right = sv.vt[:kk] @ qq.T @ np.linalg.pinv(qmat)
    if kk < k:
        left = np.hstack([left, np.zeros((r0, k - kk))])
        right = np.vstack([right, np.zeros((k - kk, c0))])
    return left, right


def rank_constrained_frobenius(pmat, qmat, rmat, k: int) -> np.ndarray:
    """argmin over rank(X) <= k of |P X Q - R|_F.

    R is projected onto col(P) x row(Q) in orthonormal coordinates, the
    projection is truncated to rank k, and the result is mapped back with
    pseudoinverses.
    """
    pmat = np.asarray(pmat, dtype=np.float64)
    qmat = np.asarray(qmat, dtype=np.float64)
    rmat = np.asarray(rmat, dtype=np.float64)
    if pmat.shape[0] != rmat.shape[0] or qmat.shape[1] != rmat.shape[1]:
        raise ValueError(f"P {pmat.shape}, Q {qmat.shape} and R {rmat.shape} do not conform")
    left, right = _rcf_factors(pmat, qmat, rmat, k)
    return left @ right


def sketched_reduce(a, f: Factorization, k: int, p: PLike, sketch_rows=None,
                    seed: Optional[int] = None, cfg: RegressionConfig | None = None, *,
                    refit: bool = True):
    """Rank-k W Z from U V through the Frobenius problem on a sketch.

    Solves min over rank-k X of |S U X V T - S A T|_F and returns
    W = U L, Z = R V for X = L R; ``refit`` as in :func:`reduce_rank`.
    """
    t0 = time.perf_counter()
    a = as_matrix(a, "A")
    p = as_pnorm(p)
    if p.is_inf:
        raise UnsupportedNormError("sketched_reduce needs finite p; use reduce_rank for p = inf")
    cfg = cfg or DEFAULT_CONFIG
    seed = resolve_seed(seed)
    u, v = f.u, f.v
    if a.shape != (u.shape[0], v.shape[1]):
        raise ValueError(f"factorization {u.shape} x {v.shape} does not match A {a.shape}")
    if u.shape[1] < k:
        raise ValueError(f"input rank {u.shape[1]} is below the target rank {k}")
    sk = draw_sketch(u, v, p, k, sketch_rows, seed)
    su = sk.apply_rows(u)
    vt = sk.apply_cols(v)
    sat = sk.apply_cols(sk.apply_rows(a))
    left, right = _rcf_factors(su, vt, sat, k)
    w = u @ left
    z = right @ v
    err_direct = residual_norm(a, Factorization(w, z), p)
    converged = True
    if refit:
        z_new, converged = _refit(a, w, p, cfg)
        if residual_norm(a, Factorization(w, z_new), p) <= err_direct:
            z = z_new
    fac = Factorization(w, z)
    report = ApproxReport(
        algorithm="sketched", error_p=residual_norm(a, fac, p), delta2=0.0, seed=seed,
        elapsed=time.perf_counter() - t0, p=p, k=k, columns_used=k, converged=converged,
        params={"sketch_rows": int(sk.rows.size), "sketch_cols": int(sk.cols.size),
                "error_before_refit": err_direct},
    )
    return fac, report
