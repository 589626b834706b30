"""lp regression: min_y |U y - v|_p for one or many right-hand sides.

Three solution paths:

* ``Mode.EXACT``: one linear program per right-hand side for p in {1, inf}
  (scipy's HiGHS).  This is the reference the other paths are tested against.
* ``Mode.ITERATIVE``: reweighted least squares.  Each step is a Newton step
  computed as a weighted least-squares solve; for p < 2 the objective is
  smoothed as sum (r^2 + eps^2)^(p/2) and eps is driven down to
  ``epsilon_weight``.  p = inf is run at p = 64 and then polished exactly.
* ``Mode.AUTO``: least squares for p = 2; otherwise the iterative solution
  plus a certificate.  For finite p a Hoelder dual point gives a rigorous
  lower bound, and for p = 1 any problem whose duality gap exceeds 1e-9
  (relative) is handed to the LP.  For p = inf the iterate is snapped to a
  Chebyshev reference set and checked with the sign conditions on its
  multipliers, again with the LP as fallback.

Many small problems with different bases are solved together through
:func:`solve_stack`.  Bases are handled in their SVD coordinates, so a
rank-deficient basis yields the minimum 2-norm minimizer.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import linprog

from .core import PLike, PNorm, as_pnorm
from .errors import ShapeError

__all__ = [
    "Mode",
    "RegressionConfig",
    "RegressionResult",
    "MultiRegressionResult",
    "StackResult",
    "METHOD_NAMES",
    "solve_regression",
    "solve_exact_lp",
    "solve_multi_regression",
    "solve_stack",
]

INF_SURROGATE_P = 64.0
CERTIFY_GAP = 1e-9
_LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
_LP_ATTEMPTS = [
    (False, _LP_OPTIONS, "highs"),
    (True, _LP_OPTIONS, "highs"),
    (False, {}, "highs"),
    (True, {}, "highs-ipm"),
]
_CHUNK_ENTRIES = 2_000_000
_EPS_SHRINK = 0.01

METHOD_NAMES = ("lstsq", "irls", "certified", "lp", "irls-fallback")
_LSTSQ, _IRLS, _CERT, _LP, _FALLBACK = range(5)


class Mode(enum.Enum):
    EXACT = "exact"
    ITERATIVE = "iterative"
    AUTO = "auto"


@dataclass(frozen=True)
class RegressionConfig:
    tol: float = 1e-8
    max_iter: int = 500
    epsilon_weight: float = 1e-12
    mode: Mode = Mode.AUTO

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.epsilon_weight > 0:
            raise ValueError("epsilon_weight must be positive")
        if not isinstance(self.mode, Mode):
            object.__setattr__(self, "mode", Mode(self.mode))


DEFAULT_CONFIG = RegressionConfig()


class RegressionResult(NamedTuple):
    y: np.ndarray
    residual: float
    converged: bool
    method: str


class MultiRegressionResult(NamedTuple):
    v: np.ndarray
    residuals: np.ndarray
    converged: np.ndarray
    methods: tuple

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))


class StackResult(NamedTuple):
    """Solutions for a stack of problems; row i belongs to problem i."""

    y: np.ndarray  # (P, r)
    residual: np.ndarray  # (P,) |b_i y_i - t_i|_p
    lower: np.ndarray  # (P,) rigorous lower bound on the optimum
    converged: np.ndarray  # (P,) bool
    method: np.ndarray  # (P,) index into METHOD_NAMES


# ---------------------------------------------------------------------------
# batched kernels; b is (P, n, r), vectors are (P, n) or (P, r)


def _norms(e: np.ndarray, p: PNorm) -> np.ndarray:
    """Row-wise lp norms of a (P, n) array, overflow-safe."""
    a = np.abs(e)
    peak = np.max(a, axis=1)
    if p.is_inf:
        return peak
    safe = np.where(peak > 0, peak, 1.0)
    return peak * np.sum((a / safe[:, None]) ** p.value, axis=1) ** (1.0 / p.value)


def _matvec(b: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.matmul(b, x[:, :, None])[:, :, 0]


def _rmatvec(b: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.matmul(x[:, None, :], b)[:, 0, :]


def _weighted_lstsq(b: np.ndarray, target: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Problem i solves min |sqrt(w_i) (b_i d - target_i)|_2 plus a tiny ridge.

    Solved through the normal equations: the bases are small and have
    orthogonal columns, and the outer line search tolerates inexact steps.
    The ridge also pins coordinates whose basis column is zero to 0.
    """
    r = b.shape[2]
    w = w / np.max(w, axis=1, keepdims=True)
    wb = w[:, :, None] * b
    gram = np.matmul(np.swapaxes(wb, 1, 2), b)
    lam = 1e-12 * np.trace(gram, axis1=1, axis2=2)
    lam = np.where(lam > 0, lam, 1e-300)
    gram = gram + lam[:, None, None] * np.eye(r)[None]
    rhs = _rmatvec(wb, target)
    return np.linalg.solve(gram, rhs[:, :, None])[:, :, 0]


def _irls(b, t, z, scale, p: float, cfg: RegressionConfig):
    """Damped Newton iterations on a stack, started from z.

    Residuals are measured in units of ``scale`` (P,).  Returns
    (z, converged, eps) where eps is the final smoothing level per problem
    (zero for p >= 2).  The iterate with the best true objective is kept.
    """
    npb = b.shape[0]
    converged = np.zeros(npb, dtype=bool)
    smoothed = p < 2

    def objective(rr, e):
        if smoothed:
            return np.sum((rr * rr + (e * e)[:, None]) ** (p / 2.0), axis=1)
        with np.errstate(over="ignore"):
            return np.sum(np.abs(rr) ** p, axis=1)

    res = (_matvec(b, z) - t) / scale[:, None]
    top = np.max(np.abs(res), axis=1)
    eps = np.maximum(top, cfg.epsilon_weight) if smoothed else np.zeros(npb)
    with np.errstate(over="ignore"):
        best_f = np.sum(np.abs(res) ** p, axis=1)
    best_z = z.copy()
    active = np.flatnonzero(top > 1e-13)
    converged[top <= 1e-13] = True

    for _ in range(cfg.max_iter):
        if active.size == 0:
            break
        ba, ta, za, sa = b[active], t[active], z[active], scale[active]
        ra = (_matvec(ba, za) - ta) / sa[:, None]
        ea = eps[active]
        if smoothed:
            q = ra * ra + (ea * ea)[:, None]
            grad = p * ra * q ** (p / 2.0 - 1.0)
            curv = (p - 1.0) * ra * ra + (ea * ea)[:, None]
            w = q ** (p / 2.0 - 2.0) * curv
            target = -ra * q / curv
        else:
            ab = np.abs(ra)
            peak = np.max(ab, axis=1, keepdims=True)
            rel_ab = ab / np.where(peak > 0, peak, 1.0)
            # gradient in units of peak^(p-1); only its sign against bd matters
            grad = p * np.sign(ra) * rel_ab ** (p - 1.0)
            w = rel_ab ** (p - 2.0) + 1e-300
            target = -ra / (p - 1.0)
        d = _weighted_lstsq(ba, target, w)
        bd = _matvec(ba, d)
        decrement = -np.sum(grad * bd, axis=1)
        cur = objective(ra, ea)
        if not smoothed:
            scale_p = np.max(np.abs(ra), axis=1) ** (p - 1.0)
            decrement = decrement * scale_p
        step = np.ones(active.size)
        new_obj = cur.copy()
        z_new = za.copy()
        pending = np.flatnonzero(decrement > 0)
        for _ in range(50):
            if pending.size == 0:
                break
            rc = ra[pending] + step[pending, None] * bd[pending]
            fc = objective(rc, ea[pending])
            ok = fc <= cur[pending]
            hit = pending[ok]
            z_new[hit] = za[hit] + (step[hit] * sa[hit])[:, None] * d[hit]
            new_obj[hit] = fc[ok]
            pending = pending[~ok]
            step[pending] *= 0.5
        z[active] = z_new
        rn = (_matvec(ba, z_new) - ta) / sa[:, None]
        with np.errstate(over="ignore"):
            f_true = np.sum(np.abs(rn) ** p, axis=1)
        better = f_true < best_f[active]
        best_f[active[better]] = f_true[better]
        best_z[active[better]] = z_new[better]
        rel = (cur - new_obj) / np.where(cur > 0, cur, 1.0)
        level_done = (decrement <= cfg.tol * cur) | (rel <= 1e-15)
        if smoothed:
            at_floor = ea <= cfg.epsilon_weight * (1 + 1e-12)
            shrink = level_done & ~at_floor
            eps[active[shrink]] = np.maximum(ea[shrink] * _EPS_SHRINK, cfg.epsilon_weight)
            finished = level_done & at_floor
        else:
            finished = level_done
        converged[active[finished]] = True
        active = active[~finished]
    return best_z, converged, eps


def _dual_lower(b_orth, t, e, scale, p: float, p_grad: float):
    """Hoelder lower bound on min_y |b y - t|_p (finite p).

    For any u orthogonal to span(b), t^T u = (t - b y)^T u <= |b y - t|_p |u|_q,
    so t^T u / |u|_q bounds the optimum from below.  u is the projected
    gradient at the iterate, which makes the bound tight at the optimum.
    ``b_orth`` has orthonormal (or zero) columns; e = (t - b y) / scale.
    For p = inf the gradient of the p_grad surrogate is used.
    """
    if p == 1.0:
        g = _l1_dual_guess(b_orth, e)
    else:
        a = np.abs(e)
        peak = np.max(a, axis=1, keepdims=True)
        g = np.sign(e) * (a / np.where(peak > 0, peak, 1.0)) ** (p_grad - 1.0)
    u = g - _matvec(b_orth, _rmatvec(b_orth, g))
    tu = np.sum((t / scale[:, None]) * u, axis=1)
    if p == 1.0:
        qn = np.max(np.abs(u), axis=1)
    elif np.isinf(p):
        qn = np.sum(np.abs(u), axis=1)
    else:
        qn = _norms(u, PNorm(p / (p - 1.0)))
    with np.errstate(divide="ignore", invalid="ignore"):
        lb = np.where(qn > 0, tu / qn, 0.0)
    return np.maximum(lb, 0.0) * scale


def _l1_dual_guess(b, e):
    """Dual point for p = 1: sign(e) off the (near-)zero set Z, and on Z the
    minimum-norm u_Z with b_Z^T u_Z = -b_N^T sign(e_N)."""
    npb, n, r = b.shape
    a = np.abs(e)
    rank = np.argsort(np.argsort(a, axis=1, kind="stable"), axis=1)
    zero = (a <= 1e-7 * np.max(a, axis=1, keepdims=True)) | (rank < r)
    g = np.where(zero, 0.0, np.sign(e))
    bz = b * zero[:, :, None]
    rhs = -_rmatvec(b, g)
    gram = np.einsum("pnr,pns->prs", bz, bz)
    coef = np.einsum("prs,ps->pr", np.linalg.pinv(gram, hermitian=True), rhs)
    return g + _matvec(bz, coef)


def _snap_linf(b, t, z, ok_rank):
    """Snap p = inf iterates to their Chebyshev reference sets.

    The r + 1 largest residuals of a near-optimal iterate pick the reference
    rows; solving [b_ref, -s] [y; h] = t_ref gives the candidate and level h.
    It is optimal when all residuals are within h and the multipliers of the
    reference rows are nonnegative.  Nonnegative multipliers alone already
    make h a lower bound on the optimum.  Returns (z, certified, level)
    with level = 0 where no bound was obtained.
    """
    npb, n, r = b.shape
    cert = np.zeros(npb, dtype=bool)
    level = np.zeros(npb)
    z_out = z.copy()
    idx = np.flatnonzero(ok_rank)
    if n <= r or idx.size == 0:
        return z_out, cert, level
    bb, tt = b[idx], t[idx]
    e = _matvec(bb, z[idx]) - tt
    ref = np.argsort(-np.abs(e), axis=1, kind="stable")[:, : r + 1]
    rows = np.arange(idx.size)[:, None]
    s = np.sign(e[rows, ref])
    bref = bb[rows, ref]
    mat = np.concatenate([bref, -s[:, :, None]], axis=2)
    dual = np.concatenate(
        [np.swapaxes(s[:, :, None] * bref, 1, 2), np.ones((idx.size, 1, r + 1))], axis=1
    )
    with np.errstate(all="ignore"):
        good = (
            np.all(s != 0, axis=1)
            & (np.linalg.cond(mat) < 1e12)
            & (np.linalg.cond(dual) < 1e12)
        )
    if not np.any(good):
        return z_out, cert, level
    g = np.flatnonzero(good)
    rhs_p = tt[g][np.arange(g.size)[:, None], ref[g]]
    sol = np.linalg.solve(mat[g], rhs_p[:, :, None])[:, :, 0]
    zs, h = sol[:, :r], sol[:, r]
    unit = np.zeros((g.size, r + 1, 1))
    unit[:, r, 0] = 1.0
    lam = np.linalg.solve(dual[g], unit)[:, :, 0]
    res = np.max(np.abs(_matvec(bb[g], zs) - tt[g]), axis=1)
    tsc = np.max(np.abs(tt[g]), axis=1)
    signs_ok = (h > 0) & (np.min(lam, axis=1) >= -1e-10)
    fine = signs_ok & (res <= h * (1 + 1e-9) + 1e-14 * tsc)
    z_out[idx[g[fine]]] = zs[fine]
    cert[idx[g[fine]]] = True
    level[idx[g[signs_ok]]] = h[signs_ok] * (1 - 1e-9)
    return z_out, cert, level


def _compress(u: np.ndarray):
    """(basis, back) with span(basis) = span(u) and y = back @ z.

    ``back`` is None when u has full column rank.
    """
    n, r = u.shape
    if not np.any(u):
        return np.zeros((n, 0)), np.zeros((r, 0))
    q, s, wt = np.linalg.svd(u, full_matrices=False)
    rank = int(np.sum(s > max(n, r) * np.finfo(float).eps * s[0]))
    if rank == r:
        return u, None
    return q[:, :rank] * s[:rank], wt[:rank].T


def _lp(u: np.ndarray, t: np.ndarray, p: PNorm):
    """Exact LP for one problem.  Returns (y, ok)."""
    n, r0 = u.shape
    b, back = _compress(u)
    r = b.shape[1]
    if r == 0:
        return np.zeros(r0), True
    if p.is_inf:
        ones = np.ones((n, 1))
        a_ub = np.block([[b, -ones], [-b, -ones]])
        c = np.r_[np.zeros(r), 1.0]
        bounds = [(None, None)] * r + [(0, None)]
    else:
        eye = np.eye(n)
        a_ub = np.block([[b, -eye], [-b, -eye]])
        c = np.r_[np.zeros(r), np.ones(n)]
        bounds = [(None, None)] * r + [(0, None)] * n
    tsc = float(np.max(np.abs(t))) or 1.0
    csc = np.max(np.abs(b), axis=0)
    csc = np.where(csc > 0, csc, 1.0)
    # HiGHS occasionally reports numerical trouble; unit-scaled data and its
    # default tolerances are the fallbacks
    for scaled, opts, method in _LP_ATTEMPTS:
        cs = csc if scaled else np.ones(r)
        ts = tsc if scaled else 1.0
        mat = a_ub.copy()
        mat[:, :r] /= cs[None, :]
        try:
            out = linprog(c, A_ub=mat, b_ub=np.r_[t, -t] / ts, bounds=bounds, method=method, options=opts)
        except ValueError:
            continue
        if out.status == 0 and out.x is not None:
            out.x[:r] *= ts / cs
            break
    else:
        return np.zeros(r0), False
    z = out.x[:r]
    return (z if back is None else back @ z), True


def _solve_chunk(bs, ts, p: PNorm, cfg: RegressionConfig, screen: bool):
    npb, n, r = bs.shape
    method = np.full(npb, _LSTSQ)
    conv = np.ones(npb, dtype=bool)
    tscale = np.max(np.abs(ts), axis=1)
    scale = np.where(tscale > 0, tscale, 1.0)

    ub_, s_, vt_ = np.linalg.svd(bs, full_matrices=False)
    keep = (s_ > max(n, r) * np.finfo(float).eps * s_[:, :1]) & (s_ > 0)
    sk = np.where(keep, s_, 0.0)
    b_orth = ub_ * keep[:, None, :]
    basis = b_orth * sk[:, None, :]
    full_rank = np.all(keep, axis=1)

    z = np.where(keep, _rmatvec(b_orth, ts) / np.where(keep, sk, 1.0), 0.0)
    resid = _matvec(basis, z) - ts
    in_span = np.max(np.abs(resid), axis=1) <= 1e-12 * scale
    lower = np.full(npb, np.nan)
    lower[in_span] = 0.0
    y = np.einsum("pji,pj->pi", vt_, z)

    two = (not p.is_inf) and p.value == 2.0
    lp_able = p.is_inf or p.value == 1.0
    if cfg.mode is Mode.EXACT and not (lp_able or two):
        raise ValueError(f"exact mode supports p in {{1, inf}}, not p = {p}")

    todo = np.flatnonzero(~in_span)
    retry = todo[:0]
    if two:
        todo = todo[:0]
    elif cfg.mode is Mode.EXACT and not screen:
        retry, todo = todo, todo[:0]

    if todo.size:
        p_iter = INF_SURROGATE_P if p.is_inf else p.value
        zi, ci, _ = _irls(basis[todo], ts[todo], z[todo].copy(), scale[todo], p_iter, cfg)
        conv[todo] = ci
        method[todo] = _IRLS
        y[todo] = np.einsum("pji,pj->pi", vt_[todo], zi)
        e = (ts[todo] - _matvec(basis[todo], zi)) / scale[todo, None]
        lower[todo] = _dual_lower(b_orth[todo], ts[todo], e, scale[todo], p.value, p_iter)
        if p.is_inf and (screen or cfg.mode is Mode.AUTO or r <= 32):
            zs, cert, level = _snap_linf(basis[todo], ts[todo], zi, full_rank[todo])
            lower[todo] = np.maximum(lower[todo], level)
            # degenerate optima (e.g. +-1 data) often sit at y = 0
            zero_ok = ~cert & (tscale[todo] - lower[todo] <= CERTIFY_GAP * tscale[todo])
            zs[zero_ok] = 0.0
            cert = cert | zero_ok
            hit = todo[cert]
            y[hit] = np.einsum("pji,pj->pi", vt_[hit], zs[cert])
            method[hit] = _CERT
            conv[hit] = True
            retry = todo[~cert]
        elif cfg.mode is Mode.AUTO and p.value == 1.0:
            ub = _norms(_matvec(bs[todo], y[todo]) - ts[todo], p)
            cert = ub - lower[todo] <= CERTIFY_GAP * ub
            method[todo[cert]] = _CERT
            conv[todo[cert]] = True
            retry = todo[~cert]
    if screen:
        retry = retry[:0]

    for i in retry:
        yi, ok = _lp(bs[i], ts[i], p)
        if ok:
            y[i] = yi
            method[i] = _LP
            conv[i] = True
            lower[i] = np.nan
        else:
            warnings.warn("LP solver failed; keeping the iterative solution", RuntimeWarning)
            if method[i] == _LSTSQ:
                conv[i] = False
            method[i] = _FALLBACK

    residual = _norms(_matvec(bs, y) - ts, p)
    exact = (method == _LP) | (method == _LSTSQ) | ((method == _CERT) & p.is_inf)
    lower = np.where(exact & np.isnan(lower), residual, lower)
    lower = np.where(np.isnan(lower), 0.0, np.minimum(lower, residual))
    return y, residual, lower, conv, method


def solve_stack(bs, ts, p: PLike, cfg: RegressionConfig | None = None, *,
                screen: bool = False) -> StackResult:
    """Solve min_y |bs[i] y - ts[i]|_p for every i.

    ``bs`` is (P, n, r) (a broadcast view is fine) and ``ts`` is (P, n).
    Problems are independent: the answer for one never depends on the others.
    With ``screen=True`` no LP is ever called; the result then carries the
    iterative solution and a rigorous lower bound, which is what pruned
    subset searches need.
    """
    cfg = cfg or DEFAULT_CONFIG
    p = as_pnorm(p)
    bs = np.asarray(bs, dtype=np.float64)
    ts = np.asarray(ts, dtype=np.float64)
    if bs.ndim != 3 or ts.ndim != 2 or bs.shape[:2] != ts.shape:
        raise ShapeError(f"stack shapes do not conform: bases {bs.shape}, targets {ts.shape}")
    npb, n, r = bs.shape
    out = StackResult(np.zeros((npb, r)), np.zeros(npb), np.zeros(npb),
                      np.zeros(npb, dtype=bool), np.zeros(npb, dtype=int))
    step = max(1, _CHUNK_ENTRIES // max(1, n * (r + 1)))
    for lo in range(0, npb, step):
        hi = min(npb, lo + step)
        part = _solve_chunk(np.ascontiguousarray(bs[lo:hi]), ts[lo:hi], p, cfg, screen)
        for dst, src in zip(out, part):
            dst[lo:hi] = src
    return out


# ---------------------------------------------------------------------------
# public API


def _check_shapes(u: np.ndarray, a: np.ndarray):
    if u.ndim != 2 or a.ndim != 2 or u.shape[0] != a.shape[0]:
        raise ShapeError(f"U {u.shape} and right-hand side {a.shape} have different row counts")
    if u.shape[0] < 1 or u.shape[1] < 1:
        raise ShapeError(f"U must be nonempty, got {u.shape}")


def solve_multi_regression(u, a, p: PLike, cfg: RegressionConfig | None = None) -> MultiRegressionResult:
    """Column-wise lp fit of ``a`` onto span(u); returns V with a ~ u @ V.

    For finite p the entrywise objective |a - u V|_p^p splits over columns;
    for p = inf the matrix max is the max of the column maxima, so solving
    each column to its own minimax optimum also minimizes the whole.
    """
    u = np.asarray(u, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if u.ndim == 1:
        u = u[:, None]
    _check_shapes(u, a)
    m = a.shape[1]
    out = solve_stack(np.broadcast_to(u, (m,) + u.shape), a.T, p, cfg)
    return MultiRegressionResult(out.y.T.copy(), out.residual, out.converged,
                                 tuple(METHOD_NAMES[i] for i in out.method))


def solve_regression(u, v, p: PLike, cfg: RegressionConfig | None = None) -> RegressionResult:
    """Minimize |u y - v|_p over y.

    Never raises on non-convergence: the best iterate comes back with
    ``converged=False``.
    """
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    out = solve_multi_regression(u, v[:, None], p, cfg)
    return RegressionResult(out.v[:, 0], float(out.residuals[0]), bool(out.converged[0]), out.methods[0])


def solve_exact_lp(u, v, p: PLike) -> RegressionResult:
    """LP solution for p = 1 or p = inf."""
    p = as_pnorm(p)
    if not (p.is_inf or p.value == 1.0):
        raise ValueError(f"exact LP mode requires p = 1 or p = inf, got p = {p}")
    return solve_regression(u, v, p, RegressionConfig(mode=Mode.EXACT))
