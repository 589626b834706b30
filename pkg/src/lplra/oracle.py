"""Test oracles: planted instances, max-determinant column selection,
alternating-minimization reference values and the CSS lower-bound fixture.

Basis choice in the max-determinant step: if Ã = Ũ Ṽ = Ũ' Ṽ' are two rank-k
factorizations then Ṽ' = G Ṽ for an invertible G, so det Ṽ'_S = det G · det Ṽ_S
for every subset S.  The argmax subset and the Cramer ratios
M_i(j) = det(Ṽ_S with column j replaced by Ṽ_i) / det Ṽ_S do not depend on
which factorization is used.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    Factorization,
    PLike,
    PNorm,
    _frozen,
    as_matrix,
    as_pnorm,
    check_columns,
    column_norms,
    entrywise_norm,
    resolve_seed,
)
from .enumeration import DEFAULT_BUDGET
from .errors import BudgetExceededError
from .regression import RegressionConfig, solve_multi_regression
from .svd_baseline import jacobi_svd

__all__ = [
    "PlantedInstance",
    "perturb",
    "make_planted",
    "algorithm1_select",
    "algorithm1_coefficients",
    "theorem_certificate",
    "brute_force_opt",
    "lower_bound_instance",
]


@dataclass(frozen=True)
class PlantedInstance:
    """A = A* + Delta with rank(A*) <= k and all column norms of Delta > 0."""

    a_star: np.ndarray
    delta: np.ndarray
    a: np.ndarray
    k: int
    p: PNorm
    delta_norm: float
    per_column_delta: np.ndarray
    u_star: Optional[np.ndarray] = None
    v_star: Optional[np.ndarray] = None


def perturb(a, gamma: float, seed: Optional[int] = None) -> np.ndarray:
    """a plus independent Uniform[-gamma, gamma] noise in every entry."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    a = as_matrix(a, "A")
    rng = np.random.default_rng(resolve_seed(seed))
    return a + rng.uniform(-gamma, gamma, size=a.shape)


def make_planted(n: int, m: int, k: int, p: PLike, delta_scale: float,
                 seed: Optional[int] = None) -> PlantedInstance:
    """Random rank-k A* = U V (entries of U, V uniform in [-1, 1]) plus noise.

    The noise Delta is uniform in [-delta_scale, delta_scale], then nudged by
    a 1e-9 * max|A| perturbation so that every column of Delta is nonzero.
    """
    if not 1 <= k <= min(n, m):
        raise ValueError(f"k={k} must lie in [1, {min(n, m)}]")
    if delta_scale < 0:
        raise ValueError("delta_scale must be nonnegative")
    p = as_pnorm(p)
    seed = resolve_seed(seed)
    ss = np.random.SeedSequence(seed)
    main, tie = ss.spawn(2)
    rng = np.random.default_rng(main)
    u = rng.uniform(-1.0, 1.0, size=(n, k))
    v = rng.uniform(-1.0, 1.0, size=(k, m))
    a_star = u @ v
    delta = rng.uniform(-delta_scale, delta_scale, size=(n, m)) if delta_scale > 0 else np.zeros((n, m))
    gamma = 1e-9 * max(float(np.max(np.abs(a_star + delta))), 1e-300)
    delta = perturb(delta, gamma, int(tie.generate_state(1)[0]))
    a = a_star + delta
    # store the exact difference so that a == a_star + delta holds bitwise
    delta = a - a_star
    return PlantedInstance(
        a_star=_frozen(a_star), delta=_frozen(delta), a=_frozen(a), k=k, p=p,
        delta_norm=entrywise_norm(delta, p), per_column_delta=_frozen(column_norms(delta, p)),
        u_star=_frozen(u), v_star=_frozen(v),
    )


def _scaled_right_factor(inst: PlantedInstance) -> np.ndarray:
    """Ṽ (k x m) from a rank-k factorization of A*_i / |Delta_i|_p."""
    scaled = inst.a_star / inst.per_column_delta[None, :]
    sv = jacobi_svd(scaled)
    return sv.vt[: inst.k] * sv.singular_values[: inst.k, None]


def algorithm1_select(inst: PlantedInstance, budget: int = DEFAULT_BUDGET) -> list:
    """Subset S maximizing |det Ṽ_S| (lexicographically first on ties)."""
    vt = _scaled_right_factor(inst)
    k, m = vt.shape
    count = math.comb(m, k)
    if count > budget:
        raise BudgetExceededError(count, budget)
    best, best_det = None, -1.0
    it = itertools.combinations(range(m), k)
    while True:
        block = list(itertools.islice(it, 50_000))
        if not block:
            break
        idx = np.array(block)
        dets = np.abs(np.linalg.det(np.swapaxes(vt[:, idx], 0, 1)))
        j = int(np.argmax(dets))
        if dets[j] > best_det * (1 + 1e-12):
            best, best_det = block[j], float(dets[j])
    return list(best)


def algorithm1_coefficients(inst: PlantedInstance, s: Sequence[int]) -> np.ndarray:
    """M (k x m) with Ṽ_S M_i = Ṽ_i; the max-determinant S has |M| <= 1."""
    vt = _scaled_right_factor(inst)
    cols = check_columns(s, vt.shape[1])
    return np.linalg.solve(vt[:, cols], vt)


def theorem_certificate(inst: PlantedInstance, s: Sequence[int]):
    """Explicit V with |A_i - (A_S V)_i|_p <= (k+1) |Delta_i|_p.

    Column i of V is |Delta_i|_p * (M_i(j) / |Delta_{s_j}|_p)_j.  Returns
    (Factorization, per-column errors, per-column bounds (k+1)|Delta_i|_p).
    """
    cols = list(s)
    mcoef = algorithm1_coefficients(inst, cols)
    d = inst.per_column_delta
    v = mcoef * d[None, :] / d[cols][:, None]
    fac = Factorization(inst.a[:, cols], v, source_columns=tuple(cols))
    errs = column_norms(inst.a - fac.product(), inst.p)
    return fac, errs, (inst.k + 1) * d


def _alternate(a, u, p, cfg, max_iter=100, rtol=1e-10):
    best = math.inf
    for _ in range(max_iter):
        v = solve_multi_regression(u, a, p, cfg).v
        ut = solve_multi_regression(v.T, a.T, p, cfg).v
        u = ut.T
        err = entrywise_norm(a - u @ v, p)
        if err >= best * (1 - rtol):
            best = min(best, err)
            break
        best = err
    return best


def brute_force_opt(a, k: int, p: PLike, restarts: int = 20, seed: Optional[int] = None,
                    cfg: RegressionConfig | None = None) -> float:
    """Best error of alternating minimization over many starts (tiny inputs).

    Starts: ``restarts`` Gaussian U, every k-column subset of A, and the SVD.
    The value is an upper bound on the optimal rank-k lp error.
    """
    a = as_matrix(a, "A")
    p = as_pnorm(p)
    n, m = a.shape
    if n > 8 or m > 8 or k > 2:
        raise ValueError("brute_force_opt is limited to n, m <= 8 and k <= 2")
    if not 1 <= k <= min(n, m):
        raise ValueError(f"k={k} must lie in [1, {min(n, m)}]")
    rng = np.random.default_rng(resolve_seed(seed))
    starts = [rng.standard_normal((n, k)) for _ in range(restarts)]
    starts += [a[:, list(c)] for c in itertools.combinations(range(m), k)]
    sv = jacobi_svd(a)
    starts.append(sv.u[:, :k] * sv.singular_values[:k])
    best = entrywise_norm(a, p)
    for u in starts:
        if not np.any(u):
            continue
        best = min(best, _alternate(a, u, p, cfg))
    return float(best)


def lower_bound_instance(k: int):
    """(A = (k+1) I_{k+1}, k+1, B = (k+1) I - E) where E is all ones.

    Every k columns of A leave ell_inf error k+1, while B has rank k (its
    columns sum to zero) and |A - B|_inf = 1.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    size = k + 1
    a = size * np.eye(size)
    b = a - np.ones((size, size))
    return a, float(size), b
