"""Column-subset search: exhaustive over all k-subsets, or over random draws.

Every candidate subset S is scored by |A - A_S V(S)|_p with V(S) the
column-wise lp fit.  Scoring runs in two passes.  A batched screening pass
gives, for each subset, an achieved error and a rigorous lower bound.  Then
subsets are solved exactly (certified IRLS or LP) in order of their lower
bounds until no remaining lower bound can beat the best exact value.  The
argmin is therefore the same as scoring every subset exactly.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence, Union

import numpy as np

from .core import (
    ApproxReport,
    Factorization,
    PLike,
    PNorm,
    as_matrix,
    as_pnorm,
    check_columns,
    residual_norm,
    resolve_seed,
)
from .errors import BudgetExceededError
from .regression import (
    DEFAULT_CONFIG,
    CERTIFY_GAP,
    Mode,
    RegressionConfig,
    solve_multi_regression,
    solve_stack,
)
from .svd_baseline import jacobi_svd

__all__ = [
    "Exhaustive",
    "Sampled",
    "SubsetSearchConfig",
    "DEFAULT_BUDGET",
    "best_subset",
    "subset_error",
    "sampled_subsets",
    "combine_errors",
]

DEFAULT_BUDGET = 2_000_000
_SCREEN_ENTRIES = 1_000_000


@dataclass(frozen=True)
class Exhaustive:
    """All C(m, k) subsets in lexicographic order."""


@dataclass(frozen=True)
class Sampled:
    """``trials`` uniform k-subsets; trial t uses child seed t of ``seed``."""

    trials: int = 2000
    seed: Optional[int] = None

    def __post_init__(self):
        if int(self.trials) < 1:
            raise ValueError(f"Sampled.trials must be >= 1, got {self.trials}")


Strategy = Union[Exhaustive, Sampled]


@dataclass(frozen=True)
class SubsetSearchConfig:
    strategy: Strategy = field(default_factory=Exhaustive)
    budget: int = DEFAULT_BUDGET
    regression: RegressionConfig = DEFAULT_CONFIG
    tie_rtol: float = 1e-12


def combine_errors(col: np.ndarray, p: PNorm, axis=-1) -> np.ndarray:
    """Entrywise error from per-column errors."""
    col = np.asarray(col, dtype=np.float64)
    if p.is_inf:
        return np.max(col, axis=axis)
    peak = np.max(col, axis=axis, keepdims=True)
    safe = np.where(peak > 0, peak, 1.0)
    out = np.squeeze(peak, axis=axis) * np.sum((col / safe) ** p.value, axis=axis) ** (1.0 / p.value)
    return out


def sampled_subsets(m: int, k: int, trials: int, seed: int) -> list:
    """The sorted k-subsets drawn by a Sampled search, one per trial."""
    children = np.random.SeedSequence(seed).spawn(trials)
    out = []
    for child in children:
        rng = np.random.default_rng(child)
        out.append(tuple(sorted(int(c) for c in rng.choice(m, size=k, replace=False))))
    return out


def subset_error(a, s: Sequence[int], p: PLike, cfg: RegressionConfig | None = None) -> float:
    """|A - A_S V|_p for the best V (column-wise lp fit)."""
    a = as_matrix(a, "A")
    cols = check_columns(s, a.shape[1])
    if not cols:
        raise ValueError("subset must be nonempty")
    p = as_pnorm(p)
    fit = solve_multi_regression(a[:, cols], a, p, cfg)
    return float(combine_errors(fit.residuals, p))


def _screen(a: np.ndarray, subsets: list, p: PNorm, cfg: RegressionConfig):
    """Batched pass: (achieved error, lower bound, certified) per subset."""
    n, m = a.shape
    k = len(subsets[0])
    per = max(1, _SCREEN_ENTRIES // (m * n * (k + 1)))
    ub = np.empty(len(subsets))
    lb = np.empty(len(subsets))
    cert = np.empty(len(subsets), dtype=bool)
    targets = a.T
    for lo in range(0, len(subsets), per):
        chunk = np.array(subsets[lo:lo + per])
        c = len(chunk)
        bases = np.swapaxes(a[:, chunk], 0, 1)  # (c, n, k)
        bs = np.repeat(bases, m, axis=0)
        ts = np.tile(targets, (c, 1))
        out = solve_stack(bs, ts, p, cfg, screen=True)
        res = out.residual.reshape(c, m)
        low = out.lower.reshape(c, m)
        ub[lo:lo + c] = combine_errors(res, p)
        lb[lo:lo + c] = combine_errors(low, p)
        gap_ok = res - low <= CERTIFY_GAP * res + 1e-300
        cert[lo:lo + c] = np.all(gap_ok, axis=1)
    return ub, lb, cert


def _verify(a, s, p: PNorm, cfg: RegressionConfig, strict: float, tie: float):
    """Exact error of subset s, or None once it provably exceeds ``strict``
    or reaches ``tie``.

    Columns are solved exactly (LP) one at a time, largest screened error
    first; unsolved columns contribute their rigorous lower bounds.
    """
    m = a.shape[1]
    basis = a[:, list(s)]
    scr = solve_stack(np.broadcast_to(basis, (m,) + basis.shape), a.T, p, cfg, screen=True)
    val = scr.lower.copy()
    done = scr.residual - scr.lower <= CERTIFY_GAP * scr.residual + 1e-300
    val[done] = scr.residual[done]
    exact_cfg = RegressionConfig(cfg.tol, cfg.max_iter, cfg.epsilon_weight, Mode.EXACT)
    for j in np.argsort(-scr.residual, kind="stable"):
        bound = float(combine_errors(val, p))
        if bound > strict or bound >= tie:
            return None
        if done[j]:
            continue
        out = solve_stack(basis[None], a.T[j:j + 1], p, exact_cfg)
        val[j] = out.residual[0]
        done[j] = True
    return float(combine_errors(val, p))


def _argmin_subset(a, subsets: list, p: PNorm, cfg: SubsetSearchConfig):
    """(best subset, its error, stats) with lexicographic tie-break.

    Subsets are visited in order of their screened lower bounds.  A subset
    that cannot beat the incumbent by more than the tie tolerance is skipped
    once it also comes later in lexicographic order, since it would lose
    the tie-break.
    """
    ub, lb, cert = _screen(a, subsets, p, cfg.regression)
    exactable = p.is_inf or p.value == 1.0
    tol = cfg.tie_rtol
    order = np.lexsort((np.arange(len(subsets)), lb))
    best, win = math.inf, None
    solved = ties = 0
    for i in order:
        strict = best * (1 + tol) + 1e-300
        if lb[i] > strict:
            break
        tie = best * (1 - tol / 2) if win is not None and i > win else math.inf
        if lb[i] >= tie:
            continue
        if cert[i] or not exactable:
            val = float(ub[i])
            if val > strict or val >= tie:
                continue
        else:
            val = _verify(a, subsets[i], p, cfg.regression, strict, tie)
            solved += 1
            if val is None:
                continue
        if val < best * (1 - tol):
            best, win, ties = val, i, 1
        elif val <= strict:
            best, win, ties = min(best, val), min(win, i), ties + 1
    stats = {"screened": len(subsets), "exact_solves": solved, "ties": ties}
    return subsets[win], best, stats


def _exhaustive_subsets(m: int, k: int, budget: int) -> list:
    count = math.comb(m, k)
    if count > budget:
        raise BudgetExceededError(count, budget)
    return list(itertools.combinations(range(m), k))


def best_subset(a, k: int, p: PLike, cfg: SubsetSearchConfig | None = None, *,
                delta2: Optional[float] = None):
    """k columns of A with the smallest column-wise lp fitting error.

    Returns (Factorization, ApproxReport).  ``source_columns`` is sorted.
    With the Exhaustive strategy the error is within (k+1)(1+tol) of the
    optimal rank-k lp error.
    """
    t0 = time.perf_counter()
    cfg = cfg or SubsetSearchConfig()
    a = as_matrix(a, "A")
    p = as_pnorm(p)
    n, m = a.shape
    if not 1 <= k <= m:
        raise ValueError(f"k={k} must lie in [1, m={m}]")
    strategy = cfg.strategy
    params = {"budget": cfg.budget}
    seed = 0
    if isinstance(strategy, Sampled):
        seed = resolve_seed(strategy.seed)
        drawn = sampled_subsets(m, k, int(strategy.trials), seed)
        subsets = sorted(set(drawn))
        name = "sampled"
        params.update(trials=int(strategy.trials), distinct=len(subsets))
    else:
        subsets = _exhaustive_subsets(m, k, cfg.budget)
        name = "exhaustive"
    cols, _, stats = _argmin_subset(a, subsets, p, cfg)
    params.update(stats)
    cols = list(cols)
    fit = solve_multi_regression(a[:, cols], a, p, cfg.regression)
    fac = Factorization(a[:, cols], fit.v, source_columns=tuple(cols))
    err = residual_norm(a, fac, p)
    if delta2 is None:
        sv = jacobi_svd(a).singular_values
        delta2 = float(np.sqrt(np.sum(sv[k:] ** 2)))
    params["subset"] = tuple(cols)
    report = ApproxReport(
        algorithm=name, error_p=err, delta2=float(delta2), seed=seed,
        elapsed=time.perf_counter() - t0, p=p, k=k, columns_used=k,
        converged=fit.all_converged, params=params,
    )
    return fac, report
