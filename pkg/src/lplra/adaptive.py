"""Bi-criteria column selection by repeated 2k-sampling and coverage filtering.

Each round draws 2k of the remaining columns, keeps the draw once at least a
tenth of the remaining columns are approximately covered by it, and recurses
on the uncovered rest.  The coverage threshold depends on a guess N for the
optimal error; :func:`bicriteria_approx` tries a geometric grid of guesses
anchored at the Frobenius tail of the SVD and returns the best outcome.
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
    residual_norm,
    resolve_seed,
)
from .enumeration import combine_errors
from .errors import GridExhaustedError, SelectionFailedError
from .regression import DEFAULT_CONFIG, RegressionConfig, solve_multi_regression, solve_stack
from .svd_baseline import jacobi_svd

__all__ = [
    "SAMPLE_FACTOR",
    "COVER_FRACTION",
    "CoverageParams",
    "ExpertOverrides",
    "SelectionConfig",
    "SelectionRound",
    "SelectionTrace",
    "coverage_constant",
    "column_budget",
    "estimate_delta2",
    "n_guess_grid",
    "is_covered",
    "covered_mask",
    "select_columns",
    "bicriteria_approx",
]

SAMPLE_FACTOR = 2  # each round samples 2k columns
COVER_FRACTION = 0.1  # ... and must cover a tenth of what remains
DEFAULT_ATTEMPTS = 200
_ATTEMPT_BLOCK = 16
_SCREEN_ENTRIES = 1_000_000


def coverage_constant(p: PLike) -> float:
    """c_p = 2^p for finite p, 2 for p = inf."""
    p = as_pnorm(p)
    return 2.0 if p.is_inf else 2.0 ** p.value


@dataclass(frozen=True)
class CoverageParams:
    """Coverage threshold for guess ``n_guess`` of the optimal error.

    ``n_rows`` is the n in the finite-p threshold; ``n_cols`` is carried
    along for reference only.
    """

    n_guess: float
    k: int
    n_rows: int
    p: PNorm
    n_cols: Optional[int] = None
    c_p: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "p", as_pnorm(self.p))
        if not self.n_guess > 0:
            raise ValueError(f"n_guess must be positive, got {self.n_guess}")
        if self.c_p is None:
            object.__setattr__(self, "c_p", coverage_constant(self.p))

    def threshold(self) -> float:
        """Bound on residual^p (finite p) or on the residual (p = inf)."""
        k1 = self.k + 1
        if self.p.is_inf:
            return self.c_p * k1 * self.n_guess
        p = self.p.value
        return self.c_p * 100.0 * k1 ** p * self.n_guess ** p / self.n_rows

    def admits(self, residual) -> np.ndarray:
        residual = np.asarray(residual, dtype=np.float64)
        if self.p.is_inf:
            return residual <= self.threshold()
        with np.errstate(over="ignore"):
            return residual ** self.p.value <= self.threshold()


@dataclass(frozen=True)
class ExpertOverrides:
    """Experiment knobs that override the algorithm's defaults."""

    sample_factor: int = SAMPLE_FACTOR
    cover_fraction: float = COVER_FRACTION


@dataclass(frozen=True)
class SelectionConfig:
    attempts_cap: int = DEFAULT_ATTEMPTS
    regression: RegressionConfig = DEFAULT_CONFIG
    expert: ExpertOverrides = field(default_factory=ExpertOverrides)

    def __post_init__(self):
        if self.attempts_cap < 1:
            raise ValueError("attempts_cap must be >= 1")


@dataclass(frozen=True)
class SelectionRound:
    sample: tuple
    covered_fraction: float
    attempts: int
    remaining: int


@dataclass
class SelectionTrace:
    rounds: list = field(default_factory=list)
    total_columns: int = 0
    attempts_cap_hit: bool = False
    base_case: tuple = ()


def column_budget(k: int, m: int) -> int:
    """Hard cap 2k * ceil(log_{10/9} m) on selected columns (at least 2k)."""
    depth = math.ceil(math.log(m) / math.log(10.0 / 9.0)) if m > 1 else 0
    return SAMPLE_FACTOR * k * max(1, depth)


def estimate_delta2(a, k: int) -> float:
    """Frobenius norm of everything past the top k singular values."""
    a = as_matrix(a, "A")
    if not 1 <= k <= min(a.shape):
        raise ValueError(f"k={k} must lie in [1, {min(a.shape)}]")
    sv = jacobi_svd(a).singular_values
    tail = sv[k:]
    if tail.size == 0 or tail[0] <= max(a.shape) * np.finfo(float).eps * sv[0]:
        return 0.0
    return float(np.sqrt(np.sum(tail ** 2)))


def n_guess_grid(delta2: float, p: PLike, n_rows: int, scale: float = 1.0) -> list:
    """Ratio-2 grid over the range of |Delta|_p allowed by |Delta|_2.

    For p < 2 the range is [d2, n^(2-p) d2]; for p >= 2 it is
    [d2 / n^(1-2/p), d2].  One extra factor of 2 is added on each side.
    ``delta2 = 0`` gives the single guess 1e-12 * scale.
    """
    p = as_pnorm(p)
    if delta2 < 0:
        raise ValueError("delta2 must be nonnegative")
    if delta2 == 0:
        return [1e-12 * (scale if scale > 0 else 1.0)]
    n = max(int(n_rows), 1)
    if p.is_inf:
        lo, hi = delta2 / n, delta2
    elif p.value < 2:
        lo, hi = delta2, delta2 * n ** (2.0 - p.value)
    else:
        lo, hi = delta2 / n ** (1.0 - 2.0 / p.value), delta2
    lo, hi = lo / 2.0, hi * 2.0
    steps = max(0, math.ceil(math.log2(hi / lo) - 1e-12))
    return [lo * 2.0 ** j for j in range(steps + 1)]


def is_covered(a_s, a_i, cov: CoverageParams, cfg: RegressionConfig | None = None) -> bool:
    """Whether column a_i is approximately covered by the columns a_s."""
    a_s = np.asarray(a_s, dtype=np.float64)
    if a_s.ndim == 1:
        a_s = a_s[:, None]
    fit = solve_multi_regression(a_s, np.asarray(a_i, dtype=np.float64).reshape(-1, 1), cov.p, cfg)
    if not fit.converged[0]:
        return False
    return bool(cov.admits(fit.residuals[0]))


def covered_mask(a: np.ndarray, samples: list, cols: np.ndarray, cov: CoverageParams,
                 cfg: RegressionConfig) -> np.ndarray:
    """(len(samples), len(cols)) coverage decisions.

    A batched pass gives an achieved residual and a lower bound per pair;
    pairs the two do not settle are re-solved column by column.
    """
    n = a.shape[0]
    r = len(samples[0])
    ncol = len(cols)
    out = np.zeros((len(samples), ncol), dtype=bool)
    per = max(1, _SCREEN_ENTRIES // max(1, ncol * n * (r + 1)))
    targets = a[:, cols].T
    for lo in range(0, len(samples), per):
        chunk = np.array(samples[lo:lo + per])
        c = len(chunk)
        bs = np.repeat(np.swapaxes(a[:, chunk], 0, 1), ncol, axis=0)
        res = solve_stack(bs, np.tile(targets, (c, 1)), cov.p, cfg, screen=True)
        ub = res.residual.reshape(c, ncol)
        lb = res.lower.reshape(c, ncol)
        yes = cov.admits(ub)
        unsure = ~yes & cov.admits(lb)
        for i in np.flatnonzero(np.any(unsure, axis=1)):
            j = np.flatnonzero(unsure[i])
            fit = solve_multi_regression(a[:, list(chunk[i])], a[:, cols[j]], cov.p, cfg)
            yes[i, j] = cov.admits(fit.residuals) & fit.converged
        out[lo:lo + c] = yes
    return out


def _attempt_sample(remaining: np.ndarray, size: int, seed: int, round_index: int, attempt: int):
    rng = np.random.default_rng(np.random.SeedSequence([seed, round_index, attempt]))
    return tuple(sorted(int(c) for c in rng.choice(remaining, size=size, replace=False)))


def select_columns(a, k: int, p: PLike, cov_template: CoverageParams | float, seed: Optional[int] = None,
                   cfg: SelectionConfig | None = None):
    """Adaptive sampling of O(k log m) columns.

    ``cov_template`` fixes N (a bare float is taken as N).  Returns
    (sorted column indices, SelectionTrace); raises SelectionFailedError
    when some round exhausts its attempts.
    """
    a = as_matrix(a, "A")
    p = as_pnorm(p)
    cfg = cfg or SelectionConfig()
    seed = resolve_seed(seed)
    n, m = a.shape
    if k < 1:
        raise ValueError("k must be >= 1")
    if not isinstance(cov_template, CoverageParams):
        cov_template = CoverageParams(float(cov_template), k, n, p, n_cols=m)
    cov = CoverageParams(cov_template.n_guess, k, n, p, n_cols=m, c_p=cov_template.c_p)
    size = cfg.expert.sample_factor * k
    frac = cfg.expert.cover_fraction
    remaining = np.arange(m)
    selected: list = []
    trace = SelectionTrace()
    max_rounds = max(1, math.ceil(math.log(m) / math.log(10.0 / 9.0))) if m > 1 else 1
    round_index = 0
    while remaining.size > size:
        if round_index >= max_rounds:
            raise AssertionError("recursion deeper than ceil(log_{10/9} m)")
        accepted = None
        attempt = 0
        while accepted is None and attempt < cfg.attempts_cap:
            block = range(attempt, min(cfg.attempts_cap, attempt + _ATTEMPT_BLOCK))
            samples = [_attempt_sample(remaining, size, seed, round_index, t) for t in block]
            mask = covered_mask(a, samples, remaining, cov, cfg.regression)
            for t, sample, row in zip(block, samples, mask):
                if row.sum() >= frac * remaining.size:
                    accepted = (t, sample, row)
                    break
            attempt = block.stop
        if accepted is None:
            trace.attempts_cap_hit = True
            raise SelectionFailedError(round_index, cov.n_guess, cfg.attempts_cap)
        t, sample, row = accepted
        trace.rounds.append(SelectionRound(sample, float(row.mean()), t + 1, int(remaining.size)))
        selected.extend(sample)
        keep = ~row
        keep[np.isin(remaining, sample)] = False
        remaining = remaining[keep]
        round_index += 1
    trace.base_case = tuple(int(c) for c in remaining)
    selected.extend(trace.base_case)
    cols = sorted(set(selected))
    trace.total_columns = len(cols)
    return cols, trace


def bicriteria_approx(a, k: int, p: PLike, seed: Optional[int] = None, cfg: SelectionConfig | None = None,
                      grid: Optional[list] = None):
    """Best factorization A ~ A_S V over the N-guess grid.

    Returns (Factorization, ApproxReport); ``report.n_guess`` is the winning N.
    """
    t0 = time.perf_counter()
    a = as_matrix(a, "A")
    p = as_pnorm(p)
    cfg = cfg or SelectionConfig()
    seed = resolve_seed(seed)
    n, m = a.shape
    if not 1 <= k <= min(n, m):
        raise ValueError(f"k={k} must lie in [1, {min(n, m)}]")
    delta2 = estimate_delta2(a, k)
    if grid is None:
        # the norm comparisons run over all n*m entries; max(n, m) keeps the
        # printed one-dimension exponents valid for them
        grid = n_guess_grid(delta2, p, max(n, m), scale=float(np.max(np.abs(a))))
    best = None
    failures = []
    for guess in grid:
        cov = CoverageParams(guess, k, n, p, n_cols=m)
        try:
            cols, trace = select_columns(a, k, p, cov, seed, cfg)
        except SelectionFailedError as exc:
            failures.append((guess, exc.round_index))
            continue
        fit = solve_multi_regression(a[:, cols], a, p, cfg.regression)
        err = float(combine_errors(fit.residuals, p))
        if best is None or err < best[0]:
            best = (err, guess, cols, trace, fit)
    if best is None:
        raise GridExhaustedError(min(grid), max(grid), len(grid))
    err, guess, cols, trace, fit = best
    fac = Factorization(a[:, cols], fit.v, source_columns=tuple(cols))
    report = ApproxReport(
        algorithm="bicriteria", error_p=residual_norm(a, fac, p), delta2=delta2, seed=seed,
        elapsed=time.perf_counter() - t0, p=p, k=k, n_guess=guess, columns_used=len(cols),
        converged=fit.all_converged,
        params={
            "grid": list(grid),
            "failed_guesses": failures,
            "rounds": len(trace.rounds),
            "column_budget": column_budget(k, m),
            "attempts_cap": cfg.attempts_cap,
        },
    )
    return fac, report
