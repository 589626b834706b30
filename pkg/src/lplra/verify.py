"""Fast self-checks against the oracles, used by ``lplra verify``."""
from __future__ import annotations

import time
from typing import Callable, NamedTuple

import numpy as np

from .core import entrywise_norm
from .enumeration import best_subset
from .io_bench import intro_block
from .oracle import (
    algorithm1_coefficients,
    algorithm1_select,
    lower_bound_instance,
    make_planted,
    theorem_certificate,
)
from .rank_reduction import certify_isoperimetry, isoperimetric_basis, rank_constrained_frobenius
from .regression import solve_exact_lp, solve_regression
from .svd_baseline import baseline_error, truncated_svd

__all__ = ["Check", "CHECKS", "run_checks"]


class Check(NamedTuple):
    name: str
    passed: bool
    detail: str
    elapsed: float


def _lower_bound():
    worst = 0.0
    for k in (1, 2, 3):
        a, target, b = lower_bound_instance(k)
        _, rep = best_subset(a, k, "inf", delta2=0.0)
        worst = max(worst, abs(rep.error_p - target))
    return worst <= 1e-9, f"max |error - (k+1)| = {worst:.3g}"


def _planted():
    worst_err, worst_m = 0.0, 0.0
    for seed in range(4):
        inst = make_planted(12, 14, 2, (1, 2, 3, "inf")[seed], 0.1, seed)
        _, rep = best_subset(inst.a, 2, inst.p, delta2=0.0)
        worst_err = max(worst_err, rep.error_p / (3 * inst.delta_norm))
        s = algorithm1_select(inst)
        worst_m = max(worst_m, float(np.max(np.abs(algorithm1_coefficients(inst, s)))))
        _, errs, bounds = theorem_certificate(inst, s)
        if np.any(errs > bounds * (1 + 1e-9)):
            return False, f"seed {seed}: certificate violates the per-column bound"
    ok = worst_err <= 1 + 1e-4 and worst_m <= 1 + 1e-9
    return ok, f"max error / ((k+1) delta) = {worst_err:.4f}, max |M| = {worst_m:.12f}"


def _regression():
    rng = np.random.default_rng(0)
    worst = 0.0
    for p in (1, "inf"):
        for _ in range(5):
            u = rng.standard_normal((15, 3))
            v = rng.standard_normal(15)
            it = solve_regression(u, v, p)
            ex = solve_exact_lp(u, v, p)
            worst = max(worst, it.residual / ex.residual - 1)
    t = np.array([3.0, -1.0, 7.0, 2.0, 10.0])
    med = solve_regression(np.ones((5, 1)), t, 1).y[0]
    mid = solve_regression(np.ones((5, 1)), t, "inf").y[0]
    ok = worst <= 1e-4 and abs(med - 3.0) <= 1e-9 and abs(mid - 4.5) <= 1e-9
    return ok, f"worst ratio - 1 = {worst:.3g}, median {med:.12g}, midrange {mid:.12g}"


def _isoperimetry():
    rng = np.random.default_rng(1)
    bad = 0
    for p in (1, 1.5, 3, "inf"):
        iso = isoperimetric_basis(rng.standard_normal((30, 4)), p, 2000, seed=2)
        bad += certify_isoperimetry(iso.b, iso.kappa, p, 10_000, seed=99)
    return bad == 0, f"{bad} violations"


def _frobenius():
    rng = np.random.default_rng(2)
    r = rng.standard_normal((6, 7))
    x = rank_constrained_frobenius(np.eye(6), np.eye(7), r, 2)
    _, fac = truncated_svd(r, 2)
    gap = float(np.max(np.abs(x - fac.product())))
    return gap <= 1e-12, f"max |X - SVD_2(R)| = {gap:.3g}"


def _intro():
    a = intro_block(10)
    svd = baseline_error(a, 1, 1)
    _, rep = best_subset(a, 1, 1, delta2=0.0)
    return svd >= 5 * rep.error_p, f"SVD l1 error {svd:.6g}, best subset {rep.error_p:.6g}"


CHECKS: dict = {
    "lower-bound fixture": _lower_bound,
    "planted (k+1) bound and |M| <= 1": _planted,
    "regression vs exact LP": _regression,
    "isoperimetry certification": _isoperimetry,
    "rank-constrained Frobenius at P = Q = I": _frobenius,
    "intro block SVD failure": _intro,
}


def run_checks(report: Callable[[Check], None] | None = None) -> list:
    out = []
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash counts as a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        chk = Check(name, bool(ok), detail, time.perf_counter() - t0)
        out.append(chk)
        if report is not None:
            report(chk)
    return out
