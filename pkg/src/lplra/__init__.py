"""Entrywise lp low-rank approximation."""
from .adaptive import bicriteria_approx, select_columns
from .core import ApproxReport, Factorization, PNorm, as_pnorm, entrywise_norm, residual_norm
from .enumeration import Exhaustive, Sampled, SubsetSearchConfig, best_subset
from .errors import LplraError, ParseError, RefusalError
from .rank_reduction import isoperimetric_basis, rank_constrained_frobenius, reduce_rank, sketched_reduce
from .regression import Mode, RegressionConfig, solve_regression
from .svd_baseline import baseline_error, jacobi_svd, truncated_svd

__all__ = [
    "ApproxReport", "Exhaustive", "Factorization", "LplraError", "Mode", "PNorm", "ParseError",
    "RefusalError", "RegressionConfig", "Sampled", "SubsetSearchConfig", "as_pnorm",
    "baseline_error", "best_subset", "bicriteria_approx", "entrywise_norm", "isoperimetric_basis",
    "jacobi_svd", "rank_constrained_frobenius", "reduce_rank", "residual_norm", "select_columns",
    "sketched_reduce", "solve_regression", "truncated_svd",
]
