"""Entrywise lp norms, residuals and the shared record types.

Matrices are plain ``float64`` numpy arrays.  Anything entering the library
goes through :func:`as_matrix`, which copies the data and rejects NaN/inf, so
callers can never alias-mutate a stored factor.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ShapeError

__all__ = [
    "PNorm",
    "INF",
    "as_pnorm",
    "as_matrix",
    "entrywise_norm",
    "vector_norm",
    "column_norms",
    "residual_norm",
    "ProblemInstance",
    "Factorization",
    "ApproxReport",
    "resolve_seed",
]


@dataclass(frozen=True)
class PNorm:
    """The exponent p of an entrywise norm: a finite real >= 1 or infinity.

    Use ``PNorm(1.5)`` for finite exponents and :data:`INF` for the max norm.
    """

    value: float = 2.0
    infinite: bool = False

    def __post_init__(self):
        if self.infinite:
            object.__setattr__(self, "value", math.inf)
            return
        value = float(self.value)
        if math.isinf(value):
            raise ValueError("use PNorm.inf() (or as_pnorm('inf')) for the max norm")
        if not value >= 1.0:
            raise ValueError(f"p must be >= 1, got {self.value!r}")
        object.__setattr__(self, "value", value)

    @classmethod
    def inf(cls) -> "PNorm":
        return cls(infinite=True)

    @classmethod
    def parse(cls, text: str) -> "PNorm":
        text = text.strip().lower()
        if text in ("inf", "infinity", "oo", "max"):
            return cls.inf()
        return cls(float(text))

    @property
    def is_inf(self) -> bool:
        return self.infinite

    def __str__(self) -> str:
        if self.infinite:
            return "inf"
        return repr(self.value) if not self.value.is_integer() else str(int(self.value))


INF = PNorm.inf()

PLike = Union[PNorm, float, int, str]


def as_pnorm(p: PLike) -> PNorm:
    """Coerce ``1``, ``1.5``, ``"inf"``, ``math.inf`` or a PNorm to a PNorm."""
    if isinstance(p, PNorm):
        return p
    if isinstance(p, str):
        return PNorm.parse(p)
    if isinstance(p, (int, float, np.integer, np.floating)):
        if math.isinf(float(p)) and float(p) > 0:
            return INF
        return PNorm(float(p))
    raise TypeError(f"cannot interpret {p!r} as a norm exponent")


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validated float64 copy of ``a``; 1-D input becomes a single column."""
    m = np.array(a, dtype=np.float64, copy=True)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if m.size == 0:
        raise ShapeError(f"{name} is empty (shape {m.shape})")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains NaN or infinite entries")
    return m


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


def _pnorm_along(x: np.ndarray, p: PNorm, axis=None) -> np.ndarray:
    ax = np.abs(x)
    scale = np.max(ax, axis=axis, keepdims=True) if ax.size else np.zeros(1)
    if p.is_inf:
        return np.squeeze(scale, axis=axis) if axis is not None else float(scale.max())
    # max-entry rescaling keeps large p from overflowing
    safe = np.where(scale > 0, scale, 1.0)
    s = np.sum((ax / safe) ** p.value, axis=axis, keepdims=True)
    out = scale * s ** (1.0 / p.value)
    if axis is None:
        return float(out.reshape(-1)[0])
    return np.squeeze(out, axis=axis)


def entrywise_norm(m, p: PLike) -> float:
    """(sum |m_ij|^p)^(1/p), or max |m_ij| for p = inf."""
    m = np.asarray(m, dtype=np.float64)
    return float(_pnorm_along(m.reshape(-1), as_pnorm(p)))


def vector_norm(x, p: PLike) -> float:
    return entrywise_norm(x, p)


def column_norms(m, p: PLike) -> np.ndarray:
    """lp norm of each column of ``m``."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    return np.asarray(_pnorm_along(m, as_pnorm(p), axis=0), dtype=np.float64).reshape(-1)


def residual_norm(a, f: "Factorization", p: PLike) -> float:
    a = np.asarray(a, dtype=np.float64)
    u, v = f.u, f.v
    if a.shape != (u.shape[0], v.shape[1]):
        raise ShapeError(
            f"cannot compare A {a.shape} with U {u.shape} @ V {v.shape}"
        )
    return entrywise_norm(a - u @ v, p)


def resolve_seed(seed: Optional[int]) -> int:
    """Explicit seed, else $LPLRA_SEED, else 0."""
    if seed is not None:
        return int(seed)
    env = os.environ.get("LPLRA_SEED")
    return int(env) if env not in (None, "") else 0


@dataclass(frozen=True)
class ProblemInstance:
    a: np.ndarray
    k: int
    p: PNorm

    def __post_init__(self):
        a = _frozen(as_matrix(self.a, "A"))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "p", as_pnorm(self.p))
        if not 1 <= self.k <= min(a.shape):
            raise ValueError(f"k={self.k} must lie in [1, min(n, m)={min(a.shape)}]")


@dataclass(frozen=True)
class Factorization:
    """A ~ u @ v with u n x r, v r x m.

    ``source_columns`` is set when u is a column subset of A: u[:, j] is
    A[:, source_columns[j]].
    """

    u: np.ndarray
    v: np.ndarray
    source_columns: Optional[tuple] = None

    def __post_init__(self):
        u = _frozen(self.u)
        v = _frozen(self.v)
        if u.ndim != 2 or v.ndim != 2 or u.shape[1] != v.shape[0]:
            raise ShapeError(f"factor shapes do not chain: U {u.shape}, V {v.shape}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        if self.source_columns is not None:
            cols = tuple(int(c) for c in self.source_columns)
            if len(cols) != u.shape[1]:
                raise ShapeError(
                    f"{len(cols)} source columns for a rank-{u.shape[1]} factor"
                )
            object.__setattr__(self, "source_columns", cols)

    @property
    def rank_budget(self) -> int:
        return self.u.shape[1]

    def product(self) -> np.ndarray:
        return self.u @ self.v

    def check_source(self, a) -> bool:
        """True when u's columns are exactly the recorded columns of ``a``."""
        if self.source_columns is None:
            return False
        a = np.asarray(a, dtype=np.float64)
        return bool(np.array_equal(self.u, a[:, list(self.source_columns)]))


@dataclass
class ApproxReport:
    algorithm: str
    error_p: float
    delta2: float
    seed: int
    elapsed: float
    p: PNorm = field(default_factory=lambda: PNorm(2.0))
    k: int = 0
    n_guess: Optional[float] = None
    columns_used: int = 0
    converged: bool = True
    notes: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.error_p >= 0:
            raise ValueError(f"error_p must be nonnegative, got {self.error_p}")

    def as_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "p": str(self.p),
            "k": self.k,
            "error_p": self.error_p,
            "delta2": self.delta2,
            "seed": self.seed,
            "elapsed": self.elapsed,
            "n_guess": self.n_guess,
            "columns_used": self.columns_used,
            "converged": self.converged,
            "notes": list(self.notes),
            "params": dict(self.params),
        }


def check_columns(indices: Sequence[int], m: int) -> list:
    """Validate a list of distinct in-range column indices."""
    cols = [int(i) for i in indices]
    if len(set(cols)) != len(cols):
        raise ValueError(f"duplicate column indices in {cols}")
    bad = [c for c in cols if not 0 <= c < m]
    if bad:
        raise ValueError(f"column indices {bad} out of range for {m} columns")
    return cols
