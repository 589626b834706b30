"""Dataset readers, synthetic generators and the experiment driver.

RunSpec files are flat ``key = value`` text, one key per line, ``#`` starts
a comment::

    dataset = sparse n=20 m=30 density=0.3 seed=7
    k = 1,2,3
    p = 1
    algorithms = svd,sampled,bicriteria
    seeds = 0,1,2
    trials = 2000
    output = results.csv
    plot = results.svg
    timing = true

Dataset kinds: ``mm path=F``, ``bow path=F [max_docs=D] [max_words=W]``,
``sparse n= m= density= seed=``, ``pm1 n= m= seed=``,
``planted n= m= k= p= delta= seed=`` and ``intro n= [value=]``.
Relative paths resolve against the directory of the RunSpec file.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .adaptive import bicriteria_approx
from .core import PLike, PNorm, as_matrix, as_pnorm, entrywise_norm, resolve_seed
from .enumeration import Exhaustive, Sampled, SubsetSearchConfig, best_subset
from .errors import LplraError, MemoryGuardError, ParseError, RefusalError
from .oracle import make_planted
from .rank_reduction import reduce_rank, sketched_reduce
from .svd_baseline import baseline_error

__all__ = [
    "MatrixMarketFile",
    "BagOfWordsFile",
    "SyntheticSparse",
    "SyntheticPm1",
    "PlantedSpec",
    "IntroBlock",
    "DatasetSpec",
    "RunSpec",
    "ALGORITHMS",
    "CSV_HEADER",
    "read_matrix_market",
    "write_matrix_market",
    "read_bag_of_words",
    "gen_sparse_uniform",
    "gen_pm1",
    "intro_block",
    "parse_dataset",
    "parse_run_spec",
    "read_run_spec",
    "run_experiment",
    "write_csv",
    "format_row",
    "read_csv",
    "plot_ratios",
]

ALGORITHMS = ("svd", "exhaustive", "sampled", "bicriteria", "reduce", "sketched")
CSV_HEADER = ("dataset", "algorithm", "p", "k", "seed", "error", "svd_error", "ratio",
              "columns_used", "elapsed_s", "status")
DEFAULT_TRIALS = 2000
DEFAULT_MAX_ENTRIES = 200_000_000
RATIO_FLOOR = 1e-10


# ---------------------------------------------------------------------------
# Matrix Market


def _mm_tokens(line: str, count: int, lineno: int, path, what: str):
    parts = line.split()
    if len(parts) != count:
        raise ParseError(f"expected {count} fields in {what}, got {len(parts)}", lineno, path)
    return parts


def read_matrix_market(path) -> np.ndarray:
    """Dense array from a Matrix Market ``coordinate`` or ``array`` file.

    Only the ``general`` symmetry and the ``real``/``integer`` fields are
    accepted.  Duplicate coordinate entries are summed.
    """
    path = Path(path)
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", 1, path)
    head = lines[0].split()
    if len(head) != 5 or head[0] != "%%MatrixMarket" or head[1].lower() != "matrix":
        raise ParseError("header must read '%%MatrixMarket matrix <format> <field> <symmetry>'", 1, path)
    fmt, fld, sym = (h.lower() for h in head[2:])
    if fmt not in ("coordinate", "array"):
        raise ParseError(f"unknown format '{fmt}'", 1, path)
    if fld not in ("real", "integer"):
        raise ParseError(f"unsupported field qualifier '{fld}'", 1, path)
    if sym != "general":
        raise ParseError(f"unsupported symmetry qualifier '{sym}' (only 'general' is read)", 1, path)
    body = [(i + 1, ln) for i, ln in enumerate(lines) if i > 0 and ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise ParseError("missing size line", len(lines), path)
    lineno, size_line = body[0]
    records = body[1:]
    try:
        if fmt == "coordinate":
            n, m, nnz = (int(t) for t in _mm_tokens(size_line, 3, lineno, path, "size line"))
        else:
            n, m = (int(t) for t in _mm_tokens(size_line, 2, lineno, path, "size line"))
            nnz = n * m
    except ValueError:
        raise ParseError("size line must hold integers", lineno, path) from None
    if n < 0 or m < 0 or nnz < 0:
        raise ParseError("negative size", lineno, path)
    if len(records) != nnz:
        where = records[nnz][0] if len(records) > nnz else (records[-1][0] if records else lineno)
        raise ParseError(f"declared {nnz} entries, found {len(records)}", where, path)
    a = np.zeros((n, m))
    if fmt == "array":
        vals = np.empty(nnz)
        for t, (ln, rec) in enumerate(records):
            try:
                (v,) = _mm_tokens(rec, 1, ln, path, "array entry")
                vals[t] = float(v)
            except ValueError:
                raise ParseError(f"bad value '{rec.strip()}'", ln, path) from None
        return vals.reshape((m, n)).T.copy() if nnz else a
    for ln, rec in records:
        i, j, v = _mm_tokens(rec, 3, ln, path, "entry")
        try:
            i, j, v = int(i), int(j), float(v)
        except ValueError:
            raise ParseError(f"bad entry '{rec.strip()}'", ln, path) from None
        if not (1 <= i <= n and 1 <= j <= m):
            raise ParseError(f"index ({i}, {j}) outside {n} x {m}", ln, path)
        a[i - 1, j - 1] += v
    return a


def write_matrix_market(path, a, coordinate: bool = True) -> None:
    """Write ``a`` in coordinate (nonzeros only) or array format, 17 digits."""
    a = as_matrix(a, "A")
    n, m = a.shape
    out = io.StringIO()
    if coordinate:
        out.write("%%MatrixMarket matrix coordinate real general\n")
        rows, cols = np.nonzero(a.T)
        # column-major order of nonzeros
        out.write(f"{n} {m} {rows.size}\n")
        for j, i in zip(rows, cols):
            out.write(f"{i + 1} {j + 1} {a[i, j]:.17g}\n")
    else:
        out.write("%%MatrixMarket matrix array real general\n")
        out.write(f"{n} {m}\n")
        for v in a.T.ravel():
            out.write(f"{v:.17g}\n")
    Path(path).write_text(out.getvalue())


# ---------------------------------------------------------------------------
# UCI bag of words


def read_bag_of_words(path, max_docs: Optional[int] = None, max_words: Optional[int] = None,
                      max_entries: int = DEFAULT_MAX_ENTRIES) -> np.ndarray:
    """Dense docs x words count matrix from a UCI ``docword`` file.

    Records outside the ``max_docs`` x ``max_words`` block are skipped.  A
    dense result larger than ``max_entries`` is refused before allocation.
    """
    path = Path(path)
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        header = []
        lineno = 0
        while len(header) < 3:
            line = fh.readline()
            lineno += 1
            if not line:
                raise ParseError("file ends inside the D/W/NNZ header", lineno, path)
            if not line.strip():
                continue
            try:
                header.append(int(line.strip()))
            except ValueError:
                raise ParseError(f"header line must be an integer, got '{line.strip()}'", lineno, path) from None
        d, w, nnz = header
        rows = d if max_docs is None else min(d, int(max_docs))
        cols = w if max_words is None else min(w, int(max_words))
        if rows * cols > max_entries:
            raise MemoryGuardError(
                f"dense {rows} x {cols} matrix exceeds {max_entries} entries; pass max_docs/max_words caps"
            )
        a = np.zeros((rows, cols))
        seen = 0
        for line in fh:
            lineno += 1
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ParseError(f"expected 'docID wordID count', got '{line.strip()}'", lineno, path)
            try:
                i, j, c = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise ParseError(f"bad record '{line.strip()}'", lineno, path) from None
            if not (1 <= i <= d and 1 <= j <= w):
                raise ParseError(f"record ({i}, {j}) outside {d} x {w}", lineno, path)
            seen += 1
            if i <= rows and j <= cols:
                a[i - 1, j - 1] += c
    if seen != nnz:
        raise ParseError(f"header declares {nnz} records, found {seen}", lineno, path)
    return a


# ---------------------------------------------------------------------------
# generators


def gen_sparse_uniform(n: int, m: int, density: float, seed: Optional[int] = None) -> np.ndarray:
    """Each entry is nonzero with probability ``density``, then uniform in (0, 1]."""
    if not 0 < density <= 1:
        raise ValueError(f"density must lie in (0, 1], got {density}")
    rng = np.random.default_rng(resolve_seed(seed))
    gate = rng.random((n, m)) < density
    vals = 1.0 - rng.random((n, m))
    return np.where(gate, vals, 0.0)


def gen_pm1(n: int, m: int, seed: Optional[int] = None) -> np.ndarray:
    rng = np.random.default_rng(resolve_seed(seed))
    return rng.integers(0, 2, size=(n, m)) * 2.0 - 1.0


def intro_block(n: int, value: Optional[float] = None) -> np.ndarray:
    """diag(value, ones((n-1, n-1))); value defaults to n (the p < 2 example).

    With value = n - 2 it is the p > 2 example.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    a = np.zeros((n, n))
    a[0, 0] = float(n if value is None else value)
    a[1:, 1:] = 1.0
    return a


# ---------------------------------------------------------------------------
# dataset and run specs


@dataclass(frozen=True)
class MatrixMarketFile:
    path: str


@dataclass(frozen=True)
class BagOfWordsFile:
    path: str
    max_docs: Optional[int] = None
    max_words: Optional[int] = None


@dataclass(frozen=True)
class SyntheticSparse:
    n: int = 20
    m: int = 30
    density: float = 0.3
    seed: int = 0


@dataclass(frozen=True)
class SyntheticPm1:
    n: int = 20
    m: int = 30
    seed: int = 0


@dataclass(frozen=True)
class PlantedSpec:
    n: int = 30
    m: int = 40
    k: int = 2
    p: str = "1"
    delta: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class IntroBlock:
    n: int = 10
    value: Optional[float] = None


Source = Union[MatrixMarketFile, BagOfWordsFile, SyntheticSparse, SyntheticPm1, PlantedSpec, IntroBlock]
_KINDS = {"mm": MatrixMarketFile, "bow": BagOfWordsFile, "sparse": SyntheticSparse,
          "pm1": SyntheticPm1, "planted": PlantedSpec, "intro": IntroBlock}


@dataclass(frozen=True)
class DatasetSpec:
    source: Source
    name: str = ""

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        src = self.source
        if isinstance(src, (MatrixMarketFile, BagOfWordsFile)):
            return Path(src.path).stem
        kind = next(k for k, v in _KINDS.items() if isinstance(src, v))
        return kind + "-" + "x".join(str(getattr(src, f)) for f in ("n", "m") if hasattr(src, f))

    def load(self) -> np.ndarray:
        src = self.source
        if isinstance(src, MatrixMarketFile):
            return read_matrix_market(src.path)
        if isinstance(src, BagOfWordsFile):
            return read_bag_of_words(src.path, src.max_docs, src.max_words)
        if isinstance(src, SyntheticSparse):
            return gen_sparse_uniform(src.n, src.m, src.density, src.seed)
        if isinstance(src, SyntheticPm1):
            return gen_pm1(src.n, src.m, src.seed)
        if isinstance(src, PlantedSpec):
            inst = make_planted(src.n, src.m, src.k, src.p, src.delta, src.seed)
            # delta = 0 means exactly rank k, without the oracle's tie-breaking nudge
            return np.array(inst.a_star if src.delta == 0 else inst.a)
        if isinstance(src, IntroBlock):
            return intro_block(src.n, src.value)
        raise TypeError(f"unknown dataset source {src!r}")


@dataclass(frozen=True)
class RunSpec:
    dataset: DatasetSpec
    k_values: tuple
    p: PNorm
    algorithms: tuple = ("svd", "sampled")
    seeds: tuple = (0,)
    output: Optional[str] = None
    trials: int = DEFAULT_TRIALS
    plot: Optional[str] = None
    timing: bool = True

    def __post_init__(self):
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ParseError(f"unknown algorithm(s) {', '.join(bad)}; choose from {', '.join(ALGORITHMS)}")
        if "sketched" in self.algorithms and self.p.is_inf:
            raise ParseError("algorithm 'sketched' needs finite p")
        if not self.k_values or min(self.k_values) < 1:
            raise ParseError("k values must be positive integers")
        if self.trials < 1:
            raise ParseError("trials must be positive")


_INT_FIELDS = {"n", "m", "k", "seed", "max_docs", "max_words"}
_FLOAT_FIELDS = {"density", "delta", "value"}


def parse_dataset(text: str, base: Optional[Path] = None, lineno=None, path=None) -> DatasetSpec:
    """DatasetSpec from ``kind key=value ...``."""
    parts = text.split()
    if not parts or parts[0] not in _KINDS:
        raise ParseError(f"dataset kind must be one of {', '.join(_KINDS)}", lineno, path)
    kind, kwargs, name = parts[0], {}, ""
    for tok in parts[1:]:
        if "=" not in tok:
            raise ParseError(f"dataset option '{tok}' is not key=value", lineno, path)
        key, val = tok.split("=", 1)
        try:
            if key == "name":
                name = val
            elif key in _INT_FIELDS:
                kwargs[key] = int(val)
            elif key in _FLOAT_FIELDS:
                kwargs[key] = float(val)
            elif key == "path":
                kwargs[key] = str((base / val) if base is not None and not os.path.isabs(val) else val)
            elif key == "p":
                kwargs[key] = str(as_pnorm(val))
            else:
                raise ParseError(f"unknown dataset option '{key}'", lineno, path)
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"bad value for '{key}': {val}", lineno, path) from None
    try:
        source = _KINDS[kind](**kwargs)
    except TypeError as exc:
        raise ParseError(f"dataset '{kind}': {exc}", lineno, path) from None
    if kind in ("mm", "bow") and not getattr(source, "path", None):
        raise ParseError(f"dataset '{kind}' needs path=", lineno, path)
    return DatasetSpec(source, name)


def _int_list(val: str):
    return tuple(int(v) for v in val.replace(",", " ").split())


def _bool(val: str) -> bool:
    low = val.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(val)


def parse_run_spec(text: str, base: Optional[Path] = None, path=None) -> RunSpec:
    fields = {}
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got '{line}'", lineno, path)
        key, val = (s.strip() for s in line.split("=", 1))
        if key in fields:
            raise ParseError(f"duplicate key '{key}'", lineno, path)
        fields[key], lines[key] = val, lineno
    for req in ("dataset", "k", "p"):
        if req not in fields:
            raise ParseError(f"missing required key '{req}'", None, path)
    known = {"dataset", "k", "p", "algorithms", "seeds", "output", "trials", "plot", "timing"}
    for key in fields:
        if key not in known:
            raise ParseError(f"unknown key '{key}'", lines[key], path)

    def conv(key, fn):
        try:
            return fn(fields[key])
        except ValueError:
            raise ParseError(f"bad value for '{key}': {fields[key]}", lines[key], path) from None

    kw = {
        "dataset": parse_dataset(fields["dataset"], base, lines["dataset"], path),
        "k_values": conv("k", _int_list),
        "p": conv("p", as_pnorm),
    }
    if "algorithms" in fields:
        kw["algorithms"] = tuple(a for a in fields["algorithms"].replace(",", " ").split())
    if "seeds" in fields:
        kw["seeds"] = conv("seeds", _int_list)
    if "trials" in fields:
        kw["trials"] = conv("trials", int)
    if "timing" in fields:
        kw["timing"] = conv("timing", _bool)
    for key in ("output", "plot"):
        if key in fields:
            val = fields[key]
            kw[key] = str(base / val) if base is not None and not os.path.isabs(val) else val
    try:
        return RunSpec(**kw)
    except ParseError as exc:
        raise ParseError(str(exc), None, path) from None


def read_run_spec(path) -> RunSpec:
    path = Path(path)
    return parse_run_spec(path.read_text(), path.parent, path)


# ---------------------------------------------------------------------------
# experiment driver


def _ratio(error: float, svd_error: float, floor: float) -> float:
    """error / svd_error; two values at or under the noise floor count as equal."""
    if svd_error <= floor and error <= floor:
        return 1.0
    if svd_error == 0:
        return math.inf
    return error / svd_error


def _run_cell(a, algo, k, p, seed, trials, cache):
    """(error, columns_used) for one algorithm run."""
    if algo == "svd":
        return baseline_error(a, k, p), k
    if algo == "exhaustive":
        _, rep = best_subset(a, k, p, SubsetSearchConfig(Exhaustive()), delta2=0.0)
        return rep.error_p, rep.columns_used
    if algo == "sampled":
        _, rep = best_subset(a, k, p, SubsetSearchConfig(Sampled(trials, seed)), delta2=0.0)
        return rep.error_p, rep.columns_used
    key = (k, seed)
    if key not in cache:
        cache[key] = bicriteria_approx(a, k, p, seed=seed)
    fac, rep = cache[key]
    if algo == "bicriteria":
        return rep.error_p, rep.columns_used
    if algo == "reduce":
        _, r2 = reduce_rank(a, fac, min(k, fac.rank_budget), p, seed=seed)
        return r2.error_p, k
    _, r2 = sketched_reduce(a, fac, min(k, fac.rank_budget), p, seed=seed)
    return r2.error_p, k


def run_experiment(spec: RunSpec, timing: Optional[bool] = None) -> list:
    """Rows (dicts keyed by CSV_HEADER) for every (k, seed, algorithm) cell.

    Failing cells become rows with empty numbers and a status message.  The
    CSV (and plot) are written when the spec names an output.  With timing
    off every ``elapsed_s`` is 0, making the CSV byte-identical across runs.
    """
    timing = spec.timing if timing is None else timing
    a = spec.dataset.load()
    n, m = a.shape
    for k in spec.k_values:
        if k > min(n, m):
            raise ParseError(f"k = {k} exceeds min(n, m) = {min(n, m)}")
    p = spec.p
    floor = RATIO_FLOOR * max(entrywise_norm(a, p), 1e-300)
    rows = []
    label = spec.dataset.label
    for k in spec.k_values:
        svd_err = baseline_error(a, k, p)
        cache = {}
        for seed in spec.seeds:
            for algo in spec.algorithms:
                t0 = time.perf_counter()
                row = {"dataset": label, "algorithm": algo, "p": str(p), "k": k, "seed": seed,
                       "svd_error": svd_err}
                try:
                    err, cols = _run_cell(a, algo, k, p, seed, spec.trials, cache)
                    row.update(error=err, ratio=_ratio(err, svd_err, floor), columns_used=cols, status="ok")
                except (LplraError, ValueError, np.linalg.LinAlgError) as exc:
                    kind = "refused" if isinstance(exc, RefusalError) else "failed"
                    row.update(error=None, ratio=None, columns_used=None,
                               status=f"{kind}: {exc}".replace("\n", " "))
                row["elapsed_s"] = time.perf_counter() - t0 if timing else 0.0
                rows.append(row)
    if spec.output:
        write_csv(spec.output, rows)
        meta = {"trials": spec.trials, "seeds": list(spec.seeds), "k_values": list(spec.k_values),
                "p": str(p), "algorithms": list(spec.algorithms), "dataset": label}
        Path(str(spec.output) + ".meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    if spec.plot:
        plot_ratios(rows, spec.plot)
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def format_row(row: dict) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="").writerow([_fmt(row.get(h)) for h in CSV_HEADER])
    return buf.getvalue()


def write_csv(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for row in rows:
            fh.write(format_row(row) + "\n")


def read_csv(path) -> list:
    """Rows of an emitted CSV with numeric fields parsed back."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            for key in ("error", "svd_error", "ratio", "elapsed_s"):
                row[key] = float(row[key]) if row[key] != "" else None
            for key in ("k", "seed", "columns_used"):
                row[key] = int(row[key]) if row[key] != "" else None
            out.append(row)
    return out


def plot_ratios(rows: Sequence[dict], path) -> None:
    """Static SVG of the mean ratio against k, one line per algorithm."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "lplra"
    fig, ax = plt.subplots(figsize=(5, 3.5))
    algos = [a for a in ALGORITHMS if any(r["algorithm"] == a for r in rows)]
    for algo in algos:
        pts = {}
        for r in rows:
            if r["algorithm"] == algo and r.get("ratio") is not None and math.isfinite(r["ratio"]):
                pts.setdefault(r["k"], []).append(r["ratio"])
        ks = sorted(pts)
        if ks:
            ax.plot(ks, [float(np.mean(pts[k])) for k in ks], marker="o", label=algo)
    ax.axhline(1.0, color="grey", lw=0.8, ls="--")
    ax.set_xlabel("k")
    ax.set_ylabel("error / SVD error")
    if algos:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
