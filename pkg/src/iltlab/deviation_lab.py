"""Monte Carlo experiments on intersection local times.

Every replica r draws its p walks from the counter-based streams
(seed, r, j), j = 0..p-1, so any result is a pure function of the
configuration and the seed, whatever the number of worker threads or the
way replicas are split into batches.  Pooled statistics are kept as exact
integer sums (power sums of I_n, hit counts), which makes merging
associative and commutative down to the last bit.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import BudgetExceeded, ConfigError
from .exact_moments import MomentEntry, MomentTable
from .ground_state import check_condition, rate_constants
from .intersection import (
    intersection_count,
    intersection_profile,
    range_intersection,
    smoothed_intersection,
)
from .walk_engine import (
    SmoothConfig,
    StepLaw,
    load_step_law,
    local_time_field,
    sample_path,
    smoothed_local_time,
)

MAX_STEPS = 5 * 10**9          # total walk steps per experiment
CHUNK_STEPS = 2_000_000        # walk steps handled per vectorised chunk


# --------------------------------------------------------------------------
# configuration

def _bn_function(rule: str):
    if rule == "loglog":
        return lambda n: max(1.0, math.log(math.log(n))) if n > math.e else 1.0
    m = re.fullmatch(r"power:([0-9.eE+-]+)", rule)
    if m:
        alpha = float(m.group(1))
        if not 0 < alpha < 1:
            raise ConfigError("power rule needs 0 < alpha < 1")
        return lambda n: max(1.0, float(n) ** alpha)
    raise ConfigError(f"unknown b_n rule {rule!r} (use 'loglog' or 'power:<alpha>')")


@dataclass(frozen=True)
class ExperimentConfig:
    law: str = "srw2"
    d: int | None = None
    p: int = 2
    n: int = 64
    replicas: int = 1000
    seed: int = 0
    b_n_rule: str = "loglog"
    lambdas: tuple = ()
    epsilon: float | None = None
    n_max: int | None = None
    rho: float = 1.5
    start: int = 16
    out: str | None = None
    fmt: str = "csv"

    def __post_init__(self):
        law = self.step_law
        if self.d is None:
            object.__setattr__(self, "d", law.d)
        elif self.d != law.d:
            raise ConfigError(f"--d {self.d} does not match law {law.name} (d={law.d})")
        check_condition(self.d, self.p)
        object.__setattr__(self, "lambdas", tuple(float(x) for x in self.lambdas))
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if any(b <= a for a, b in zip(self.lambdas, self.lambdas[1:])):
            raise ConfigError("lambda grid must be strictly increasing")
        if any(x <= 0 for x in self.lambdas):
            raise ConfigError("lambdas must be positive")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if self.rho <= 1 or self.start < 3:
            raise ConfigError("schedule needs rho > 1 and start >= 3")
        if self.fmt not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        self._check_bn()

    def _check_bn(self):
        b = _bn_function(self.b_n_rule)
        lo = max(self.n, 3)
        hi = lo * 10**6
        if not (b(hi) > b(lo) >= 1):
            raise ConfigError("b_n rule must increase without bound")
        if not (b(hi) / hi < b(lo) / lo < 1):
            raise ConfigError("b_n rule must satisfy b_n / n -> 0")

    @property
    def step_law(self) -> StepLaw:
        return load_step_law(self.law)

    def b_n(self, n: int | None = None) -> float:
        return _bn_function(self.b_n_rule)(self.n if n is None else n)

    @property
    def exponents(self) -> tuple[float, float]:
        """(time exponent (2p - d(p-1))/2, b_n exponent d(p-1)/2)."""
        return (2 * self.p - self.d * (self.p - 1)) / 2, self.d * (self.p - 1) / 2

    def schedule(self) -> list[int]:
        top = self.n_max if self.n_max is not None else self.n
        out = []
        k = self.start
        while k < top:
            out.append(k)
            k = math.ceil(self.rho * k)
        out.append(top)
        return out

    @classmethod
    def from_mapping(cls, data: Mapping, **overrides) -> "ExperimentConfig":
        """Build from a parsed JSON object; keys of ``data`` win over ``overrides``."""
        names = set(cls.__dataclass_fields__)
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged = {k: v for k, v in overrides.items() if v is not None and k in names}
        merged.update(data)
        if "lambdas" in merged:
            merged["lambdas"] = tuple(merged["lambdas"])
        try:
            return cls(**merged)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        return asdict(self)


def worker_count() -> int:
    raw = os.environ.get("ILT_THREADS")
    if raw is None:
        return min(8, os.cpu_count() or 1)
    try:
        k = int(raw)
    except ValueError:
        raise ConfigError(f"ILT_THREADS must be an integer, got {raw!r}") from None
    if k < 1:
        raise ConfigError("ILT_THREADS must be >= 1")
    return k


def _check_budget(cfg: ExperimentConfig, n: int, replicas: int):
    steps = n * replicas * cfg.p
    if steps > MAX_STEPS:
        raise BudgetExceeded(f"{steps} walk steps exceeds the budget of {MAX_STEPS}")


def _chunks(ids: Sequence[int], size: int) -> list[Sequence[int]]:
    return [ids[i:i + size] for i in range(0, len(ids), size)]


def _parallel(fn, chunks):
    threads = worker_count()
    if threads == 1 or len(chunks) == 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, chunks))


# --------------------------------------------------------------------------
# sampling I_n

def replica_paths(law: StepLaw, n: int, p: int, seed: int, replica: int):
    return [sample_path(law, n, seed, (replica, j)) for j in range(p)]


def _chunk_intersections(law, p, seed, reps, horizons):
    n = horizons[-1]
    pos = np.stack([np.stack([pa.positions for pa in replica_paths(law, n, p, seed, r)])
                    for r in reps])                                # (R, p, n, d)
    lo = pos.min(axis=(0, 1, 2))
    span = (pos.max(axis=(0, 1, 2)) - lo + 1).astype(np.int64)
    total_span = int(np.prod(span.astype(object)))
    R = len(reps)
    out = np.zeros((R, len(horizons)), dtype=np.int64)
    if total_span * R >= 2**62:
        for i, r in enumerate(reps):
            for h_i, h in enumerate(horizons):
                fields = [local_time_field(pa.truncated(h))
                          for pa in replica_paths(law, n, p, seed, r)]
                out[i, h_i] = intersection_count(fields)
        return out
    radix = np.cumprod(np.concatenate([[1], span[:-1]])).astype(np.int64)
    keys = ((pos - lo) * radix).sum(axis=-1)                       # (R, p, n)
    keys += (np.arange(R, dtype=np.int64) * total_span)[:, None, None]
    for h_i, h in enumerate(horizons):
        uniq = [np.unique(keys[:, j, :h], return_counts=True) for j in range(p)]
        common = uniq[0][0]
        for u, _ in uniq[1:]:
            common = np.intersect1d(common, u, assume_unique=True)
        prod = np.ones(len(common), dtype=np.int64)
        for u, c in uniq:
            prod *= c[np.searchsorted(u, common)]
        np.add.at(out[:, h_i], common // total_span, prod)
    return out


def sample_intersections(cfg: ExperimentConfig, horizons: Sequence[int] | None = None,
                         replicas: Sequence[int] | None = None) -> np.ndarray:
    """I at each horizon for each replica: int64 array (replicas, horizons).

    All horizons are read off the same paths (prefixes of the longest one).
    """
    horizons = sorted(horizons) if horizons else [cfg.n]
    reps = list(range(cfg.replicas)) if replicas is None else list(replicas)
    n = horizons[-1]
    _check_budget(cfg, n, len(reps))
    law = cfg.step_law
    size = max(1, CHUNK_STEPS // (n * cfg.p))
    parts = _parallel(lambda c: _chunk_intersections(law, cfg.p, cfg.seed, c, horizons),
                      _chunks(reps, size))
    if not parts:
        return np.zeros((0, len(horizons)), dtype=np.int64)
    return np.concatenate(parts)


# --------------------------------------------------------------------------
# result tables and emitters

@dataclass
class ResultTable:
    columns: tuple
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return [r[name] for r in self.rows]


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def to_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(table.columns)
    for row in table.rows:
        w.writerow([_cell(row.get(c)) for c in table.columns])
    return buf.getvalue()


_INT = re.compile(r"-?\d+")


def _parse_cell(s: str):
    """Inverse of ``_cell``; only canonical spellings become numbers."""
    if s == "":
        return None
    if s in ("true", "false"):
        return s == "true"
    if _INT.fullmatch(s):
        return int(s) if str(int(s)) == s else s
    try:
        v = float(s)
    except ValueError:
        return s
    return v if repr(v) == s else s


def parse_csv(text: str) -> ResultTable:
    reader = csv.reader(io.StringIO(text, newline=""))
    rows = list(reader)
    if not rows:
        raise ConfigError("empty CSV")
    cols = tuple(rows[0])
    return ResultTable(cols, [dict(zip(cols, map(_parse_cell, r))) for r in rows[1:]])


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        v = float(v)
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, Fraction):
        return str(v)
    return v


def to_json(table: ResultTable) -> str:
    rows = [{c: _jsonable(r.get(c)) for c in table.columns} for r in table.rows]
    return json.dumps(rows, indent=1, allow_nan=False) + "\n"


def emit(table: ResultTable, fmt: str = "csv", path: str | None = None) -> str:
    """Serialise ``table`` as CSV or JSON; write it to ``path`` if given."""
    if fmt == "csv":
        text = to_csv(table)
    elif fmt == "json":
        text = to_json(table)
    else:
        raise ConfigError(f"unknown format {fmt!r}")
    if path is not None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
    return text


# --------------------------------------------------------------------------
# simulate

SIMULATE_COLUMNS = ("replica", "n", "I_n", "J_n", "smoothed_I_n")


def run_simulate(cfg: ExperimentConfig) -> ResultTable:
    """Per-replica I_n and J_n (and the smoothed I_n if epsilon is set)."""
    _check_budget(cfg, cfg.n, cfg.replicas)
    law = cfg.step_law
    smooth = SmoothConfig(cfg.d, cfg.epsilon, cfg.b_n(), cfg.n) if cfg.epsilon else None

    def one(r):
        paths = replica_paths(law, cfg.n, cfg.p, cfg.seed, r)
        fields = [local_time_field(pa) for pa in paths]
        row = {"replica": r, "n": cfg.n, "I_n": intersection_count(fields),
               "J_n": range_intersection(fields), "smoothed_I_n": None}
        if smooth is not None:
            sm = [smoothed_local_time(f, smooth) for f in fields]
            row["smoothed_I_n"] = float(smoothed_intersection(sm))
        return row

    rows = [row for part in _parallel(lambda c: [one(r) for r in c],
                                      _chunks(list(range(cfg.replicas)), 64)) for row in part]
    return ResultTable(SIMULATE_COLUMNS, rows, {"config": cfg.to_dict()})


# --------------------------------------------------------------------------
# Monte Carlo moments

@dataclass(frozen=True)
class MomentBatch:
    """Exact power sums sum_r I_n(r)^k, k = 0..2*max(m), over a replica set."""

    n: int
    p: int
    law: str
    ms: tuple
    sums: tuple
    replicas: frozenset

    def merge(self, other: "MomentBatch") -> "MomentBatch":
        if (self.n, self.p, self.law, self.ms) != (other.n, other.p, other.law, other.ms):
            raise ConfigError("cannot merge batches of different experiments")
        if self.replicas & other.replicas:
            raise ConfigError("batches share replicas")
        return MomentBatch(self.n, self.p, self.law, self.ms,
                           tuple(a + b for a, b in zip(self.sums, other.sums)),
                           self.replicas | other.replicas)

    @property
    def count(self) -> int:
        return self.sums[0]

    def entries(self) -> list[MomentEntry]:
        """MC means of I_n^m with jackknife standard errors.

        For a plain mean the jackknife error is s / sqrt(R); it is computed
        here from the exact power sums.  With R = 1 it is undefined (None).
        """
        R = self.count
        out = []
        for m in self.ms:
            s1, s2 = self.sums[m], self.sums[2 * m]
            mean = float(Fraction(s1, R))
            if R > 1:
                var = Fraction(s2 * R - s1 * s1, R * (R - 1))
                stderr = math.sqrt(float(var) / R)
            else:
                stderr = None
            out.append(MomentEntry(self.n, m, self.p, self.law, mean, "monte-carlo",
                                   stderr, R))
        return out


def moment_batch(cfg: ExperimentConfig, ms: Iterable[int],
                 replicas: Sequence[int] | None = None) -> MomentBatch:
    ms = tuple(sorted(set(int(m) for m in ms)))
    if not ms or ms[0] < 1:
        raise ConfigError("moment orders must be >= 1")
    reps = list(range(cfg.replicas)) if replicas is None else list(replicas)
    values = sample_intersections(cfg, [cfg.n], reps)[:, 0]
    top = 2 * ms[-1]
    vals = [int(v) for v in values]
    sums = [len(vals)] + [0] * top
    for v in vals:
        acc = 1
        for k in range(1, top + 1):
            acc *= v
            sums[k] += acc
    return MomentBatch(cfg.n, cfg.p, cfg.step_law.name, ms, tuple(sums), frozenset(reps))


def merge_batches(batches: Sequence):
    if not batches:
        raise ConfigError("nothing to merge")
    out = batches[0]
    for b in batches[1:]:
        out = out.merge(b)
    return out


MOMENT_COLUMNS = MomentTable.columns


def moment_rows(table: MomentTable) -> ResultTable:
    """Rows n, m, p, law, method, value, stderr; an empty stderr on a
    Monte Carlo row means a single replica (standard error undefined)."""
    return ResultTable(MOMENT_COLUMNS, table.rows())


def run_mc_moments(cfg: ExperimentConfig, ms: Iterable[int] = (1,),
                   table: MomentTable | None = None) -> MomentTable:
    """Add MC estimates of E I_n^m to ``table`` (checked against what is there)."""
    table = MomentTable() if table is None else table
    for e in moment_batch(cfg, ms).entries():
        table.add(e)
    return table


def scaling_check(cfg: ExperimentConfig, factor: int = 4) -> dict:
    """MC means of I_n / n at n and factor*n from the same paths."""
    values = sample_intersections(cfg, [cfg.n, factor * cfg.n])
    R = len(values)
    means = values.mean(axis=0) / np.array([cfg.n, factor * cfg.n])
    se = values.std(axis=0, ddof=1) / np.array([cfg.n, factor * cfg.n]) / math.sqrt(R) \
        if R > 1 else np.array([math.nan, math.nan])
    return {"n": cfg.n, "factor": factor, "mean_small": float(means[0]),
            "mean_large": float(means[1]), "stderr_small": float(se[0]),
            "stderr_large": float(se[1]),
            "relative_difference": float(abs(means[1] - means[0]) / means[1])}


# --------------------------------------------------------------------------
# tail curves

TAIL_COLUMNS = ("lambda", "n", "b_n", "threshold", "hits", "trials", "p_hat",
                "log_p_hat_over_b_n", "theory")


@dataclass(frozen=True)
class TailBatch:
    config: ExperimentConfig
    hits: tuple
    trials: int
    replicas: frozenset

    def merge(self, other: "TailBatch") -> "TailBatch":
        if replace(self.config, replicas=1) != replace(other.config, replicas=1):
            raise ConfigError("cannot merge tail batches of different experiments")
        if self.replicas & other.replicas:
            raise ConfigError("batches share replicas")
        return TailBatch(self.config, tuple(a + b for a, b in zip(self.hits, other.hits)),
                         self.trials + other.trials, self.replicas | other.replicas)

    def thresholds(self) -> list[float]:
        cfg = self.config
        e_time, e_b = cfg.exponents
        return [lam * cfg.n**e_time * cfg.b_n() ** e_b for lam in cfg.lambdas]

    def table(self, moderate_coeff: float | None = None) -> ResultTable:
        cfg = self.config
        if moderate_coeff is None:
            moderate_coeff = rate_constants(cfg.d, cfg.p, cfg.step_law.gamma).moderate_coeff
        bn = cfg.b_n()
        rows = []
        for lam, thr, h in zip(cfg.lambdas, self.thresholds(), self.hits):
            p_hat = h / self.trials
            rows.append({
                "lambda": lam, "n": cfg.n, "b_n": bn, "threshold": thr, "hits": h,
                "trials": self.trials, "p_hat": p_hat,
                "log_p_hat_over_b_n": math.log(p_hat) / bn if h > 0 else None,
                "theory": -moderate_coeff * lam ** (2 / (cfg.d * (cfg.p - 1))),
            })
        return ResultTable(TAIL_COLUMNS, rows, {"config": cfg.to_dict(),
                                                "moderate_coeff": moderate_coeff})


def tail_batch(cfg: ExperimentConfig, replicas: Sequence[int] | None = None) -> TailBatch:
    if not cfg.lambdas:
        raise ConfigError("tail curve needs a lambda grid")
    reps = list(range(cfg.replicas)) if replicas is None else list(replicas)
    values = sample_intersections(cfg, [cfg.n], reps)[:, 0]
    proto = TailBatch(cfg, (), len(reps), frozenset(reps))
    hits = tuple(int(np.count_nonzero(values >= thr)) for thr in proto.thresholds())
    return TailBatch(cfg, hits, len(reps), frozenset(reps))


def run_tail_curve(cfg: ExperimentConfig, moderate_coeff: float | None = None) -> ResultTable:
    """Exceedance frequencies P(I_n >= lambda n^a b_n^c) on the lambda grid.

    Events are nested (same samples, increasing thresholds), so p_hat is
    nonincreasing in lambda.  The theory column is the moderate-deviation
    slope, shown for comparison only.
    """
    return tail_batch(cfg).table(moderate_coeff)


# --------------------------------------------------------------------------
# LIL traces

LIL_COLUMNS = ("replica", "k", "n_k", "I_n", "statistic", "running_max", "reference")


def _lil_rows(cfg, law, schedule, reference, r):
    paths = replica_paths(law, schedule[-1], cfg.p, cfg.seed, r)
    prof = intersection_profile(paths)
    e_time, e_b = cfg.exponents
    rows = []
    best = 0.0
    for k, nk in enumerate(schedule):
        I = int(prof[nk - 1])
        ll = math.log(math.log(nk))
        stat = I / (nk**e_time * ll**e_b)
        best = max(best, stat)
        rows.append({"replica": r, "k": k, "n_k": nk, "I_n": I, "statistic": stat,
                     "running_max": best, "reference": reference})
    return rows


def run_lil_trace(cfg: ExperimentConfig, replicas: Sequence[int] | None = None,
                  reference: float | None = None) -> ResultTable:
    """Normalised I along a geometric schedule, one incremental pass per replica.

    The statistic is I_{n_k} / (n_k^a (log log n_k)^c); ``reference`` is the
    almost-sure limsup for the walk (defaults to the solver value).
    """
    schedule = cfg.schedule()
    _check_budget(cfg, schedule[-1], cfg.replicas)
    law = cfg.step_law
    if reference is None:
        reference = rate_constants(cfg.d, cfg.p, law.gamma).lil_walk
    reps = list(range(cfg.replicas)) if replicas is None else list(replicas)
    parts = _parallel(lambda c: [row for r in c
                                 for row in _lil_rows(cfg, law, schedule, reference, r)],
                      _chunks(reps, 1))
    rows = [row for part in parts for row in part]
    return ResultTable(LIL_COLUMNS, rows, {"config": cfg.to_dict(), "schedule": schedule,
                                           "reference": reference})


def merge_lil_traces(traces: Sequence[ResultTable]) -> ResultTable:
    if not traces:
        raise ConfigError("nothing to merge")
    rows = sorted((row for t in traces for row in t.rows), key=lambda r: (r["replica"], r["k"]))
    seen = {(r["replica"], r["k"]) for r in rows}
    if len(seen) != len(rows):
        raise ConfigError("traces share replicas")
    return ResultTable(LIL_COLUMNS, rows, dict(traces[0].meta))
