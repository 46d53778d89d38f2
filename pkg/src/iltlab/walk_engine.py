"""Lattice step laws, walk sampling and local-time fields.

Probabilities are exact :class:`fractions.Fraction` values.  Sampling goes
through an alias table whose acceptance thresholds are exact integers, so the
sampled law is the declared law bit for bit.  Random streams are counter-based
(Philox): stream ``(replica, walk)`` under ``seed`` is fully determined and
independent of how replicas are scheduled.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, reduce
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DegenerateSupport,
    MismatchedConfig,
    NotSymmetric,
    ProbabilitiesNotNormalized,
)

APERIODIC_PROBE_DEPTH = 64


# --------------------------------------------------------------------------
# exact rational linear algebra (tiny matrices only)

def _rank(rows: Sequence[Sequence[Fraction]]) -> int:
    m = [list(map(Fraction, r)) for r in rows]
    rank = 0
    ncols = len(m[0]) if m else 0
    for col in range(ncols):
        pivot = next((i for i in range(rank, len(m)) if m[i][col] != 0), None)
        if pivot is None:
            continue
        m[rank], m[pivot] = m[pivot], m[rank]
        for i in range(len(m)):
            if i != rank and m[i][col] != 0:
                factor = m[i][col] / m[rank][col]
                m[i] = [a - factor * b for a, b in zip(m[i], m[rank])]
        rank += 1
    return rank


def _det(mat: Sequence[Sequence[Fraction]]) -> Fraction:
    m = [list(r) for r in mat]
    n = len(m)
    det = Fraction(1)
    for col in range(n):
        pivot = next((i for i in range(col, n) if m[i][col] != 0), None)
        if pivot is None:
            return Fraction(0)
        if pivot != col:
            m[col], m[pivot] = m[pivot], m[col]
            det = -det
        det *= m[col][col]
        for i in range(col + 1, n):
            factor = m[i][col] / m[col][col]
            m[i] = [a - factor * b for a, b in zip(m[i], m[col])]
    return det


# --------------------------------------------------------------------------
# step laws

@dataclass(frozen=True)
class StepLaw:
    """Finite-support symmetric increment distribution on Z^d.

    Build through :func:`build_step_law`, which validates the invariants.
    """

    d: int
    support: tuple[tuple[tuple[int, ...], Fraction], ...]
    name: str = "custom"

    @property
    def points(self) -> np.ndarray:
        return np.array([x for x, _ in self.support], dtype=np.int64).reshape(-1, self.d)

    @property
    def probabilities(self) -> tuple[Fraction, ...]:
        return tuple(q for _, q in self.support)

    @cached_property
    def covariance(self) -> tuple[tuple[Fraction, ...], ...]:
        """Exact covariance matrix sum_x q(x) x x^T."""
        d = self.d
        cov = [[Fraction(0)] * d for _ in range(d)]
        for x, q in self.support:
            for i in range(d):
                for j in range(d):
                    cov[i][j] += q * x[i] * x[j]
        return tuple(tuple(row) for row in cov)

    @property
    def gamma(self) -> np.ndarray:
        return np.array([[float(v) for v in row] for row in self.covariance])

    @cached_property
    def det_gamma(self) -> Fraction:
        return _det(self.covariance)

    @property
    def max_step(self) -> int:
        """Largest absolute coordinate of any support point."""
        return int(np.abs(self.points).max())

    @cached_property
    def denominator(self) -> int:
        """Least common denominator D of the step probabilities."""
        return reduce(math.lcm, (q.denominator for q in self.probabilities), 1)

    @cached_property
    def aperiodic_hint(self) -> str:
        """'yes', 'no' or 'unknown'; advisory only.

        gcd of the return times n <= APERIODIC_PROBE_DEPTH.  A gcd above one
        is only certain ('no') when every step has odd coordinate sum, which
        makes the walk bipartite.
        """
        g = _return_time_gcd(self, APERIODIC_PROBE_DEPTH)
        if g == 1:
            return "yes"
        if all(sum(x) % 2 == 1 for x, _ in self.support):
            return "no"
        return "unknown"

    @cached_property
    def alias_table(self) -> "AliasTable":
        return AliasTable.from_probabilities(self.probabilities)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "d": self.d,
            "support": [[list(x), str(q)] for x, q in self.support],
        }


def _return_time_gcd(law: StepLaw, depth: int) -> int:
    pts = law.points
    reach = np.zeros((1, law.d), dtype=np.int64)
    g = 0
    for n in range(1, depth + 1):
        reach = np.unique((reach[:, None, :] + pts[None, :, :]).reshape(-1, law.d), axis=0)
        if np.any(np.all(reach == 0, axis=1)):
            g = math.gcd(g, n)
            if g == 1:
                break
    return g


def build_step_law(d: int, support: Iterable, name: str = "custom") -> StepLaw:
    """Validate a support list of ``(point, probability)`` pairs.

    Probabilities may be given as anything :class:`Fraction` accepts
    (ints, Fractions, strings such as ``"1/4"``); floats are rejected
    because their binary expansion is rarely what was meant.
    """
    if d < 1:
        raise ConfigError(f"dimension must be positive, got {d}")
    merged: dict[tuple[int, ...], Fraction] = {}
    for x, q in support:
        pt = tuple(int(c) for c in x)
        if len(pt) != d:
            raise ConfigError(f"point {x} does not have dimension {d}")
        if isinstance(q, float):
            raise ConfigError("probabilities must be exact rationals, not floats")
        q = Fraction(q)
        if q <= 0:
            raise ProbabilitiesNotNormalized(f"non-positive probability {q} at {pt}")
        merged[pt] = merged.get(pt, Fraction(0)) + q
    if not merged:
        raise ConfigError("empty support")
    total = sum(merged.values())
    if total != 1:
        raise ProbabilitiesNotNormalized(f"probabilities sum to {total}, not 1")
    for pt, q in merged.items():
        neg = tuple(-c for c in pt)
        if merged.get(neg) != q:
            raise NotSymmetric(f"q({pt}) = {q} but q({neg}) = {merged.get(neg, 0)}")
    pts = sorted(merged)
    if _rank([list(map(Fraction, p)) for p in pts]) < d:
        raise DegenerateSupport(f"support spans a sublattice of rank < {d}")
    law = StepLaw(d=d, support=tuple((p, merged[p]) for p in pts), name=name)
    if law.det_gamma <= 0:  # pragma: no cover - implied by the rank check
        raise DegenerateSupport("covariance is not positive definite")
    return law


def simple_random_walk(d: int) -> StepLaw:
    q = Fraction(1, 2 * d)
    support = []
    for i in range(d):
        for s in (1, -1):
            x = [0] * d
            x[i] = s
            support.append((tuple(x), q))
    return build_step_law(d, support, name=f"srw{d}")


BUILTIN_LAWS = {"srw2": lambda: simple_random_walk(2), "srw3": lambda: simple_random_walk(3)}


def step_law_from_config(cfg: Mapping) -> StepLaw:
    """Build a law from ``{"d": 2, "support": [[[1, 0], "1/4"], ...]}``."""
    try:
        d = int(cfg["d"])
        support = [(pt, Fraction(str(q))) for pt, q in cfg["support"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed step-law config: {exc}") from exc
    return build_step_law(d, support, name=cfg.get("name", "custom"))


def load_step_law(spec: str | StepLaw) -> StepLaw:
    """Resolve a built-in name (``srw2``, ``srw3``) or a JSON config file path."""
    if isinstance(spec, StepLaw):
        return spec
    if spec in BUILTIN_LAWS:
        return BUILTIN_LAWS[spec]()
    path = Path(spec)
    if not path.exists():
        raise ConfigError(f"unknown step law {spec!r}")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return step_law_from_config(cfg)


# --------------------------------------------------------------------------
# sampling

@dataclass(frozen=True)
class AliasTable:
    """Exact Walker/Vose alias table.

    Column ``i`` is kept when ``u < threshold[i]`` with ``u`` uniform on
    ``range(scale)``; otherwise ``alias[i]`` is returned.
    """

    threshold: np.ndarray
    alias: np.ndarray
    scale: int

    @classmethod
    def from_probabilities(cls, probs: Sequence[Fraction]) -> "AliasTable":
        k = len(probs)
        scaled = [Fraction(q) * k for q in probs]
        thr = [Fraction(1)] * k
        alias = list(range(k))
        small = [i for i, s in enumerate(scaled) if s < 1]
        large = [i for i, s in enumerate(scaled) if s >= 1]
        while small and large:
            s, l = small.pop(), large.pop()
            thr[s] = scaled[s]
            alias[s] = l
            scaled[l] = scaled[l] - (1 - scaled[s])
            (small if scaled[l] < 1 else large).append(l)
        scale = reduce(math.lcm, (t.denominator for t in thr), 1)
        if scale >= 2**63:
            raise ConfigError("step probabilities too fine for exact alias sampling")
        num = np.array([int(t * scale) for t in thr], dtype=np.int64)
        return cls(threshold=num, alias=np.array(alias, dtype=np.int64), scale=scale)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        col = rng.integers(0, len(self.alias), size=size)
        u = rng.integers(0, self.scale, size=size)
        return np.where(u < self.threshold[col], col, self.alias[col])


def stream_generator(seed: int, stream: Sequence[int] = (0, 0)) -> np.random.Generator:
    """Counter-based generator for ``stream = (replica, walk)`` under ``seed``.

    The key carries (seed, replica); the walk index selects a disjoint
    2**64-block of the Philox counter.
    """
    replica, walk = (tuple(stream) + (0, 0))[:2]
    if seed < 0 or replica < 0 or walk < 0:
        raise ConfigError("seed and stream ids must be non-negative")
    key = np.array([seed % 2**64, replica % 2**64], dtype=np.uint64)
    counter = np.array([0, walk % 2**64, 0, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


@dataclass(frozen=True)
class WalkPath:
    """Positions S(1), ..., S(n); S(0) is the origin and not stored."""

    positions: np.ndarray
    law: StepLaw
    seed: int | None = None
    stream: tuple[int, ...] = ()

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def d(self) -> int:
        return self.law.d

    @property
    def increments(self) -> np.ndarray:
        full = np.vstack([np.zeros((1, self.d), dtype=np.int64), self.positions])
        return np.diff(full, axis=0)

    def truncated(self, k: int) -> "WalkPath":
        return WalkPath(self.positions[:k], self.law, self.seed, self.stream)


def sample_path(law: StepLaw, n: int, seed: int = 0, stream: Sequence[int] = (0, 0)) -> WalkPath:
    if n < 0:
        raise ConfigError(f"path length must be >= 0, got {n}")
    rng = stream_generator(seed, stream)
    idx = law.alias_table.sample(rng, n)
    steps = law.points[idx]
    return WalkPath(np.cumsum(steps, axis=0).reshape(n, law.d), law, seed, tuple(stream))


def path_from_increments(law: StepLaw, increments) -> WalkPath:
    """Deterministic path from an explicit step sequence (checked against the support)."""
    inc = np.asarray(increments, dtype=np.int64).reshape(-1, law.d)
    allowed = {x for x, _ in law.support}
    for row in inc:
        if tuple(int(c) for c in row) not in allowed:
            raise ConfigError(f"increment {tuple(row)} not in the support of {law.name}")
    return WalkPath(np.cumsum(inc, axis=0), law)


# --------------------------------------------------------------------------
# local times

def pack_sites(sites: Sequence[np.ndarray]) -> tuple[list[np.ndarray], int, np.ndarray] | None:
    """Pack integer coordinate arrays into int64 keys with one shared layout.

    Returns ``None`` when the coordinate span does not fit in 63 bits.
    """
    nonempty = [s for s in sites if len(s)]
    if not nonempty:
        return [np.zeros(0, dtype=np.int64) for _ in sites], 1, np.zeros(0, dtype=np.int64)
    lo = np.min([s.min(axis=0) for s in nonempty], axis=0)
    hi = np.max([s.max(axis=0) for s in nonempty], axis=0)
    span = (hi - lo + 1).astype(object)
    if math.prod(span) >= 2**63:
        return None
    radix = np.array([math.prod(span[:i]) for i in range(len(span))], dtype=np.int64)
    return [((s - lo) * radix).sum(axis=1) if len(s) else np.zeros(0, dtype=np.int64)
            for s in sites], int(math.prod(span)), lo


@dataclass(frozen=True)
class LocalTimeField:
    """Visit counts l(n, x) = #{1 <= k <= n : S(k) = x}, stored sparsely.

    ``sites`` rows are sorted lexicographically; every count is >= 1.
    """

    sites: np.ndarray
    counts: np.ndarray
    n: int
    d: int

    def __post_init__(self):
        if int(self.counts.sum()) > self.n:
            raise ConfigError("counts exceed the horizon n")
        if len(self.counts) and self.counts.min() < 1:
            raise ConfigError("stored counts must be >= 1")

    @classmethod
    def from_counts(cls, counts: Mapping[tuple, int], n: int | None = None) -> "LocalTimeField":
        """Build from a mapping; ``n`` defaults to the total count."""
        items = sorted((tuple(int(c) for c in k), int(v)) for k, v in counts.items() if v)
        if not items:
            d = len(next(iter(counts))) if counts else 1
            return cls(np.zeros((0, d), dtype=np.int64), np.zeros(0, dtype=np.int64), n or 0, d)
        d = len(items[0][0])
        sites = np.array([k for k, _ in items], dtype=np.int64).reshape(-1, d)
        cnt = np.array([v for _, v in items], dtype=np.int64)
        return cls(sites, cnt, int(cnt.sum()) if n is None else n, d)

    def as_dict(self) -> dict[tuple[int, ...], int]:
        return {tuple(int(c) for c in s): int(v) for s, v in zip(self.sites, self.counts)}

    def __len__(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def local_time_field(path: WalkPath) -> LocalTimeField:
    if path.n == 0:
        return LocalTimeField(np.zeros((0, path.d), dtype=np.int64),
                              np.zeros(0, dtype=np.int64), 0, path.d)
    sites, counts = np.unique(path.positions, axis=0, return_counts=True)
    return LocalTimeField(sites.astype(np.int64), counts.astype(np.int64), path.n, path.d)


# --------------------------------------------------------------------------
# smoothing over lattice balls

def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def lattice_ball(d: int, radius: float) -> np.ndarray:
    """All y in Z^d with |y| <= radius (relative slack 1e-12 on radius**2)."""
    r = int(math.floor(radius * (1 + 1e-12)))
    r2 = radius * radius * (1 + 1e-12)
    axes = [np.arange(-r, r + 1)] * d
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    return grid[(grid * grid).sum(axis=1) <= r2].astype(np.int64)


@dataclass(frozen=True)
class SmoothConfig:
    """Ball B_n = {y : |y| <= epsilon * sqrt(n / b_n)}."""

    d: int
    epsilon: float
    b_n: float
    n: int

    def __post_init__(self):
        if self.epsilon <= 0 or self.b_n <= 0 or self.n < 0:
            raise ConfigError("epsilon and b_n must be positive, n non-negative")

    @classmethod
    def with_radius(cls, d: int, radius: float, n: int) -> "SmoothConfig":
        """Config for horizon ``n`` whose ball has exactly the given radius."""
        return cls(d=d, epsilon=radius, b_n=float(n) if n else 1.0, n=n)

    @property
    def ball_radius(self) -> float:
        return self.epsilon * math.sqrt(self.n / self.b_n) if self.n else self.epsilon

    @cached_property
    def ball(self) -> np.ndarray:
        return lattice_ball(self.d, self.ball_radius)

    @property
    def ball_size(self) -> int:
        return len(self.ball)

    @property
    def C_d(self) -> float:
        return unit_ball_volume(self.d)


@dataclass(frozen=True)
class SmoothedField:
    """l(n, x, eps) as an exact sparse map site -> Fraction."""

    values: dict
    n: int
    config: SmoothConfig

    def __getitem__(self, site):
        return self.values.get(tuple(site), Fraction(0))

    def __len__(self):
        return len(self.values)

    def items(self):
        return self.values.items()

    def total(self) -> Fraction:
        return sum(self.values.values(), Fraction(0))


def smoothed_local_time(source: WalkPath | LocalTimeField, cfg: SmoothConfig) -> SmoothedField:
    field_ = local_time_field(source) if isinstance(source, WalkPath) else source
    if field_.d != cfg.d:
        raise ConfigError("dimension of field and smoothing config differ")
    if field_.n != cfg.n:
        raise MismatchedConfig(f"smoothing config built for n={cfg.n}, field has n={field_.n}")
    ball = cfg.ball
    if len(field_) == 0:
        return SmoothedField({}, field_.n, cfg)
    shifted = (field_.sites[:, None, :] + ball[None, :, :]).reshape(-1, cfg.d)
    weights = np.repeat(field_.counts, len(ball))
    sites, inverse = np.unique(shifted, axis=0, return_inverse=True)
    sums = np.zeros(len(sites), dtype=np.int64)
    np.add.at(sums, inverse.ravel(), weights)
    size = len(ball)
    values = {tuple(int(c) for c in s): Fraction(int(v), size) for s, v in zip(sites, sums)}
    return SmoothedField(values, field_.n, cfg)
