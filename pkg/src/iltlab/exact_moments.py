"""Exact moments of the intersection local time for small horizons.

All exact arithmetic works with integer arrays scaled by powers of the
common probability denominator D: ``P^i(x) * D**i`` is an integer for every
step law with probabilities in (1/D)Z.  Values are returned as Fractions.

Moment formula.  For one walk, phi(x_1..x_m) = E prod_k l(n, x_k) is the sum
over time tuples in [1, n]^m of P(S(t_k) = x_k for all k).  Sorting the
tuple by (time, index) gives a unique permutation sigma and ordered times
i_1 <= ... <= i_m, where a tie i_{k-1} = i_k is admitted only when
sigma(k-1) < sigma(k).  Then E I_n^m = sum_x phi(x)^p by independence.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import mpmath
import numpy as np

from .errors import BoxTooLarge, BudgetExceeded, ConfigError, InconsistentMoment, MissingMoment
from .walk_engine import StepLaw

DEFAULT_MAX_CELLS = 4_000_000
DEFAULT_BUDGET = 10**7


# --------------------------------------------------------------------------
# kernel powers

@dataclass
class KernelPowerTable:
    """P^i on the box [-N*R, N*R]^d, i = 0..N (R = max step).

    ``mode="exact"`` stores integer arrays ``P^i * D**i`` (object dtype);
    ``mode="float"`` stores ``np.longdouble`` probabilities.
    """

    law: StepLaw
    N: int
    radius: int
    mode: str
    arrays: list = field(repr=False)

    @property
    def shape(self):
        return self.arrays[0].shape

    @property
    def D(self) -> int:
        return self.law.denominator

    def index(self, x) -> tuple:
        return tuple(int(c) + self.radius for c in x)

    def prob(self, i: int, x) -> Fraction | float:
        idx = self.index(x)
        if any(c < 0 or c >= s for c, s in zip(idx, self.shape)):
            return Fraction(0) if self.mode == "exact" else 0.0
        v = self.arrays[i][idx]
        return Fraction(int(v), self.D**i) if self.mode == "exact" else float(v)

    def scaled(self, i: int, power: int | None = None) -> np.ndarray:
        """Exact mode only: integer array P^i * D**power (power >= i)."""
        power = i if power is None else power
        return self.arrays[i] * (self.D ** (power - i))

    def coords(self) -> np.ndarray:
        axes = [np.arange(-self.radius, self.radius + 1)] * self.law.d
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.law.d)


def _shift(arr: np.ndarray, offset: Sequence[int]) -> np.ndarray:
    """out[x] = arr[x - offset] with zero fill."""
    out = np.zeros_like(arr)
    src, dst = [], []
    for o, size in zip(offset, arr.shape):
        if o >= 0:
            src.append(slice(0, size - o))
            dst.append(slice(o, size))
        else:
            src.append(slice(-o, size))
            dst.append(slice(0, size + o))
    out[tuple(dst)] = arr[tuple(src)]
    return out


def kernel_powers(law: StepLaw, N: int, mode: str = "exact",
                  max_cells: int = DEFAULT_MAX_CELLS) -> KernelPowerTable:
    if N < 0:
        raise ConfigError("N must be >= 0")
    if mode not in ("exact", "float"):
        raise ConfigError(f"unknown mode {mode!r}")
    radius = N * law.max_step
    side = 2 * radius + 1
    cells = side**law.d * (N + 1)
    if cells > max_cells:
        raise BoxTooLarge(f"{cells} cells exceeds the cap of {max_cells}")
    if mode == "exact":
        first = np.zeros((side,) * law.d, dtype=object)
        first[...] = 0
        first[(radius,) * law.d] = 1
        weights = [int(q * law.denominator) for q in law.probabilities]
    else:
        first = np.zeros((side,) * law.d, dtype=np.longdouble)
        first[(radius,) * law.d] = 1
        weights = [np.longdouble(q.numerator) / np.longdouble(q.denominator)
                   for q in law.probabilities]
    arrays = [first]
    pts = [tuple(x) for x, _ in law.support]
    for _ in range(N):
        prev = arrays[-1]
        nxt = np.zeros_like(prev)
        for w, x in zip(weights, pts):
            nxt = nxt + w * _shift(prev, x)
        arrays.append(nxt)
    return KernelPowerTable(law, N, radius, mode, arrays)


# --------------------------------------------------------------------------
# first moment

def _green_scaled(table: KernelPowerTable, n: int) -> np.ndarray:
    """D**n * sum_{i=1}^n P^i as an integer array."""
    g = np.zeros(table.shape, dtype=object)
    g[...] = 0
    for i in range(1, n + 1):
        g = g + table.scaled(i, n)
    return g


def expected_In(law: StepLaw, n: int, p: int, mode: str = "exact",
                table: KernelPowerTable | None = None):
    """E I_n = sum_x (sum_{i=1}^n P^i(x))^p."""
    if n < 0 or p < 1:
        raise ConfigError("need n >= 0 and p >= 1")
    if n == 0:
        return Fraction(0) if mode == "exact" else 0.0
    table = table if table is not None and table.N >= n and table.mode == mode \
        else kernel_powers(law, n, mode)
    if mode == "float":
        g = sum(table.arrays[i] for i in range(1, n + 1))
        return float(np.sum(g**p))
    g = _green_scaled(table, n)
    return Fraction(int(np.sum(g**p)), law.denominator ** (n * p))


# --------------------------------------------------------------------------
# higher moments

def _second_moment(law: StepLaw, n: int, p: int, table: KernelPowerTable) -> Fraction:
    """m = 2 via phi(x1, x2) = A(x1, x2 - x1) + A(x2, x1 - x2) + 1{x1 = x2} G(x1).

    A(x, y) = sum_{i=1}^{n-1} P^i(x) H_{n-i}(y) with H_k = sum_{g=1}^k P^g
    covers the strictly ordered time pairs; all terms are scaled by D**n.
    """
    D = law.denominator
    d = law.d
    coords = table.coords()
    B = len(coords)
    flat = [table.arrays[i].reshape(-1) for i in range(n + 1)]
    G = _green_scaled(table, n).reshape(-1)
    # H_k * D**k for k = 1..n-1
    H = []
    acc = np.zeros(B, dtype=object)
    acc[:] = 0
    for k in range(1, n):
        acc = acc * D + flat[k]
        H.append(acc.copy())
    if n > 1:
        Pm = np.stack([flat[i] for i in range(1, n)])        # (n-1, B), scale D**i
        Hm = np.stack([H[n - i - 1] for i in range(1, n)])   # (n-1, B), scale D**(n-i)
        if n * n * float(D) ** n < 2**62:
            A = Pm.astype(np.int64).T @ Hm.astype(np.int64)
            A = A.astype(object)
        else:
            A = Pm.T.dot(Hm)
    else:
        A = np.zeros((B, B), dtype=object)
        A[...] = 0
    side = 2 * table.radius + 1
    radix = np.array([side**k for k in range(d)], dtype=np.int64)
    diff = coords[None, :, :] - coords[:, None, :]           # x2 - x1
    inside = np.all(np.abs(diff) <= table.radius, axis=-1)
    yidx = ((diff + table.radius) * radix).sum(axis=-1)
    yidx = np.where(inside, yidx, 0)
    rows = np.arange(B)[:, None]
    fwd = np.where(inside, A[rows, yidx], 0)                  # A(x1, x2 - x1)
    phi = fwd + fwd.T
    phi[np.arange(B), np.arange(B)] += G
    total = int(np.sum(phi.astype(object) ** p))
    return Fraction(total, D ** (n * p))


def _phi_generic(law: StepLaw, n: int, m: int, table: KernelPowerTable,
                 support: np.ndarray) -> np.ndarray:
    """phi * D**n for every m-tuple drawn from ``support`` (rows of coords)."""
    D = law.denominator
    S = len(support)
    tuples = np.array(list(itertools.product(range(S), repeat=m)), dtype=np.int64)
    pts = support[tuples]                                     # (T, m, d)
    T = len(tuples)
    total = np.zeros(T, dtype=object)
    total[:] = 0
    shape = table.shape

    def kern(g: int, delta: np.ndarray) -> np.ndarray:
        idx = delta + table.radius
        ok = np.all((idx >= 0) & (idx < shape[0]), axis=-1)
        idx = np.where(ok[:, None], idx, 0)
        vals = table.arrays[g][tuple(idx.T)]
        return np.where(ok, vals, 0)

    origin = np.zeros((T, 1, law.d), dtype=np.int64)
    for sigma in itertools.permutations(range(m)):
        seq = np.concatenate([origin, pts[:, list(sigma), :]], axis=1)
        deltas = np.diff(seq, axis=1)
        # state[s] = weighted sum over the first k gaps with total s, scale D**s
        state = [np.zeros(T, dtype=object) for _ in range(n + 1)]
        for s in range(n + 1):
            state[s][:] = 0
        state[0][:] = 1
        for k in range(m):
            min_gap = 0 if (k > 0 and sigma[k - 1] < sigma[k]) else 1
            kv = [kern(g, deltas[:, k, :]) for g in range(n + 1)]
            new = [np.zeros(T, dtype=object) for _ in range(n + 1)]
            for s in range(n + 1):
                new[s][:] = 0
            for s in range(n + 1):
                for g in range(min_gap, n + 1 - s):
                    new[s + g] = new[s + g] + state[s] * kv[g]
            state = new
        for s in range(n + 1):
            total = total + state[s] * D ** (n - s)
    return total


def moment_exact(law: StepLaw, n: int, m: int, p: int,
                 budget: int = DEFAULT_BUDGET, method: str = "auto") -> Fraction:
    """E I_n^m from the ordered-time permutation formula.

    ``method="generic"`` forces the per-tuple dynamic program for any m.
    """
    if m < 0 or n < 0 or p < 1:
        raise ConfigError("need m, n >= 0 and p >= 1")
    if m == 0:
        return Fraction(1)
    if n == 0:
        return Fraction(0)
    table = kernel_powers(law, n)
    if method == "auto" and m == 1:
        return expected_In(law, n, p, table=table)
    if method == "auto" and m == 2:
        B = table.arrays[0].size
        if B * B > budget:
            raise BudgetExceeded(f"{B * B} site pairs exceeds budget {budget}")
        return _second_moment(law, n, p, table)
    reach = _green_scaled(table, n)
    coords = table.coords()
    support = coords[reach.reshape(-1) != 0]
    cost = len(support) ** m * math.factorial(m) * m * (n + 1) ** 2
    if cost > budget:
        raise BudgetExceeded(f"estimated cost {cost} exceeds budget {budget}")
    phi = _phi_generic(law, n, m, table, support)
    D = law.denominator
    return Fraction(int(np.sum(phi**p)), D ** (n * p))


def moment_bruteforce(law: StepLaw, n: int, m: int, p: int,
                      budget: int = DEFAULT_BUDGET) -> Fraction:
    """E I_n^m by enumerating every joint path with its exact weight."""
    if m < 0 or n < 0 or p < 1:
        raise ConfigError("need m, n >= 0 and p >= 1")
    K = len(law.support)
    combos = K ** (p * n)
    if combos > budget:
        raise BudgetExceeded(f"{combos} joint paths exceeds budget {budget}")
    if m == 0:
        return Fraction(1)
    if n == 0:
        return Fraction(0)
    D = law.denominator
    pts = law.points
    w_step = [int(q * D) for q in law.probabilities]
    seqs = np.array(list(itertools.product(range(K), repeat=n)), dtype=np.int64)
    positions = np.cumsum(pts[seqs], axis=1)                  # (K^n, n, d)
    weights = np.array([math.prod(w_step[i] for i in s) for s in seqs], dtype=object)
    flat = positions.reshape(-1, law.d)
    sites, inv = np.unique(flat, axis=0, return_inverse=True)
    inv = inv.reshape(len(seqs), n)
    L = np.zeros((len(seqs), len(sites)), dtype=np.int64)
    np.add.at(L, (np.repeat(np.arange(len(seqs)), n), inv.ravel()), 1)
    letters = "abcdefghijklmnopqrstuvw"[:p]
    I = np.einsum(",".join(f"{c}z" for c in letters) + "->" + letters, *([L] * p))
    W = weights
    for _ in range(p - 1):
        W = np.multiply.outer(W, weights)
    total = int(np.sum(W * I.astype(object) ** m))
    return Fraction(total, D ** (n * p))


# --------------------------------------------------------------------------
# moment tables

@dataclass(frozen=True)
class MomentEntry:
    n: int
    m: int
    p: int
    law: str
    value: Fraction | float
    method: str                      # "exact-formula", "brute-force", "monte-carlo"
    stderr: float | None = None
    replicas: int | None = None

    @property
    def is_exact(self) -> bool:
        return self.method != "monte-carlo"

    def row(self) -> dict:
        return {
            "n": self.n, "m": self.m, "p": self.p, "law": self.law,
            "method": self.method,
            "value": str(self.value) if isinstance(self.value, Fraction) else self.value,
            "stderr": self.stderr,
        }


class MomentTable:
    """(n, m, p, law) -> entries from one or more methods, kept consistent."""

    columns = ("n", "m", "p", "law", "method", "value", "stderr")

    def __init__(self, entries: Iterable[MomentEntry] = ()):
        self._entries: dict[tuple, dict[str, MomentEntry]] = {}
        for e in entries:
            self.add(e)

    def add(self, entry: MomentEntry) -> None:
        key = (entry.n, entry.m, entry.p, entry.law)
        slot = self._entries.setdefault(key, {})
        for other in slot.values():
            _check_agreement(entry, other)
        slot[entry.method] = entry

    def get(self, n: int, m: int, p: int, law: str) -> MomentEntry:
        if m == 0:
            return MomentEntry(n, 0, p, law, Fraction(1), "exact-formula")
        slot = self._entries.get((n, m, p, law))
        if not slot:
            raise MissingMoment((n, m, p, law))
        for method in ("exact-formula", "brute-force", "monte-carlo"):
            if method in slot:
                return slot[method]
        return next(iter(slot.values()))  # pragma: no cover

    def __contains__(self, key) -> bool:
        return key in self._entries

    def __iter__(self):
        for key in sorted(self._entries):
            yield from self._entries[key].values()

    def __len__(self):
        return sum(len(v) for v in self._entries.values())

    def rows(self) -> list[dict]:
        return [e.row() for e in self]


def _check_agreement(a: MomentEntry, b: MomentEntry) -> None:
    if a.is_exact and b.is_exact:
        if Fraction(a.value) != Fraction(b.value):
            raise InconsistentMoment(f"{a.method} {a.value} != {b.method} {b.value}")
        return
    err = sum(e.stderr or 0.0 for e in (a, b) if not e.is_exact)
    if abs(float(a.value) - float(b.value)) > 4 * err:
        raise InconsistentMoment(
            f"{a.method} {float(a.value)} vs {b.method} {float(b.value)} beyond 4 stderr")


def exact_moment_table(law: StepLaw, ns: Iterable[int], ms: Iterable[int], p: int,
                       method: str = "exact-formula") -> MomentTable:
    fn = moment_exact if method == "exact-formula" else moment_bruteforce
    table = MomentTable()
    for n in ns:
        for m in ms:
            table.add(MomentEntry(n, m, p, law.name, fn(law, n, m, p), method))
    return table


# --------------------------------------------------------------------------
# block inequality and its exponential-series form

@dataclass(frozen=True)
class InequalityReport:
    lhs: float
    rhs: float
    holds: bool
    slack: float = 0.0
    exact_inputs: bool = True


MomentSource = Callable[[int, int], MomentEntry] | MomentTable | Mapping


def _resolver(moments, p: int, law: str | None):
    if isinstance(moments, MomentTable):
        def get(n, k):
            if k == 0:
                return MomentEntry(n, 0, p, law or "", Fraction(1), "exact-formula")
            if law is not None:
                return moments.get(n, k, p, law)
            for key in sorted(moments._entries):
                if key[:3] == (n, k, p):
                    return moments.get(*key)
            raise MissingMoment((n, k, p))
        return get
    if callable(moments):
        return moments

    def get(n, k):
        if k == 0:
            return MomentEntry(n, 0, p, law or "", Fraction(1), "exact-formula")
        try:
            v = moments[(n, k)]
        except KeyError:
            raise MissingMoment((n, k)) from None
        if isinstance(v, MomentEntry):
            return v
        return MomentEntry(n, k, p, law or "", v, "exact-formula"
                           if isinstance(v, (int, Fraction)) else "monte-carlo")
    return get


def _compositions(m: int, a: int):
    if a == 1:
        yield (m,)
        return
    for k in range(m + 1):
        for rest in _compositions(m - k, a - 1):
            yield (k,) + rest


def _root(entry: MomentEntry, p: int):
    """(value)^(1/p) at 50 digits, and a first-order bound on its error."""
    v = entry.value
    mv = mpmath.mpf(v.numerator) / v.denominator if isinstance(v, Fraction) else mpmath.mpf(v)
    r = mpmath.root(mv, p) if mv > 0 else mpmath.mpf(0)
    if entry.is_exact or not entry.stderr:
        return r, 0.0
    # d(v^(1/p)) = v^(1/p - 1) / p dv ; use v + stderr when v is tiny
    base = max(float(mv), float(entry.stderr))
    return r, float(entry.stderr) * base ** (1 / p - 1) / p


def check_block_moment_inequality(moments: MomentSource, blocks: Sequence[int], m: int, p: int,
                                  law: str | None = None) -> InequalityReport:
    """(E I_{n_1+..+n_a}^m)^{1/p} <= sum over k_1+..+k_a = m of the multinomial
    coefficient times prod_i (E I_{n_i}^{k_i})^{1/p}.

    Exact inputs are compared at 50 significant digits; Monte Carlo inputs
    add 4 propagated standard errors of slack.
    """
    if not blocks or any(b < 1 for b in blocks):
        raise ConfigError("blocks must be positive integers")
    get = _resolver(moments, p, law)
    with mpmath.workdps(50):
        lhs_entry = get(sum(blocks), m)
        lhs, lhs_err = _root(lhs_entry, p)
        rhs = mpmath.mpf(0)
        rhs_err = 0.0
        exact = lhs_entry.is_exact
        for ks in _compositions(m, len(blocks)):
            coef = math.factorial(m)
            for k in ks:
                coef //= math.factorial(k)
            term = mpmath.mpf(coef)
            rel = 0.0
            for n_i, k_i in zip(blocks, ks):
                e = get(n_i, k_i)
                exact = exact and e.is_exact
                r, err = _root(e, p)
                term *= r
                if err:
                    rel += err / float(r) if r > 0 else math.inf
            rhs += term
            rhs_err += float(term) * rel
        slack = 4 * (lhs_err + rhs_err)
        holds = bool(lhs <= rhs + slack)
        return InequalityReport(float(lhs), float(rhs), holds, slack, exact)


def check_exponential_series_inequality(moments: MomentSource, blocks: Sequence[int],
                                        lam: float, truncation: int, p: int,
                                        law: str | None = None) -> InequalityReport:
    """sum_m lam^m/m! (E I_{n_1+..+n_a}^m)^{1/p} <= prod_i sum_m lam^m/m! (E I_{n_i}^m)^{1/p},
    both series truncated at m = ``truncation``.

    The truncated comparison is still implied by the termwise block
    inequality because every term is non-negative and the truncated product
    contains all compositions of total degree <= truncation.
    """
    if lam < 0:
        raise ConfigError("lambda must be >= 0")
    get = _resolver(moments, p, law)
    with mpmath.workdps(50):
        lam_ = mpmath.mpf(lam)
        lhs = mpmath.mpf(0)
        slack = 0.0
        exact = True
        for m in range(truncation + 1):
            e = get(sum(blocks), m)
            r, err = _root(e, p)
            exact = exact and e.is_exact
            c = lam_**m / mpmath.factorial(m)
            lhs += c * r
            slack += float(c) * err
        rhs = mpmath.mpf(1)
        for n_i in blocks:
            s = mpmath.mpf(0)
            for m in range(truncation + 1):
                e = get(n_i, m)
                r, err = _root(e, p)
                exact = exact and e.is_exact
                c = lam_**m / mpmath.factorial(m)
                s += c * r
                slack += float(c) * err
            rhs *= s
        return InequalityReport(float(lhs), float(rhs), bool(lhs <= rhs + 4 * slack),
                                4 * slack, exact)
