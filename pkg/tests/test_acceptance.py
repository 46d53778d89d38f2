"""Acceptance suite: one test per criterion, each printing a pass/fail line."""
import itertools
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from iltlab.analytic_bounds import (
    gamma_lower_bound,
    kappa_upper_bound,
    ordered_simplex_identity_check,
    random_exp_polynomial,
    resolvent_p_integral,
)
from iltlab.deviation_lab import (
    ExperimentConfig,
    merge_batches,
    merge_lil_traces,
    moment_batch,
    moment_rows,
    run_lil_trace,
    run_mc_moments,
    run_tail_curve,
    scaling_check,
    tail_batch,
    to_csv,
)
from iltlab.exact_moments import (
    MomentTable,
    check_block_moment_inequality,
    exact_moment_table,
    expected_In,
    moment_bruteforce,
    moment_exact,
)
from iltlab.ground_state import (
    cached_ground_state,
    gn_violation_search,
    kappa_from_ground_state,
    random_gaussian_mixture,
    rate_constants,
)
from iltlab.walk_engine import simple_random_walk

SRW2 = simple_random_walk(2)


def criterion(label):
    def mark(fn):
        fn.criterion = label
        return fn
    return mark


def kappa(d, p):
    return kappa_from_ground_state(cached_ground_state(d, p))


@criterion("1 exact moments")
def test_exact_moments(detail):
    t0 = time.perf_counter()
    assert expected_In(SRW2, 1, 2) == Fraction(1, 4)
    assert expected_In(SRW2, 2, 2) == Fraction(25, 64)
    assert moment_exact(SRW2, 1, 2, 2) == Fraction(1, 4)
    for n in (1, 2, 3):
        for m in (1, 2):
            assert moment_exact(SRW2, n, m, 2) == moment_bruteforce(SRW2, n, m, 2)
    elapsed = time.perf_counter() - t0
    detail(f"E I_1 = 1/4, E I_2 = 25/64, E I_1^2 = 1/4, brute force agrees; {elapsed:.2f}s")
    assert elapsed < 5


@criterion("2 block moment inequality")
def test_block_inequality_suite(detail):
    t0 = time.perf_counter()
    table = exact_moment_table(SRW2, range(1, 13), [1, 2], 2)
    checked = 0
    worst = math.inf
    for a in (1, 2, 3):
        for blocks in itertools.product(range(1, 5), repeat=a):
            for m in (1, 2):
                rep = check_block_moment_inequality(table, blocks, m, 2)
                assert rep.exact_inputs
                assert rep.holds, (blocks, m, rep)
                if a == 1:
                    assert rep.lhs == rep.rhs
                else:
                    worst = min(worst, rep.rhs - rep.lhs)
                checked += 1
    elapsed = time.perf_counter() - t0
    detail(f"{checked} configurations hold, single block exact equality, "
           f"min slack {worst:.3g}; {elapsed:.1f}s")
    assert elapsed < 60


@criterion("3 kappa(2,2)")
def test_kappa_2_2(detail):
    gs = cached_ground_state(2, 2)
    k = kappa_from_ground_state(gs)
    ref = (math.pi * 1.86225) ** -0.25
    detail(f"kappa = {k:.7f} (ref {ref:.5f}), ||f0||^2 = {gs.mass:.5f} (ref 11.7008)")
    assert abs(k - 0.6430) < 1e-3
    assert abs(gs.mass - 11.7008) / 11.7008 < 5e-3


@criterion("4 kappa(2,3)")
def test_kappa_2_3(detail):
    k = kappa(2, 3)
    lo, hi = 0.6012, 0.6014
    dist = max(lo - k, 0.0, k - hi)
    conj = math.pi ** (-4 / 9)
    detail(f"kappa = {k:.7f}, distance to [{lo}, {hi}] = {dist:.2e}, "
           f"|kappa - pi^(-4/9)| = {abs(k - conj):.2e}")
    assert dist < 2e-3


@criterion("5 bound chain")
def test_bound_chain(detail):
    t0 = time.perf_counter()
    r22 = resolvent_p_integral(2, 2).value
    r32 = resolvent_p_integral(3, 2).value
    assert abs(r22 - 1 / (2 * math.pi)) < 1e-8
    assert abs(r32 - math.sqrt(math.pi) * (2 * math.pi) ** -1.5) < 1e-8
    assert abs(kappa_upper_bound(2, 2) - math.pi**-0.25) < 1e-10
    assert abs(kappa_upper_bound(2, 2) - 0.75112) < 1e-5
    assert abs(kappa_upper_bound(3, 2) - 0.5916) < 1e-4
    parts = []
    for d, p in [(2, 2), (3, 2), (2, 3), (2, 4)]:
        k, b = kappa(d, p), kappa_upper_bound(d, p)
        assert k < b
        parts.append(f"({d},{p}) {k:.4f}<{b:.4f}")
    g_low = gamma_lower_bound(2, 2)
    g_alpha = rate_constants(2, 2, SRW2.gamma).gamma_alpha
    assert abs(g_low - math.pi) < 1e-10
    assert g_low <= g_alpha and abs(g_alpha - 5.850) < 5e-3
    elapsed = time.perf_counter() - t0
    detail("; ".join(parts) + f"; pi <= gamma_alpha = {g_alpha:.4f}; {elapsed:.1f}s")
    assert elapsed < 30


@criterion("6 ordered-simplex identity")
def test_identity(detail):
    t = lambda s: np.asarray(s, float)
    one = lambda s: np.ones_like(np.asarray(s, float))
    ex = lambda s: np.exp(-np.asarray(s, float))
    gaps = [ordered_simplex_identity_check(phis).gap
            for phis in ([t], [one, one], [ex, ex])]
    rng = np.random.default_rng(2024)
    for _ in range(10):
        m = int(rng.integers(1, 4))
        gaps.append(ordered_simplex_identity_check(
            [random_exp_polynomial(rng)[0] for _ in range(m)]).gap)
    detail(f"13 cases, max gap {max(gaps):.2e}")
    assert max(gaps) < 1e-6


@criterion("7 Monte Carlo consistency")
def test_mc_consistency(detail):
    t0 = time.perf_counter()
    msgs = []
    for n in (8, 64):
        cfg = ExperimentConfig(n=n, replicas=100_000, seed=20240)
        e = run_mc_moments(cfg, [1]).get(n, 1, 2, "srw2")
        exact = float(expected_In(SRW2, n, 2))
        z = (e.value - exact) / e.stderr
        msgs.append(f"n={n}: {e.value:.4f} vs {exact:.4f} ({z:+.2f} se)")
        assert abs(z) < 3
    sc = scaling_check(ExperimentConfig(n=10_000, replicas=6000, seed=77))
    msgs.append(f"I_n/n {sc['mean_small']:.4f} vs {sc['mean_large']:.4f} "
                f"({100 * sc['relative_difference']:.2f}%)")
    elapsed = time.perf_counter() - t0
    detail("; ".join(msgs) + f"; {elapsed:.0f}s")
    assert sc["relative_difference"] < 0.05
    assert elapsed < 300


@criterion("8 GN extremality")
def test_gn_search(detail):
    msgs = []
    for d, p in [(2, 2), (2, 3)]:
        k = kappa(d, p)
        res = gn_violation_search(k, d, p, count=1000, seed=d * 10 + p)
        msgs.append(f"({d},{p}) max ratio {res.max_ratio:.5f} / kappa {k:.5f}")
        assert res.max_ratio <= k * 1.001 and not res.exceeded
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(50):
        g = random_gaussian_mixture(rng, 2)
        for lam in (0.1, 0.7, 3.0, 25.0):
            for p in (2, 3):
                r0 = g.gn_ratio(p)
                worst = max(worst, abs(g.scaled(lam).gn_ratio(p) - r0) / r0)
    detail("; ".join(msgs) + f"; scale drift {worst:.1e}")
    assert worst < 1e-10


NON_REPRODUCIBLE = (
    "The exponential tail asymptotics (large and moderate deviations) and the "
    "almost-sure LIL limits are NOT reproducible at desk scale; tail curves and "
    "LIL traces are reported as diagnostics against the theoretical constants."
)


@criterion("9 desk-scale substitutes")
def test_desk_scale_substitutes(detail):
    t0 = time.perf_counter()
    lambdas = (0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.6)
    cfg = ExperimentConfig(n=10_000, replicas=4000, seed=9, lambdas=lambdas)
    tail = run_tail_curve(cfg)
    p_hat = tail.column("p_hat")
    assert all(a > b for a, b in zip(p_hat, p_hat[1:])), p_hat
    theory = tail.column("theory")
    assert all(abs(th + 2.925 * lam) < 3e-3 * lam for th, lam in zip(theory, lambdas))

    lil = run_lil_trace(ExperimentConfig(n=10**6, replicas=20, seed=11))
    ref = lil.meta["reference"]
    final = [r["running_max"] for r in lil.rows if r["n_k"] == 10**6]
    assert len(final) == 20
    assert abs(ref - 0.3419) < 5e-4
    assert all(r["reference"] == ref for r in lil.rows)
    assert all(math.isfinite(x) and 0 < x < 10 * ref for x in final)
    elapsed = time.perf_counter() - t0
    print(NON_REPRODUCIBLE)
    detail(f"p_hat {p_hat[0]:.3f} -> {p_hat[-1]:.3f} strictly decreasing, theory -2.925*lambda; "
           f"LIL max {max(final):.3f} < {10 * ref:.3f}, reference {ref:.4f}; {elapsed:.0f}s")
    assert elapsed < 900


@criterion("10 determinism and merging")
def test_determinism(detail):
    cfg = ExperimentConfig(n=500, replicas=240, seed=31, lambdas=(0.05, 0.1, 0.2))
    tail_a = to_csv(run_tail_curve(cfg, 2.925))
    tail_b = to_csv(run_tail_curve(cfg, 2.925))
    mom_a = to_csv(moment_rows(run_mc_moments(cfg, [1, 2])))
    mom_b = to_csv(moment_rows(run_mc_moments(cfg, [1, 2])))
    lil_cfg = ExperimentConfig(n=5000, replicas=4, seed=31)
    lil_a = to_csv(run_lil_trace(lil_cfg, reference=0.3419))
    lil_b = to_csv(run_lil_trace(lil_cfg, reference=0.3419))
    assert tail_a == tail_b and mom_a == mom_b and lil_a == lil_b

    ranges = [range(0, 70), range(70, 100), range(100, 240)]
    rng = np.random.default_rng(0)
    for _ in range(3):
        order = rng.permutation(3)
        tb = merge_batches([tail_batch(cfg, ranges[i]) for i in order])
        assert to_csv(tb.table(2.925)) == tail_a
        mb = merge_batches([moment_batch(cfg, [1, 2], ranges[i]) for i in order])
        assert to_csv(moment_rows(MomentTable(mb.entries()))) == mom_a
    parts = [run_lil_trace(lil_cfg, [r], reference=0.3419) for r in (3, 1, 0, 2)]
    assert to_csv(merge_lil_traces(parts)) == lil_a
    detail("reruns byte-identical; permuted batch merges identical (tail, moments, LIL)")
