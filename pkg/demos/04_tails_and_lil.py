"""Monte Carlo tails and LIL traces for two planar walks.

The deviation and LIL limits live far beyond reachable n, so these runs
are diagnostics: the tail curve sits in the bulk of the distribution and
the LIL statistic is only checked to stay of the right order.
"""
import math

from iltlab.deviation_lab import (
    ExperimentConfig,
    run_lil_trace,
    run_mc_moments,
    run_tail_curve,
    scaling_check,
)
from iltlab.exact_moments import expected_In
from iltlab.walk_engine import simple_random_walk

law = simple_random_walk(2)
cfg = ExperimentConfig(n=64, replicas=20000, seed=1)
e = run_mc_moments(cfg, [1]).get(64, 1, 2, "srw2")
print(f"E I_64: MC {e.value:.3f} +- {e.stderr:.3f}, exact {float(expected_In(law, 64, 2)):.3f}")

sc = scaling_check(ExperimentConfig(n=4000, replicas=1000, seed=2))
print(f"I_n/n at n=4000: {sc['mean_small']:.4f}, at 16000: {sc['mean_large']:.4f} "
      f"(Brownian limit 2 log 2 / pi = {2 * math.log(2) / math.pi:.4f})")

tail = run_tail_curve(ExperimentConfig(n=4000, replicas=2000, seed=3,
                                       lambdas=(0.05, 0.1, 0.2, 0.3, 0.5)))
print("\nlambda   p_hat    log(p_hat)/b_n   theory")
for r in tail.rows:
    print(f"{r['lambda']:6.2f}  {r['p_hat']:7.4f}  {r['log_p_hat_over_b_n']:14.4f}  {r['theory']:8.4f}")

lil = run_lil_trace(ExperimentConfig(n=200_000, replicas=5, seed=4))
print(f"\nLIL statistic, reference limsup {lil.meta['reference']:.4f}")
for r in lil.rows:
    if r["n_k"] == lil.meta["schedule"][-1]:
        print(f"  replica {r['replica']}: I_n={r['I_n']}, statistic {r['statistic']:.4f}, "
              f"running max {r['running_max']:.4f}")
