"""The ground state behind the Gagliardo-Nirenberg constant.

Solve the radial equation by shooting, cross-check with a fixed-point
solver, and turn the profile into kappa and the deviation constants.
"""
import math

from iltlab.analytic_bounds import kappa_upper_bound
from iltlab.ground_state import (
    fixed_point_ground_state,
    gn_violation_search,
    kappa_from_ground_state,
    rate_constants,
    solve_ground_state,
)
from iltlab.walk_engine import simple_random_walk

for d, p in [(2, 2), (2, 3), (3, 2), (2, 4)]:
    gs = solve_ground_state(d, p)
    k = kappa_from_ground_state(gs)
    fp = fixed_point_ground_state(d, p)
    print(f"d={d} p={p}: f(0)={gs.amplitude:.6f}  ||f||^2={gs.mass:.8f} "
          f"(fixed point {fp['mass']:.8f})  kappa={k:.7f}  bound={kappa_upper_bound(d, p):.4f}")
    print(f"          identity gap {gs.identity_gap:.1e}, grid residual {gs.residual:.1e}")

k23 = kappa_from_ground_state(solve_ground_state(2, 3))
print(f"\nkappa(2,3) - pi^(-4/9) = {k23 - math.pi ** (-4 / 9):+.2e}")

rc = rate_constants(2, 2, simple_random_walk(2).gamma)
print("\nconstants for the planar simple random walk, p = 2")
for name, v in rc.as_dict().items():
    print(f"  {name:>15} = {v}")

res = gn_violation_search(rc.kappa, 2, 2, count=300, seed=0)
print(f"\nbest of 300 random trial functions: {res.max_ratio:.5f} (kappa {rc.kappa:.5f})")
