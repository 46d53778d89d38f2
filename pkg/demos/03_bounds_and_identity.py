"""Resolvent integrals and the bounds they give on kappa and gamma."""
import math

import numpy as np

from iltlab.analytic_bounds import (
    gamma_lower_bound,
    kappa_upper_bound,
    ordered_simplex_identity_check,
    resolvent_p_integral,
)
from iltlab.ground_state import cached_ground_state, kappa_from_ground_state, rate_constants

print("resolvent integral R(d, p)")
for d, p in [(2, 2), (3, 2), (2, 3), (2, 4), (2, 5)]:
    r = resolvent_p_integral(d, p)
    print(f"  d={d} p={p}:  {r.value:.15f}  (+- {r.error:.1e})")
print(f"  closed forms: 1/(2 pi) = {1 / (2 * math.pi):.15f}, "
      f"sqrt(pi)(2 pi)^(-3/2) = {math.sqrt(math.pi) * (2 * math.pi) ** -1.5:.15f}")

print("\nkappa vs its upper bound, gamma_alpha vs its lower bound")
for d, p in [(2, 2), (3, 2), (2, 3), (2, 4)]:
    k = kappa_from_ground_state(cached_ground_state(d, p))
    g = rate_constants(d, p, kappa=k).gamma_alpha
    print(f"  d={d} p={p}:  kappa {k:.5f} < {kappa_upper_bound(d, p):.5f}   "
          f"gamma {g:.4f} >= {gamma_lower_bound(d, p):.4f}")

print("\nordered-simplex identity: direct convolution vs product of transforms")
t = lambda s: np.asarray(s, float)
e = lambda s: np.exp(-np.asarray(s, float))
for name, phis in [("phi(t)=t", [t]), ("phi=e^-t, m=2", [e, e]), ("t, e^-t, t", [t, e, t])]:
    rep = ordered_simplex_identity_check(phis)
    print(f"  {name:>14}:  lhs {rep.lhs:.12f}  rhs {rep.rhs:.12f}  gap {rep.gap:.1e}")
