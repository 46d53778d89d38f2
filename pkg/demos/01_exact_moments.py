"""Exact moments of the intersection local time for two planar walks.

For tiny horizons everything can be enumerated, so we compare the
ordered-time formula with brute-force path enumeration, then look at how
the second moment splits over blocks.
"""
from iltlab.exact_moments import (
    check_block_moment_inequality,
    exact_moment_table,
    expected_In,
    moment_bruteforce,
    moment_exact,
)
from iltlab.walk_engine import simple_random_walk

law = simple_random_walk(2)

print("E I_n for two simple random walks in Z^2")
for n in range(1, 9):
    v = expected_In(law, n, 2)
    print(f"  n={n}:  {str(v):>24}  = {float(v):.6f}")

print("\nformula vs enumeration of all 4^(2n) joint paths")
for n in (1, 2, 3):
    for m in (1, 2, 3):
        a = moment_exact(law, n, m, 2)
        b = moment_bruteforce(law, n, m, 2)
        print(f"  n={n} m={m}:  {str(a):>16}  {'ok' if a == b else 'MISMATCH'}")

# Splitting [0, n] into blocks: the p-th root of the moment is subadditive
# in the multinomial sense.
table = exact_moment_table(law, range(1, 9), [1, 2], 2)
print("\nblock inequality, m = 2")
for blocks in ([4], [2, 2], [1, 3], [4, 4], [2, 3, 3]):
    rep = check_block_moment_inequality(table, blocks, 2, 2)
    print(f"  blocks {blocks!s:>10}:  lhs {rep.lhs:.6f}  rhs {rep.rhs:.6f}  holds={rep.holds}")
