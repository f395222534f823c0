"""How often each error family shows up in cold-start strategies.

k is 1 or 2 with equal odds, then a uniform k-subset of the taxonomy is drawn.
With four families that is 10 possible outcomes; enumerating them gives each
family a 3/8 inclusion probability, which the seeded sample should track.

    python3 walkthroughs/strategy_sampling.py [n]
"""

import itertools
import random
import sys
from collections import Counter
from fractions import Fraction

from capcot.agents import FAMILIES, sample_error_strategy

n = int(sys.argv[1]) if len(sys.argv) > 1 else 10_000

exact = Counter()
for k in (1, 2):
    subsets = list(itertools.combinations(FAMILIES, k))
    for s in subsets:
        for f in s:
            exact[f] += Fraction(1, 2) / len(subsets)

seen = Counter()
sizes = Counter()
for i in range(n):
    s = sample_error_strategy(FAMILIES, random.Random(i))
    seen.update(s.families)
    sizes[len(s.families)] += 1

print(f"{'family':<10} {'exact':>8} {'sampled':>8}")
for f in FAMILIES:
    print(f"{f:<10} {float(exact[f]):>8.4f} {seen[f] / n:>8.4f}")
print("k counts:", dict(sorted(sizes.items())))
print("single-family taxonomy:", {sample_error_strategy(("fuzzy",), random.Random(i)).name for i in range(50)})
