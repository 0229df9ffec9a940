"""
What cascading buys: one tree, three pruning depths
===================================================

The same tree answers the same queries with ancestor pruning switched
off (cascade limit 0, the linear-space baseline), limited to the direct
parent (limit 1), or using every ancestor on the path (unbounded).
Deeper cascading never issues more distance calls, only fewer.
"""

import math

from cmtree import (
    BuildConfig,
    QueryStats,
    build_cmt,
    collect_range_query,
    euclidean_distance,
    gen_uniform_points,
    sample_queries,
    DatasetSpec,
)

n = 100_000
spec = DatasetSpec("uniform_points", n=n, dim=3, seed=3)
points = gen_uniform_points(n, 3, seed=3)

# Build once at the deepest setting; the shallower variants are views
# that truncate the stored intervals, so no rebuild is needed.
full = build_cmt(points, euclidean_distance,
                 BuildConfig(cascade_limit=math.inf, seed=3))
trees = {"baseline (0)": full.with_cascade_limit(0),
         "parent only (1)": full.with_cascade_limit(1),
         "unbounded": full}
print(f"{n} points, height {full.height}, "
      f"{full.build_distance_calls} build distance calls\n")

queries = sample_queries(spec, 50, seed=3)

print(f"{'radius':>8}  " + "".join(f"{name:>18}" for name in trees))
for r in (0.02, 0.05, 0.1, 0.2, 0.4):
    cells = []
    for tree in trees.values():
        total = 0
        for q in queries:
            stats = QueryStats()
            collect_range_query(tree, q, r, stats)
            total += stats.distance_calls
        cells.append(total / len(queries))
    print(f"{r:8.2f}  " + "".join(f"{c:18.1f}" for c in cells))

print("\nmean distance calls per range query; identical results in "
      "every column")
