"""
Range queries over a cascaded metric tree
=========================================

Build a tree over random 3-d points, then answer range queries three
ways: object-by-object, with subtree collection, and as a pure count.
Every answer is checked against a brute-force scan.
"""

import math

from cmtree import (
    BuildConfig,
    QueryStats,
    basic_range_query,
    brute_force_range,
    build_cmt,
    collect_range_query,
    counting_query,
    euclidean_distance,
    gen_uniform_points,
)

points = gen_uniform_points(20_000, 3, seed=1)
tree = build_cmt(points, euclidean_distance,
                 BuildConfig(cascade_limit=math.inf, seed=1))
print(f"built tree over {len(points)} points, height {tree.height}, "
      f"{tree.build_distance_calls} distance calls")

q = (0.5, 0.5, 0.5)
r = 0.1

# The reference answer: compare against every object.
truth = brute_force_range(points, euclidean_distance, q, r)
print(f"\nquery ball around {q} with radius {r}: {len(truth)} points")

# basic_range_query walks the tree and calls the metric once per
# surviving node; pruning bounds do the rest.
stats = QueryStats()
res = basic_range_query(tree, q, r, stats)
assert res.index_set() == truth.index_set()
print(f"basic range:   {stats.distance_calls:6d} distance calls "
      f"({stats.nodes_visited} nodes visited)")

# collect_range_query adds whole subtrees once an upper bound proves
# they sit inside the ball, so large results get much cheaper.  The
# collected entries carry distance upper bounds instead of exact
# distances; resolve_exact() fills in the real ones if needed.
stats = QueryStats()
res = collect_range_query(tree, q, r, stats)
assert res.index_set() == truth.index_set()
print(f"collect range: {stats.distance_calls:6d} distance calls "
      f"({stats.subtrees_collected} subtrees collected whole)")

# counting_query reports the size alone; collected subtrees contribute
# their node counts without touching a single object.
stats = QueryStats()
count = counting_query(tree, q, r, stats)
assert count == len(truth)
print(f"counting:      {stats.distance_calls:6d} distance calls")

# With a radius that swallows the whole dataset, the root's upper bound
# settles everything after the very first distance computation.
stats = QueryStats()
count = counting_query(tree, q, 4.0, stats)
print(f"\ncovering radius 4.0: count={count} with "
      f"{stats.distance_calls} distance call")
