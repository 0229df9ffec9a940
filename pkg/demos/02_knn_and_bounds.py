"""
Nearest neighbors, distance bounds, and range-optimality
========================================================

Best-first kNN over the tree, the effect of an upper distance bound,
and how close the search comes to the cheapest possible range query.
"""

import math

from cmtree import (
    BuildConfig,
    QueryStats,
    brute_force_knn,
    build_cmt,
    euclidean_distance,
    gen_uniform_points,
    knn_query,
    range_optimality_ratio,
)

points = gen_uniform_points(50_000, 3, seed=2)
tree = build_cmt(points, euclidean_distance,
                 BuildConfig(cascade_limit=math.inf, seed=2))
q = (0.25, 0.5, 0.75)

# knn_query expands subtrees in order of their pruning lower bound and
# stops as soon as no pending subtree can beat the k-th best distance.
for k in (1, 10, 100):
    stats = QueryStats()
    res = knn_query(tree, q, k, stats=stats)
    truth = brute_force_knn(points, euclidean_distance, q, k)
    assert res.distances() == truth.distances()
    print(f"k={k:3d}: {stats.distance_calls:5d} distance calls, "
          f"k-th distance {res.distances()[-1]:.4f}")

# A range-bounded search K(b, k) ignores anything farther than b.  When
# the bound is tight it prunes harder and may return fewer than k hits.
print()
for b in (math.inf, 0.1, 0.05, 0.02):
    stats = QueryStats()
    res = knn_query(tree, q, 10, r_bound=b, stats=stats)
    print(f"k=10, bound {b:6}: {stats.distance_calls:5d} distance calls, "
          f"{len(res)} results")

# Range-optimality: the ratio of distance calls between a range query
# issued with the minimal radius that encloses the k nearest neighbors
# and the kNN search itself.  A ratio near 1 means the kNN search costs
# no more than the range query it implicitly answers.
print()
ratios = [range_optimality_ratio(tree, p, 10) for p in points[:50]]
print(f"range-optimality over 50 queries at k=10: "
      f"mean {sum(ratios) / len(ratios):.3f}, min {min(ratios):.3f}")
