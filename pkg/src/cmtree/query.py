"""Query kernels and engines for cascaded metric trees.

All engines take the tree read-only; per-query state (ancestor distance stack,
result set, priority queue, statistics) is local to one call, so any number of
queries may run concurrently on one tree.

Distances counted in QueryStats.distance_calls are exactly the metric
evaluations performed by the traversal; objects appended by whole-subtree
collection carry an upper *bound* as their distance marker instead of an exact
distance (ResultSet.resolve_exact recomputes them outside the search, counted
separately).
"""
from __future__ import annotations

import heapq
import math
import operator
from typing import Any

from .metrics import Metric
from .tree import CmtNode, CmtTree, child_sizes


class QueryStats:
    """Per-query instrumentation; distance_calls is the cost measure that matters."""

    __slots__ = ("distance_calls", "nodes_visited", "subtrees_collected", "objects_collected")

    def __init__(self):
        self.distance_calls = 0
        self.nodes_visited = 0
        self.subtrees_collected = 0
        self.objects_collected = 0

    def merge(self, other: "QueryStats") -> None:
        self.distance_calls += other.distance_calls
        self.nodes_visited += other.nodes_visited
        self.subtrees_collected += other.subtrees_collected
        self.objects_collected += other.objects_collected

    def __repr__(self) -> str:
        return (
            f"QueryStats(distance_calls={self.distance_calls}, nodes_visited={self.nodes_visited}, "
            f"subtrees_collected={self.subtrees_collected}, objects_collected={self.objects_collected})"
        )


class QueryState:
    """Traversal state: query object, radius, limit, and ancestor-distance stack.

    dist[j] holds the distance from q to the j-th node object on the current
    root-to-parent path; dist[-l] is therefore the l-th ancestor of the current
    node.
    """

    __slots__ = ("q", "r", "k", "depth", "dist")

    def __init__(self, q, r: float = math.inf, k: float = math.inf):
        if r < 0:
            raise ValueError(f"radius must be >= 0, got {r}")
        if k != math.inf:
            try:
                k = operator.index(k)
            except TypeError:
                raise ValueError(f"k must be a positive integer or math.inf, got {k!r}") from None
            if k < 1:
                raise ValueError(f"k must be >= 1, got {k}")
        self.q = q
        self.r = r
        self.k = k
        self.depth = 0
        self.dist: list[float] = []


class ResultSet:
    """Entries of (object index, distance, exact?); collected subtrees carry bounds."""

    __slots__ = ("entries", "stats")

    def __init__(self):
        self.entries: list[tuple[int, float, bool]] = []
        self.stats: QueryStats | None = None

    def add_exact(self, index: int, distance: float) -> None:
        self.entries.append((index, distance, True))

    def add_bound(self, index: int, bound: float) -> None:
        self.entries.append((index, bound, False))

    def indices(self) -> list[int]:
        return [e[0] for e in self.entries]

    def index_set(self) -> set[int]:
        return {e[0] for e in self.entries}

    def distances(self) -> list[float]:
        return [e[1] for e in self.entries]

    def resolve_exact(self, objects, metric: Metric, stats: QueryStats | None = None, q=None) -> int:
        """Replace bound markers with exact distances; returns the extra call count."""
        extra = 0
        for i, (idx, _, exact) in enumerate(self.entries):
            if not exact:
                d = metric(q, objects[idx])
                extra += 1
                self.entries[i] = (idx, d, True)
        if stats is not None:
            stats.distance_calls += extra
        return extra

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def interval_pruning_distance(d_pq: float, near: float, far: float) -> float:
    """How far d_pq lies outside [near, far]; 0 inside, +inf for the empty sentinel."""
    if d_pq < near:
        return near - d_pq
    if d_pq > far:
        return d_pq - far
    return 0.0


def _chain(dist) -> list[float]:
    return dist.dist if isinstance(dist, QueryState) else dist


def pruning_distance(d_pq: float, node: CmtNode, level: int) -> float:
    """Lower-bound slack of the node's level interval against a known distance."""
    t = node.tree
    base = t.offs[node.position]
    return interval_pruning_distance(d_pq, t.near[base + level], t.far[base + level])


def max_pruning_distance(dist, node: CmtNode) -> float:
    """Max pruning distance over the node's stored ancestral levels (0 at the root).

    dist is the ancestor-distance stack (or a QueryState): dist[-l] is the
    distance from q to the node's l-th ancestor object. The result lower-bounds
    d(q, x) for every object x in the node's subtree.
    """
    chain = _chain(dist)
    t = node.tree
    base = t.offs[node.position]
    levels = t.offs[node.position + 1] - base - 1
    best = 0.0
    for l in range(1, levels + 1):
        pd = interval_pruning_distance(chain[-l], t.near[base + l], t.far[base + l])
        if pd > best:
            best = pd
    return best


def collection_distance(d_pq: float, node: CmtNode) -> float:
    """Upper bound on d(q, x) for all x in the subtree, from the node's own distance.

    For leaves the empty level-0 far is treated as 0, so the bound is d_pq itself.
    """
    t = node.tree
    far0 = t.far[t.offs[node.position]]
    if far0 == -math.inf:
        return d_pq
    return d_pq + far0


def min_collection_distance(dist, node: CmtNode, d_pq_known: float | None = None) -> float:
    """Min of ancestral collection distances (dist[-l] + far[l]); +inf with no ancestors.

    If the node's own distance is already known it may be folded in via
    d_pq_known. The result upper-bounds d(q, x) for every subtree object x.
    """
    chain = _chain(dist)
    t = node.tree
    base = t.offs[node.position]
    levels = t.offs[node.position + 1] - base - 1
    best = math.inf
    for l in range(1, levels + 1):
        cd = chain[-l] + t.far[base + l]
        if cd < best:
            best = cd
    if d_pq_known is not None:
        cd0 = collection_distance(d_pq_known, node)
        if cd0 < best:
            best = cd0
    return best


def basic_range_query(tree: CmtTree, q, r: float, stats: QueryStats | None = None,
                      _visit_right_first: bool = False) -> ResultSet:
    """All objects within distance r of q, each with its exact distance."""
    state = QueryState(q, r=r)
    if stats is None:
        stats = QueryStats()
    out = ResultSet()
    out.stats = stats
    if tree.size == 0:
        return out
    metric, objs = tree.metric, tree.objects
    perm, offs, near, far = tree.perm, tree.offs, tree.near, tree.far
    dist = state.dist

    def visit(pos: int, size: int, depth: int):
        state.depth = depth
        stats.nodes_visited += 1
        base = offs[pos]
        levels = offs[pos + 1] - base - 1
        for l in range(1, levels + 1):
            dq = dist[-l]
            nv = near[base + l]
            if dq < nv:
                if nv - dq > r:
                    return
            else:
                fv = far[base + l]
                if dq > fv and dq - fv > r:
                    return
        d = metric(q, objs[perm[pos]])
        stats.distance_calls += 1
        if d <= r:
            out.add_exact(int(perm[pos]), d)
        if size == 1:
            return
        nv0 = near[base]
        fv0 = far[base]
        pd0 = nv0 - d if d < nv0 else (d - fv0 if d > fv0 else 0.0)
        if pd0 <= r:
            ls, rs = child_sizes(size)
            dist.append(d)
            if _visit_right_first:
                visit(pos + 1 + ls, rs, depth + 1)
                if ls:
                    visit(pos + 1, ls, depth + 1)
            else:
                if ls:
                    visit(pos + 1, ls, depth + 1)
                visit(pos + 1 + ls, rs, depth + 1)
            dist.pop()

    visit(0, tree.size, 0)
    return out


def _collect_traversal(tree: CmtTree, q, r: float, stats: QueryStats,
                       on_exact, on_subtree, _visit_right_first: bool = False) -> None:
    # Shared walk for collect_range_query and counting_query: on_exact(index, d)
    # receives individually-measured objects, on_subtree(pos, size, skip_first, bound)
    # whole collected slices (skip_first when the slice root was reported exactly).
    state = QueryState(q, r=r)
    if tree.size == 0:
        return
    metric, objs = tree.metric, tree.objects
    perm, offs, near, far = tree.perm, tree.offs, tree.near, tree.far
    dist = state.dist

    def visit(pos: int, size: int, depth: int):
        state.depth = depth
        stats.nodes_visited += 1
        base = offs[pos]
        levels = offs[pos + 1] - base - 1
        mincd = math.inf
        for l in range(1, levels + 1):
            dq = dist[-l]
            nv = near[base + l]
            fv = far[base + l]
            if dq < nv:
                if nv - dq > r:
                    return
            elif dq > fv:
                if dq - fv > r:
                    return
            cd = dq + fv
            if cd < mincd:
                mincd = cd
        if mincd <= r:
            stats.subtrees_collected += 1
            stats.objects_collected += size
            on_subtree(pos, size, False, mincd)
            return
        d = metric(q, objs[perm[pos]])
        stats.distance_calls += 1
        if size == 1:
            if d <= r:
                on_exact(int(perm[pos]), d)
            return
        fv0 = far[base]
        cd0 = d + fv0
        if cd0 <= r:
            on_exact(int(perm[pos]), d)
            stats.subtrees_collected += 1
            stats.objects_collected += size - 1
            on_subtree(pos, size, True, cd0)
            return
        if d <= r:
            on_exact(int(perm[pos]), d)
        nv0 = near[base]
        pd0 = nv0 - d if d < nv0 else (d - fv0 if d > fv0 else 0.0)
        if pd0 <= r:
            ls, rs = child_sizes(size)
            dist.append(d)
            if _visit_right_first:
                visit(pos + 1 + ls, rs, depth + 1)
                if ls:
                    visit(pos + 1, ls, depth + 1)
            else:
                if ls:
                    visit(pos + 1, ls, depth + 1)
                visit(pos + 1 + ls, rs, depth + 1)
            dist.pop()

    visit(0, tree.size, 0)


def collect_range_query(tree: CmtTree, q, r: float, stats: QueryStats | None = None,
                        _visit_right_first: bool = False) -> ResultSet:
    """Range query with whole-subtree collection.

    Same membership as basic_range_query, but when an ancestral or own-distance
    bound proves a whole subtree lies within r it is appended without further
    metric calls; such entries carry the triggering bound, not exact distances.
    """
    if stats is None:
        stats = QueryStats()
    out = ResultSet()
    out.stats = stats
    perm = tree.perm

    def on_subtree(pos, size, skip_first, bound):
        for i in range(pos + (1 if skip_first else 0), pos + size):
            out.add_bound(int(perm[i]), bound)

    _collect_traversal(tree, q, r, stats, out.add_exact, on_subtree, _visit_right_first)
    return out


def counting_query(tree: CmtTree, q, r: float, stats: QueryStats | None = None) -> int:
    """Number of objects within r of q; collected subtrees contribute node counts."""
    if stats is None:
        stats = QueryStats()
    total = 0

    def on_exact(index, d):
        nonlocal total
        total += 1

    def on_subtree(pos, size, skip_first, bound):
        nonlocal total
        total += size - (1 if skip_first else 0)

    _collect_traversal(tree, q, r, stats, on_exact, on_subtree)
    return total


class PqEntry:
    """Best-first search record; the parent chain supplies ancestor distances."""

    __slots__ = ("node", "size", "depth", "parent", "distance", "priority")

    def __init__(self, node: int, size: int, depth: int, parent: "PqEntry | None",
                 priority: float):
        self.node = node
        self.size = size
        self.depth = depth
        self.parent = parent
        self.distance: float | None = None
        self.priority = priority


def knn_query(tree: CmtTree, q, k, r_bound: float = math.inf,
              stats: QueryStats | None = None) -> ResultSet:
    """Best-first search for the k objects nearest to q within distance r_bound.

    Returns fewer than k entries when fewer objects lie within r_bound; entries
    are exact and sorted ascending by (distance, object index). The search
    radius starts at r_bound and shrinks to the current k-th best distance once
    k candidates are held; queue entries are priority-tested both before being
    added and when removed.
    """
    state = QueryState(q, r=r_bound, k=k)
    k = state.k
    if stats is None:
        stats = QueryStats()
    out = ResultSet()
    out.stats = stats
    if tree.size == 0:
        return out
    metric, objs = tree.metric, tree.objects
    perm, offs, near, far = tree.perm, tree.offs, tree.near, tree.far
    radius = r_bound
    finite_k = k != math.inf
    held: list[tuple[float, int, int]] = []  # (-distance, insertion seq, object index)
    heap: list[tuple[float, int, PqEntry]] = []
    root = PqEntry(0, tree.size, 0, None, 0.0)
    heap.append((0.0, 0, root))
    seq = 1
    rseq = 0
    while heap:
        prio, _, ent = heapq.heappop(heap)
        if prio > radius:
            break
        stats.nodes_visited += 1
        pos = ent.node
        d = metric(q, objs[perm[pos]])
        stats.distance_calls += 1
        ent.distance = d
        if d <= radius:
            heapq.heappush(held, (-d, rseq, int(perm[pos])))
            rseq += 1
            if finite_k:
                if len(held) > k:
                    heapq.heappop(held)
                if len(held) == k:
                    radius = -held[0][0]
        if ent.size > 1:
            base = offs[pos]
            nv0 = near[base]
            fv0 = far[base]
            pd0 = nv0 - d if d < nv0 else (d - fv0 if d > fv0 else 0.0)
            if pd0 <= radius:
                ls, rs = child_sizes(ent.size)
                cdepth = ent.depth + 1
                for cpos, csz in ((pos + 1, ls), (pos + 1 + ls, rs)):
                    if csz == 0:
                        continue
                    cbase = offs[cpos]
                    clev = offs[cpos + 1] - cbase - 1
                    cprio = pd0
                    anc = ent
                    for l in range(1, clev + 1):
                        dq = anc.distance
                        nv = near[cbase + l]
                        if dq < nv:
                            pd = nv - dq
                        else:
                            fv = far[cbase + l]
                            pd = dq - fv if dq > fv else 0.0
                        if pd > cprio:
                            cprio = pd
                        anc = anc.parent
                    if cprio <= radius:
                        heapq.heappush(heap, (cprio, seq, PqEntry(cpos, csz, cdepth, ent, cprio)))
                        seq += 1
    for negd, _, idx in held:
        out.add_exact(idx, -negd)
    out.entries.sort(key=lambda e: (e[1], e[0]))
    return out


def brute_force_range(objects, metric: Metric, q, r: float) -> ResultSet:
    """Linear-scan reference: exact range semantics, dataset order."""
    if r < 0:
        raise ValueError(f"radius must be >= 0, got {r}")
    out = ResultSet()
    out.stats = QueryStats()
    for i, obj in enumerate(objects):
        d = metric(q, obj)
        out.stats.distance_calls += 1
        if d <= r:
            out.add_exact(i, d)
    return out


def brute_force_knn(objects, metric: Metric, q, k, r_bound: float = math.inf) -> ResultSet:
    """Linear-scan reference: k nearest within r_bound, ties by dataset index."""
    k = QueryState(q, r=r_bound, k=k).k
    out = ResultSet()
    out.stats = QueryStats()
    scored = []
    for i, obj in enumerate(objects):
        d = metric(q, obj)
        out.stats.distance_calls += 1
        if d <= r_bound:
            scored.append((d, i))
    scored.sort()
    if k != math.inf:
        scored = scored[:k]
    for d, i in scored:
        out.add_exact(i, d)
    return out


def range_optimality_ratio(tree: CmtTree, q, k: int,
                           stats_knn: QueryStats | None = None) -> float:
    """Distance calls of a collection-free range query at the k-th neighbor radius,
    relative to the kNN query's own calls. Values near 1 mean the kNN search is
    close to range-optimal."""
    if k > tree.size:
        raise ValueError(f"k={k} exceeds dataset size {tree.size}")
    if stats_knn is None:
        stats_knn = QueryStats()
    res = knn_query(tree, q, k, math.inf, stats_knn)
    r_star = res.entries[-1][1]
    range_stats = QueryStats()
    basic_range_query(tree, q, r_star, range_stats)
    return range_stats.distance_calls / stats_knn.distance_calls
