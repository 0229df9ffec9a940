"""Cascaded metric tree: construction, node layout, validation, serialization.

The tree is stored as a node arena in preorder: a node is identified by its slice
start in a permutation array, its subtree occupies the contiguous slice, and child
subtree sizes are a pure function of the subtree size, so no pointers are stored.

Each node keeps distance intervals indexed by ancestor level: index 0 covers the
objects strictly below the node (empty sentinel [+inf, -inf] at leaves), index
l >= 1 covers the node's whole subtree *including* its own object, measured from
the l-th ancestor's object. The number of ancestral levels stored is capped by
cascade_limit (0 keeps only index 0; unbounded keeps all levels up to the depth).
"""
from __future__ import annotations

import math
import struct
from array import array
from dataclasses import dataclass
from typing import Any, NamedTuple

import numpy as np

from .metrics import Metric, Sequence, metric_from_tag, metric_tag

_MASK64 = (1 << 64) - 1


class BuildError(RuntimeError):
    pass


class DistanceInterval(NamedTuple):
    near: float
    far: float

    @property
    def empty(self) -> bool:
        return self.near > self.far


EMPTY_INTERVAL = DistanceInterval(math.inf, -math.inf)


@dataclass(frozen=True)
class BuildConfig:
    cascade_limit: int | float = math.inf
    seed: int = 0

    def __post_init__(self):
        cl = self.cascade_limit
        if cl != math.inf and (not isinstance(cl, int) or cl < 0):
            raise ValueError(f"cascade_limit must be a non-negative int or math.inf, got {cl!r}")
        if not isinstance(self.seed, int) or not (0 <= self.seed < 2**64):
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _pivot_offset(seed_mix: int, depth: int, lo: int, m: int) -> int:
    # Keyed hash RNG: platform-stable and independent of cascade_limit, so builds
    # that differ only in cascade_limit pick identical pivots. seed_mix is the
    # build seed passed through _splitmix64 once.
    h = _splitmix64(seed_mix ^ ((depth * 0xD1B54A32D192ED03 + lo * 0x8CB92BA72F3D8DD7) & _MASK64))
    return h % m


def child_sizes(size: int) -> tuple[int, int]:
    """Subtree sizes of the two children of a node whose subtree holds `size` objects.

    The size-m' remainder (m' = size - 1) splits at the lower median: the right
    child takes floor(m'/2) + 1 objects (median included), the left child the
    rest. This makes the larger child hold ceil(size/2) objects, giving tree
    height exactly ceil(log2 size).
    """
    m = size - 1
    if m <= 0:
        return 0, 0
    right = m // 2 + 1
    return m - right, right


def partition_bom(entries: list[tuple[float, Any]]) -> tuple[list, list, float]:
    """Split (distance, item) pairs into child subsets by lower-median distance.

    Stable under ties: equal distances keep input order, and the subset sizes are
    fixed by child_sizes regardless of ties. Returns (left, right, median); every
    distance in left is <= every distance in right, and the median is the smallest
    right-side distance.
    """
    m = len(entries)
    if m == 0:
        raise ValueError("partition_bom: empty input")
    order = sorted(range(m), key=lambda i: entries[i][0])
    left_n, _ = child_sizes(m + 1)
    median = entries[order[left_n]][0]
    left = [entries[i] for i in order[:left_n]]
    right = [entries[i] for i in order[left_n:]]
    return left, right, median


def compute_adiv(pdists: np.ndarray, rows: np.ndarray, depth: int, cascade_limit) -> tuple[np.ndarray, np.ndarray]:
    """Ancestral distance intervals for a subtree, from recorded pivot distances.

    pdists[i, j] is the distance from object i to the pivot at depth j on its
    path; rows lists the dataset indices of the subtree's objects including the
    subtree root. Returns (near, far) arrays for levels 1..min(depth, cascade_limit),
    level 1 first. Performs no metric calls.
    """
    levels = depth if cascade_limit == math.inf else min(depth, int(cascade_limit))
    if levels <= 0:
        return np.empty(0), np.empty(0)
    c0 = depth - levels
    sub = pdists[np.asarray(rows, dtype=np.int64), c0:depth]
    near = sub.min(axis=0)[::-1].copy()
    far = sub.max(axis=0)[::-1].copy()
    return near, far


class CmtNode:
    """Read-only view of one tree node (object, count, intervals, children)."""

    __slots__ = ("tree", "position", "count", "depth")

    def __init__(self, tree: "CmtTree", position: int, count: int, depth: int):
        self.tree = tree
        self.position = position
        self.count = count
        self.depth = depth

    @property
    def object_index(self) -> int:
        return self.tree.perm[self.position]

    @property
    def object(self):
        return self.tree.objects[self.object_index]

    @property
    def intervals(self) -> list[DistanceInterval]:
        t = self.tree
        lo, hi = t.offs[self.position], t.offs[self.position + 1]
        return [DistanceInterval(t.near[i], t.far[i]) for i in range(lo, hi)]

    @property
    def left(self) -> "CmtNode | None":
        ls, _ = child_sizes(self.count)
        if ls == 0:
            return None
        return CmtNode(self.tree, self.position + 1, ls, self.depth + 1)

    @property
    def right(self) -> "CmtNode | None":
        ls, rs = child_sizes(self.count)
        if rs == 0:
            return None
        return CmtNode(self.tree, self.position + 1 + ls, rs, self.depth + 1)

    def __repr__(self) -> str:
        return f"CmtNode(pos={self.position}, count={self.count}, depth={self.depth})"


class CmtTree:
    """Immutable balanced metric tree with per-node ancestral distance intervals."""

    __slots__ = (
        "objects", "metric", "cascade_limit", "seed", "build_distance_calls",
        "size", "perm", "depths", "offs", "near", "far",
    )

    def __init__(self, objects, metric, cascade_limit, seed, build_distance_calls,
                 perm, depths, offs, near, far):
        self.objects = objects
        self.metric = metric
        self.cascade_limit = cascade_limit
        self.seed = seed
        self.build_distance_calls = build_distance_calls
        self.size = len(objects)
        self.perm = perm
        self.depths = depths
        self.offs = offs
        self.near = near
        self.far = far

    @property
    def root(self) -> CmtNode | None:
        if self.size == 0:
            return None
        return CmtNode(self, 0, self.size, 0)

    @property
    def height(self) -> int:
        """Number of edges on the longest root-to-leaf path (0 for 0 or 1 objects)."""
        if self.size == 0:
            return 0
        return int(max(self.depths))

    def ancestral_levels(self, position: int) -> int:
        return self.offs[position + 1] - self.offs[position] - 1

    def with_cascade_limit(self, cascade_limit) -> "CmtTree":
        """Derive a tree storing fewer ancestral levels by truncating intervals.

        Raising the limit would require new distance computations; rebuild instead.
        """
        if cascade_limit == self.cascade_limit:
            return self
        if cascade_limit != math.inf and (not isinstance(cascade_limit, int) or cascade_limit < 0):
            raise ValueError(f"invalid cascade_limit: {cascade_limit!r}")
        if cascade_limit > self.cascade_limit:
            raise ValueError(
                f"cannot raise cascade_limit from {self.cascade_limit} to {cascade_limit}: "
                "stored intervals only support lowering; rebuild the tree instead"
            )
        n = self.size
        offs = array("q", bytes(8 * (n + 1)))
        near = array("d")
        far = array("d")
        pos_off = 0
        for pos in range(n):
            offs[pos] = pos_off
            keep = min(int(self.depths[pos]), int(cascade_limit)) + 1
            src = self.offs[pos]
            near.extend(self.near[src:src + keep])
            far.extend(self.far[src:src + keep])
            pos_off += keep
        offs[n] = pos_off
        return CmtTree(self.objects, self.metric, cascade_limit, self.seed,
                       self.build_distance_calls, self.perm, self.depths, offs, near, far)

    def to_bytes(self) -> bytes:
        return tree_to_bytes(self)


def build_cmt(objects: list, metric: Metric, config: BuildConfig | None = None) -> CmtTree:
    """Build a cascaded metric tree over the objects.

    Each recursion picks a seeded random pivot, measures the pivot's distance to
    every remaining object in its slice (these are the only metric calls), sets
    the node's level-0 interval from their min/max, splits at the lower median,
    records the distances for ancestral-interval computation, and recurses.
    """
    if config is None:
        config = BuildConfig()
    cl = config.cascade_limit
    seed = config.seed
    n = len(objects)
    perm = np.arange(n, dtype=np.int64)
    depths = array("H", bytes(2 * n))
    near_list: list[float] = []
    far_list: list[float] = []
    offs = array("q", bytes(8 * (n + 1)))
    height = (n - 1).bit_length() if n > 0 else 0
    pdists = np.empty((n, height)) if (cl >= 1 and n > 1) else None
    objs = objects
    seed_mix = _splitmix64(seed)
    calls = 0

    def rec(lo: int, size: int, depth: int):
        nonlocal calls
        depths[lo] = depth
        if pdists is not None:
            a_near, a_far = compute_adiv(pdists, perm[lo:lo + size], depth, cl)
        else:
            a_near = a_far = ()
        m = size - 1
        if m == 0:
            near_list.append(math.inf)
            far_list.append(-math.inf)
            near_list.extend(a_near)
            far_list.extend(a_far)
            return
        j = lo + _pivot_offset(seed_mix, depth, lo, size)
        if j != lo:
            perm[lo], perm[j] = perm[j], perm[lo]
        pivot = objs[perm[lo]]
        rest = perm[lo + 1:lo + size]
        dists = []
        k = 0
        try:
            for k in range(m):
                dists.append(metric(pivot, objs[rest[k]]))
        except Exception as exc:
            raise BuildError(
                f"metric failed for dataset objects {perm[lo]} and {rest[k]}: {exc}"
            ) from exc
        calls += m
        if m == 1:
            sd = dists
            if pdists is not None:
                pdists[rest[0], depth] = dists[0]
        elif m == 2:
            # Stable two-element sort without numpy overhead.
            if dists[1] < dists[0]:
                rest[0], rest[1] = int(rest[1]), int(rest[0])
                dists[0], dists[1] = dists[1], dists[0]
            sd = dists
            if pdists is not None:
                pdists[rest[0], depth] = dists[0]
                pdists[rest[1], depth] = dists[1]
        else:
            arr = np.asarray(dists, dtype=np.float64)
            order = np.argsort(arr, kind="stable")
            sorted_rest = rest[order]
            sd = arr[order]
            perm[lo + 1:lo + size] = sorted_rest
            if pdists is not None:
                pdists[sorted_rest, depth] = sd
        near_list.append(sd[0])
        far_list.append(sd[-1])
        near_list.extend(a_near)
        far_list.extend(a_far)
        ls, rs = child_sizes(size)
        if ls:
            rec(lo + 1, ls, depth + 1)
        rec(lo + 1 + ls, rs, depth + 1)

    if n:
        rec(0, n, 0)

    pos_off = 0
    for pos in range(n):
        offs[pos] = pos_off
        pos_off += min(int(depths[pos]), cl if cl != math.inf else depths[pos]) + 1
    offs[n] = pos_off
    assert pos_off == len(near_list)

    return CmtTree(
        objects=objects, metric=metric, cascade_limit=cl, seed=seed,
        build_distance_calls=calls, perm=perm, depths=depths, offs=offs,
        near=array("d", near_list), far=array("d", far_list),
    )


class Violation(NamedTuple):
    position: int
    kind: str
    level: int | None
    stored: float
    expected: float


def validate_tree(tree: CmtTree, metric: Metric | None = None) -> list[Violation]:
    """Recompute every interval and structural count with direct metric calls.

    Returns one Violation per disagreement (empty list means the tree is
    consistent). Real-valued metrics are compared with 1e-9 relative tolerance,
    Levenshtein exactly. Costs one metric call per (object, ancestor) pair,
    i.e. O(N log N) total.
    """
    if metric is None:
        metric = tree.metric
    n = tree.size
    out: list[Violation] = []
    if n == 0:
        return out
    exact = metric_tag(metric) == "levenshtein"

    def differs(stored: float, expected: float) -> bool:
        if exact:
            return stored != expected
        if stored == expected:
            return False
        return abs(stored - expected) > 1e-9 * max(1.0, abs(stored), abs(expected))

    ht = int(max(tree.depths))
    pv = np.empty((n, ht)) if ht else np.empty((n, 0))
    perm, offs, near, far, objs = tree.perm, tree.offs, tree.near, tree.far, tree.objects
    cl = tree.cascade_limit
    stack = [(0, n, 0)]
    while stack:
        pos, size, depth = stack.pop()
        if int(tree.depths[pos]) != depth:
            out.append(Violation(pos, "depth", None, float(tree.depths[pos]), float(depth)))
        pivot = objs[perm[pos]]
        for i in range(pos + 1, pos + size):
            pv[i, depth] = metric(pivot, objs[perm[i]])
        nlev = offs[pos + 1] - offs[pos]
        want_lev = min(depth, cl if cl != math.inf else depth) + 1
        if nlev != want_lev:
            out.append(Violation(pos, "levels", None, float(nlev), float(want_lev)))
            nlev = min(nlev, want_lev)
        base = offs[pos]
        if size == 1:
            if not (near[base] == math.inf and far[base] == -math.inf):
                out.append(Violation(pos, "leaf-sentinel", 0, near[base], math.inf))
        else:
            below = pv[pos + 1:pos + size, depth]
            if differs(near[base], below.min()):
                out.append(Violation(pos, "near", 0, near[base], float(below.min())))
            if differs(far[base], below.max()):
                out.append(Violation(pos, "far", 0, far[base], float(below.max())))
        for lvl in range(1, nlev):
            col = pv[pos:pos + size, depth - lvl]
            lo_e, hi_e = float(col.min()), float(col.max())
            if differs(near[base + lvl], lo_e):
                out.append(Violation(pos, "near", lvl, near[base + lvl], lo_e))
            if differs(far[base + lvl], hi_e):
                out.append(Violation(pos, "far", lvl, far[base + lvl], hi_e))
        ls, rs = child_sizes(size)
        if ls + rs + 1 != size:
            out.append(Violation(pos, "count", None, float(size), float(ls + rs + 1)))
        if rs:
            stack.append((pos + 1 + ls, rs, depth + 1))
        if ls:
            stack.append((pos + 1, ls, depth + 1))
    return out


_MAGIC = b"CMT1"
_VERSION = 1
_CL_INF = _MASK64


def tree_to_bytes(tree: CmtTree) -> bytes:
    """Serialize to a versioned little-endian binary blob (bit-exact round-trip)."""
    tag = metric_tag(tree.metric)
    if tag is None:
        raise ValueError("only euclidean/levenshtein trees can be serialized")
    cl_enc = _CL_INF if tree.cascade_limit == math.inf else int(tree.cascade_limit)
    tagb = tag.encode("ascii")
    parts = [
        _MAGIC,
        struct.pack("<IQQQQB", _VERSION, tree.size, cl_enc, tree.seed,
                    tree.build_distance_calls, len(tagb)),
        tagb,
    ]
    nlev = np.diff(np.frombuffer(tree.offs, dtype=np.int64)) if tree.size else np.empty(0, np.int64)
    parts.append(nlev.astype("<u2").tobytes())
    parts.append(np.frombuffer(tree.near, dtype=np.float64).astype("<f8", copy=False).tobytes())
    parts.append(np.frombuffer(tree.far, dtype=np.float64).astype("<f8", copy=False).tobytes())
    parts.append(np.asarray(tree.perm, dtype="<i8").tobytes())
    if tag == "euclidean":
        dim = len(tree.objects[0]) if tree.size else 0
        parts.append(struct.pack("<I", dim))
        if tree.size:
            parts.append(np.asarray(tree.objects, dtype="<f8").tobytes())
    else:
        for seq in tree.objects:
            idb = seq.id.encode("utf-8")
            syb = seq.symbols.encode("utf-8")
            parts.append(struct.pack("<I", len(idb)))
            parts.append(idb)
            parts.append(struct.pack("<I", len(syb)))
            parts.append(syb)
    return b"".join(parts)


def tree_from_bytes(blob: bytes) -> CmtTree:
    if blob[:4] != _MAGIC:
        raise ValueError("not a serialized tree (bad magic)")
    off = 4
    version, size, cl_enc, seed, calls, taglen = struct.unpack_from("<IQQQQB", blob, off)
    off += struct.calcsize("<IQQQQB")
    if version != _VERSION:
        raise ValueError(f"unsupported tree format version {version}")
    tag = blob[off:off + taglen].decode("ascii")
    off += taglen
    cl = math.inf if cl_enc == _CL_INF else int(cl_enc)
    nlev = np.frombuffer(blob, "<u2", count=size, offset=off).astype(np.int64)
    off += 2 * size
    total = int(nlev.sum())
    near = array("d", np.frombuffer(blob, "<f8", count=total, offset=off).astype(np.float64))
    off += 8 * total
    far = array("d", np.frombuffer(blob, "<f8", count=total, offset=off).astype(np.float64))
    off += 8 * total
    perm = np.frombuffer(blob, "<i8", count=size, offset=off).astype(np.int64)
    off += 8 * size
    metric = metric_from_tag(tag)
    if tag == "euclidean":
        (dim,) = struct.unpack_from("<I", blob, off)
        off += 4
        coords = np.frombuffer(blob, "<f8", count=size * dim, offset=off).astype(np.float64)
        off += 8 * size * dim
        objects = [tuple(row) for row in coords.reshape(size, dim)] if size else []
    else:
        objects = []
        for _ in range(size):
            (ln,) = struct.unpack_from("<I", blob, off)
            off += 4
            sid = blob[off:off + ln].decode("utf-8")
            off += ln
            (ln,) = struct.unpack_from("<I", blob, off)
            off += 4
            objects.append(Sequence(sid, blob[off:off + ln].decode("utf-8")))
            off += ln
    depths = array("H", bytes(2 * size))
    stack = [(0, size, 0)] if size else []
    while stack:
        pos, sz, depth = stack.pop()
        depths[pos] = depth
        want = min(depth, cl if cl != math.inf else depth) + 1
        if nlev[pos] != want:
            raise ValueError(f"corrupt tree: node {pos} stores {nlev[pos]} levels, expected {want}")
        ls, rs = child_sizes(sz)
        if rs:
            stack.append((pos + 1 + ls, rs, depth + 1))
        if ls:
            stack.append((pos + 1, ls, depth + 1))
    offs = array("q", bytes(8 * (size + 1)))
    acc = 0
    for pos in range(size):
        offs[pos] = acc
        acc += int(nlev[pos])
    offs[size] = acc
    tree = CmtTree(objects=objects, metric=metric, cascade_limit=cl, seed=seed,
                   build_distance_calls=calls, perm=perm, depths=depths, offs=offs,
                   near=near, far=far)
    return tree


def save_tree(tree: CmtTree, path) -> None:
    with open(path, "wb") as fh:
        fh.write(tree_to_bytes(tree))


def load_tree(path) -> CmtTree:
    with open(path, "rb") as fh:
        return tree_from_bytes(fh.read())
