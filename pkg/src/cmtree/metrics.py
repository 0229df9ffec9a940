"""Metric abstractions: Euclidean and Levenshtein distances plus a counting wrapper.

A metric is any callable d(x, y) -> non-negative real that is symmetric,
satisfies the triangle inequality, and returns 0 for equal objects.
"""
from __future__ import annotations

import math
from typing import Any, Callable

import numpy as np

Metric = Callable[[Any, Any], float]

AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"


def euclidean_distance(a, b) -> float:
    """L2 distance between two equal-length coordinate tuples."""
    if len(a) != len(b):
        raise ValueError(f"dimension mismatch: {len(a)} vs {len(b)}")
    return math.dist(a, b)


class Sequence:
    """A non-empty symbol string (e.g. amino-acid letters) with a dataset id."""

    __slots__ = ("id", "symbols", "_codes")

    def __init__(self, id: str, symbols: str):
        if not symbols:
            raise ValueError(f"empty sequence for id {id!r}")
        self.id = id
        self.symbols = symbols
        self._codes = None

    @property
    def codes(self) -> np.ndarray:
        if self._codes is None:
            self._codes = np.frombuffer(self.symbols.encode("ascii"), np.uint8).astype(np.int32)
        return self._codes

    def __len__(self) -> int:
        return len(self.symbols)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Sequence)
            and self.id == other.id
            and self.symbols == other.symbols
        )

    def __hash__(self) -> int:
        return hash((self.id, self.symbols))

    def __repr__(self) -> str:
        shown = self.symbols if len(self.symbols) <= 12 else self.symbols[:12] + "..."
        return f"Sequence({self.id!r}, {shown!r})"


_lev_jit = None


def _get_lev_kernel():
    # Deferred so that importing the package does not pay the numba import cost.
    global _lev_jit
    if _lev_jit is None:
        try:
            from numba import njit

            _lev_jit = njit(cache=True)(_lev_two_row)
        except ImportError:
            _lev_jit = _lev_two_row
    return _lev_jit


def _lev_two_row(a, b):
    la = a.shape[0]
    lb = b.shape[0]
    if la == 0:
        return lb
    if lb == 0:
        return la
    prev = np.arange(lb + 1)
    curr = np.empty(lb + 1, np.int64)
    for i in range(1, la + 1):
        curr[0] = i
        ai = a[i - 1]
        for j in range(1, lb + 1):
            sub = prev[j - 1] if ai == b[j - 1] else prev[j - 1] + 1
            dele = prev[j] + 1
            ins = curr[j - 1] + 1
            best = sub
            if dele < best:
                best = dele
            if ins < best:
                best = ins
            curr[j] = best
        prev, curr = curr, prev
    return prev[lb]


def _as_codes(x) -> np.ndarray:
    if isinstance(x, Sequence):
        return x.codes
    return np.fromiter((ord(c) for c in x), dtype=np.int32, count=len(x))


def levenshtein_distance(a, b) -> int:
    """Minimum number of single-symbol edits (insert/delete/substitute) from a to b.

    Accepts plain strings or Sequence objects.
    """
    return int(_get_lev_kernel()(_as_codes(a), _as_codes(b)))


class CountingMetric:
    """Wraps a metric and counts successful evaluations; distances are unchanged."""

    __slots__ = ("inner", "calls")

    def __init__(self, inner: Metric):
        self.inner = inner
        self.calls = 0

    def __call__(self, a, b) -> float:
        d = self.inner(a, b)
        self.calls += 1
        return d


def counted_call(m: CountingMetric, a, b) -> float:
    """Evaluate a wrapped metric, incrementing its call counter by exactly one."""
    return m(a, b)


def metric_tag(metric) -> str | None:
    """Stable name for a serializable metric, or None for custom callables."""
    if metric is euclidean_distance:
        return "euclidean"
    if metric is levenshtein_distance:
        return "levenshtein"
    return None


def metric_from_tag(tag: str) -> Metric:
    if tag == "euclidean":
        return euclidean_distance
    if tag == "levenshtein":
        return levenshtein_distance
    raise ValueError(f"unknown metric tag: {tag!r}")
