from __future__ import annotations

import math
from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmtree.metrics import (
    CountingMetric,
    Sequence,
    counted_call,
    euclidean_distance,
    levenshtein_distance,
    metric_from_tag,
    metric_tag,
)


def lev_reference(a: str, b: str) -> int:
    # Independent full-table dynamic-programming oracle.
    la, lb = len(a), len(b)
    table = [[0] * (lb + 1) for _ in range(la + 1)]
    for i in range(la + 1):
        table[i][0] = i
    for j in range(lb + 1):
        table[0][j] = j
    for i in range(1, la + 1):
        for j in range(1, lb + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            table[i][j] = min(
                table[i - 1][j - 1] + cost,
                table[i - 1][j] + 1,
                table[i][j - 1] + 1,
            )
    return table[la][lb]


def test_euclidean_345():
    assert euclidean_distance((0.0, 0.0), (3.0, 4.0)) == 5.0


def test_euclidean_identity():
    assert euclidean_distance((1.0, 1.0, 1.0), (1.0, 1.0, 1.0)) == 0.0


def test_euclidean_high_precision():
    getcontext().prec = 50
    a, b = (0.2, 0.7), (0.9, 0.1)
    exact = (
        (Decimal(a[0]) - Decimal(b[0])) ** 2 + (Decimal(a[1]) - Decimal(b[1])) ** 2
    ).sqrt()
    assert math.isclose(euclidean_distance(a, b), float(exact), rel_tol=0, abs_tol=1e-15)


def test_euclidean_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        euclidean_distance((0.0, 0.0), (1.0, 2.0, 3.0))


def test_levenshtein_insertions():
    assert levenshtein_distance("", "abc") == 3


def test_levenshtein_identity():
    assert levenshtein_distance("abc", "abc") == 0


def test_levenshtein_kitten_sitting():
    assert levenshtein_distance("kitten", "sitting") == lev_reference("kitten", "sitting") == 3


def test_levenshtein_accepts_sequences():
    a = Sequence("a", "ACDEF")
    b = Sequence("b", "ACEF")
    assert levenshtein_distance(a, b) == 1


@given(st.text(max_size=32), st.text(max_size=32))
@settings(max_examples=300, deadline=None)
def test_levenshtein_matches_full_table_oracle(a, b):
    assert levenshtein_distance(a, b) == lev_reference(a, b)


def test_counted_call_increments_from_zero():
    m = CountingMetric(euclidean_distance)
    assert m.calls == 0
    counted_call(m, (0.0, 0.0), (3.0, 4.0))
    assert m.calls == 1


def test_counted_call_increments_by_each_evaluation():
    m = CountingMetric(euclidean_distance)
    m.calls = 7
    for _ in range(3):
        counted_call(m, (0.0,), (1.0,))
    assert m.calls == 10


def test_counted_call_transparent():
    m = CountingMetric(euclidean_distance)
    assert counted_call(m, (0.0, 0.0), (3.0, 4.0)) == 5.0
    assert m.calls == 1


def test_counted_call_does_not_count_errors():
    m = CountingMetric(euclidean_distance)
    with pytest.raises(ValueError):
        counted_call(m, (0.0, 0.0), (1.0, 2.0, 3.0))
    assert m.calls == 0


def test_metric_laws_euclidean():
    rng = np.random.default_rng(20240817)
    pts = rng.uniform(-5.0, 5.0, size=(10_000, 3, 3))
    tol = 1e-12
    for x, y, z in ((tuple(t[0]), tuple(t[1]), tuple(t[2])) for t in pts):
        dxy = euclidean_distance(x, y)
        assert dxy >= 0.0
        assert abs(dxy - euclidean_distance(y, x)) <= tol
        assert euclidean_distance(x, x) == 0.0
        assert euclidean_distance(x, z) <= dxy + euclidean_distance(y, z) + tol


def test_metric_laws_levenshtein():
    rng = np.random.default_rng(20240818)
    alphabet = "ACGT"
    def rand_str():
        n = int(rng.integers(0, 13))
        return "".join(alphabet[int(i)] for i in rng.integers(0, len(alphabet), n))
    for _ in range(10_000):
        x, y, z = rand_str(), rand_str(), rand_str()
        dxy = levenshtein_distance(x, y)
        assert dxy >= 0
        assert dxy == levenshtein_distance(y, x)
        assert levenshtein_distance(x, x) == 0
        assert levenshtein_distance(x, z) <= dxy + levenshtein_distance(y, z)


def test_sequence_rejects_empty():
    with pytest.raises(ValueError):
        Sequence("x", "")


def test_sequence_codes_roundtrip():
    s = Sequence("s1", "MKV")
    assert list(s.codes) == [ord("M"), ord("K"), ord("V")]
    assert len(s) == 3


def test_metric_tags():
    assert metric_tag(euclidean_distance) == "euclidean"
    assert metric_tag(levenshtein_distance) == "levenshtein"
    assert metric_tag(lambda a, b: 0.0) is None
    assert metric_from_tag("euclidean") is euclidean_distance
    assert metric_from_tag("levenshtein") is levenshtein_distance
    with pytest.raises(ValueError):
        metric_from_tag("cosine")
