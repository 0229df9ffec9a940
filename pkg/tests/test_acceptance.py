"""End-to-end acceptance battery.

Ten checks covering query correctness against brute force, bound
soundness, the distance-call savings that cascading must deliver at
scale, range-optimality of the kNN search, structural validation, and
byte-identical reruns of the CSV batteries.  Each test carries an
``acceptance`` marker; conftest prints one PASS/FAIL line per check
after the run.

The heavy datasets and trees are built once and shared through a
module-level cache.  The rerun check rebuilds its pipelines from
scratch on purpose.
"""

import math
import os
import tempfile
import time

import numpy as np
import pytest

from cmtree.cli import (
    run_knn_battery,
    run_optimality_battery,
    run_range_battery,
    rows_to_csv,
)
from cmtree.data import (
    DatasetSpec,
    estimate_max_distance,
    gen_protein_sequences,
    gen_uniform_points,
    load_dataset,
    sample_queries,
    write_fasta,
)
from cmtree.metrics import Sequence, euclidean_distance, levenshtein_distance
from cmtree.query import (
    QueryStats,
    brute_force_knn,
    brute_force_range,
    collect_range_query,
    collection_distance,
    counting_query,
    knn_query,
    max_pruning_distance,
    min_collection_distance,
    pruning_distance,
)
from cmtree.tree import BuildConfig, build_cmt, validate_tree

SEED_ORACLE = 11
SEED_BOUNDS = 23
SEED_RANGE10 = 31
SEED_KNN3 = 51
SEED_PROTEIN = 71
SEED_SWEEP = 81

CASCADES = (0, 1, math.inf)

# Relative slack for bounds recomputed through float metrics; distances
# that differ only by accumulated rounding are not violations.  String
# metrics are integral and compared exactly.
FLOAT_EPS = 1e-12

_CACHE = {}


def _memo(key, builder):
    if key not in _CACHE:
        _CACHE[key] = builder()
    return _CACHE[key]


def _points_pipeline(n, dim, seed):
    spec = DatasetSpec("uniform_points", n=n, dim=dim, seed=seed)
    objects = gen_uniform_points(n, dim, seed)
    full = build_cmt(objects, euclidean_distance,
                     BuildConfig(cascade_limit=math.inf, seed=seed))
    trees = {0: full.with_cascade_limit(0),
             1: full.with_cascade_limit(1),
             math.inf: full}
    return {"spec": spec, "objects": objects, "trees": trees}


def pipeline_oracle():
    return _memo("p_oracle", lambda: _points_pipeline(10_000, 3, SEED_ORACLE))


def pipeline_range10():
    return _memo("p_range10", lambda: _points_pipeline(100_000, 10, SEED_RANGE10))


def pipeline_knn3():
    return _memo("p_knn3", lambda: _points_pipeline(100_000, 3, SEED_KNN3))


def fasta_pipeline():
    def build():
        tmp = tempfile.mkdtemp(prefix="cmtree-acceptance-")
        path = os.path.join(tmp, "proteins.fasta")
        write_fasta(path, gen_protein_sequences(10_000, SEED_PROTEIN))
        spec = DatasetSpec("fasta_file", seed=SEED_PROTEIN, path=path)
        objects, metric = load_dataset(spec)
        tree = build_cmt(objects, metric,
                         BuildConfig(cascade_limit=math.inf, seed=SEED_PROTEIN))
        return {"spec": spec, "objects": objects, "metric": metric, "tree": tree}

    return _memo("p_fasta", build)


def _mean_calls(rows):
    """Map cascade label -> mean_distance_calls for a single-cell-per-cascade batch."""
    return {row["cascade"]: float(row["mean_distance_calls"]) for row in rows}


# --- CSV batteries; the rerun check calls these again with fresh pipelines ---

def oracle_battery_csv(pipe=None):
    pipe = pipe or _points_pipeline(10_000, 3, SEED_ORACLE)
    queries = sample_queries(pipe["spec"], 60, SEED_ORACLE)
    rows = run_range_battery(pipe["spec"], pipe["objects"], euclidean_distance,
                             pipe["trees"], queries,
                             radii_fracs=[0.02, 0.1, 0.3, 1.0])
    rows += run_knn_battery(pipe["spec"], pipe["objects"], euclidean_distance,
                            pipe["trees"], queries, ks=[1, 10, 100])
    rows += run_knn_battery(pipe["spec"], pipe["objects"], euclidean_distance,
                            pipe["trees"], queries, ks=[10],
                            bound_pcts=[5.0, 20.0])
    return {"rows": rows, "csv": rows_to_csv(rows)}


def range10_battery_csv(pipe=None):
    pipe = pipe or _points_pipeline(100_000, 10, SEED_RANGE10)
    objects = pipe["objects"]
    queries = sample_queries(pipe["spec"], 100, SEED_RANGE10)
    # Calibrate the radius so a ball holds ~0.1% of the dataset, using a
    # direct vectorized scan over the first few queries.
    arr = np.asarray(objects)
    rads = [float(np.quantile(np.linalg.norm(arr - np.asarray(q), axis=1), 1e-3))
            for q in queries[:20]]
    radius = float(np.median(rads))
    est = estimate_max_distance(objects, euclidean_distance, pipe["spec"].seed)
    rows = run_range_battery(pipe["spec"], objects, euclidean_distance,
                             pipe["trees"], queries, radii_fracs=[radius / est])
    return {"rows": rows, "csv": rows_to_csv(rows)}


def knn3_battery_csv(pipe=None):
    pipe = pipe or _points_pipeline(100_000, 3, SEED_KNN3)
    queries = sample_queries(pipe["spec"], 100, SEED_KNN3)
    knn_rows = run_knn_battery(pipe["spec"], pipe["objects"], euclidean_distance,
                               pipe["trees"], queries, ks=[1, 10, 100])
    opt_trees = {0: pipe["trees"][0], math.inf: pipe["trees"][math.inf]}
    opt_rows = run_optimality_battery(pipe["spec"], pipe["objects"],
                                      euclidean_distance, opt_trees, queries,
                                      ks=[100])
    return {"knn_rows": knn_rows, "opt_rows": opt_rows,
            "knn_csv": rows_to_csv(knn_rows), "opt_csv": rows_to_csv(opt_rows)}


# --- small mixed trees shared by the bound-soundness and validation checks ---

def _random_word(rng, alphabet="acdefghiklmnpqrstvwy"):
    length = int(rng.integers(2, 9))
    return "".join(alphabet[int(c)] for c in rng.integers(0, len(alphabet), length))


def small_mixed_trees():
    def build():
        batches = []
        rng = np.random.default_rng(np.random.SeedSequence([SEED_BOUNDS]))
        for i in range(50):
            n = int(rng.integers(1, 501))
            seed = SEED_BOUNDS * 1000 + i
            cl = (0, 1, 2, math.inf)[i % 4]
            kind = i % 3
            if kind == 0:
                objects = gen_uniform_points(n, 1, seed)
                metric = euclidean_distance
                queries = [gen_uniform_points(1, 1, seed + 7)[0],
                           objects[int(rng.integers(n))]]
            elif kind == 1:
                objects = gen_uniform_points(n, 3, seed)
                metric = euclidean_distance
                queries = [gen_uniform_points(1, 3, seed + 7)[0],
                           objects[int(rng.integers(n))]]
            else:
                objects = [Sequence(f"s{j}", _random_word(rng)) for j in range(n)]
                metric = levenshtein_distance
                queries = [Sequence("q0", _random_word(rng)),
                           objects[int(rng.integers(n))]]
            tree = build_cmt(objects, metric,
                             BuildConfig(cascade_limit=cl, seed=seed))
            exact = metric is levenshtein_distance
            batches.append((objects, metric, tree, queries, exact))
        return batches

    return _memo("small_trees", build)


def _walk_bounds(tree, q, metric, exact):
    """Compare every node's pruning/collection bounds against true subtree
    distances; returns a list of violation descriptions."""
    dist_q = np.asarray([metric(q, obj) for obj in tree.objects])
    by_pos = dist_q[tree.perm]
    bad = []

    def tol(x):
        return 0.0 if exact else FLOAT_EPS * max(1.0, abs(x))

    def visit(node, chain):
        pos = node.position
        size = node.count
        d_p = float(by_pos[pos])
        sub = by_pos[pos:pos + size]
        true_min = float(sub.min())
        true_max = float(sub.max())

        maxpd = max_pruning_distance(chain, node)
        if maxpd > true_min + tol(true_min):
            bad.append(f"pos {pos}: max_pruning_distance {maxpd} > {true_min}")
        if size > 1:
            below_min = float(sub[1:].min())
            pd0 = pruning_distance(d_p, node, 0)
            if pd0 > below_min + tol(below_min):
                bad.append(f"pos {pos}: pruning_distance[0] {pd0} > {below_min}")
        cd = collection_distance(d_p, node)
        if cd < true_max - tol(true_max):
            bad.append(f"pos {pos}: collection_distance {cd} < {true_max}")
        mincd = min_collection_distance(chain, node)
        if mincd < true_max - tol(true_max):
            bad.append(f"pos {pos}: min_collection_distance {mincd} < {true_max}")

        child_chain = chain + [d_p]
        if node.left is not None:
            visit(node.left, child_chain)
        if node.right is not None:
            visit(node.right, child_chain)

    if len(tree.objects):
        visit(tree.root, [])
    return bad


# --- height / build-cost sweep shared by the structure and validation checks ---

def sweep_results():
    def run():
        pool = [p[0] for p in gen_uniform_points(4096, 1, SEED_SWEEP)]
        metric = lambda a, b: abs(a - b)
        bad_heights = []
        violations = 0
        for n in range(1, 4097):
            tree = build_cmt(pool[:n], metric,
                             BuildConfig(cascade_limit=0, seed=SEED_SWEEP))
            if tree.height != (n - 1).bit_length():
                bad_heights.append((n, tree.height))
            violations += len(validate_tree(tree))
        return {"bad_heights": bad_heights, "violations": violations}

    return _memo("sweep", run)


def power_builds():
    def run():
        out = []
        for exp in range(10, 17):
            n = 2 ** exp
            objects = gen_uniform_points(n, 3, SEED_SWEEP + exp)
            trees = [build_cmt(objects, euclidean_distance,
                               BuildConfig(cascade_limit=cl, seed=SEED_SWEEP))
                     for cl in CASCADES]
            out.append((exp, n, trees))
        return out

    return _memo("powers", run)


# --- the ten checks ---

@pytest.mark.acceptance(1, "range, counting and kNN results match brute force")
def test_01_queries_match_brute_force():
    start = time.perf_counter()
    pipe = pipeline_oracle()
    objects = pipe["objects"]
    tree = pipe["trees"][math.inf]
    est = estimate_max_distance(objects, euclidean_distance, SEED_ORACLE)
    queries = sample_queries(pipe["spec"], 200, SEED_ORACLE)
    rng = np.random.default_rng(np.random.SeedSequence([SEED_ORACLE, 97]))

    fracs = rng.uniform(0.01, 1.1, size=200)
    for q, frac in zip(queries, fracs):
        r = float(frac) * est
        want = brute_force_range(objects, euclidean_distance, q, r)
        got = collect_range_query(tree, q, r)
        assert got.index_set() == want.index_set()
        assert counting_query(tree, q, r) == len(want)

    ks = rng.integers(1, 201, size=200)
    bound_fracs = rng.uniform(0.02, 0.4, size=200)
    for i, q in enumerate(queries):
        k = int(ks[i])
        b = math.inf if i % 2 == 0 else float(bound_fracs[i]) * est
        want = brute_force_knn(objects, euclidean_distance, q, k, r_bound=b)
        got = knn_query(tree, q, k, r_bound=b)
        assert got.distances() == want.distances()

    _memo("csv_oracle", lambda: oracle_battery_csv(pipe))
    assert time.perf_counter() - start < 60.0


@pytest.mark.acceptance(2, "pruning and collection bounds are sound on random trees")
def test_02_bounds_sound_on_random_trees():
    violations = []
    for objects, metric, tree, queries, exact in small_mixed_trees():
        for q in queries:
            violations += _walk_bounds(tree, q, metric, exact)
    assert violations == []


@pytest.mark.acceptance(3, "cascading cuts range-query distance calls at 10^5, 10-d")
def test_03_range_calls_drop_with_cascading():
    batch = _memo("csv_range10", lambda: range10_battery_csv(pipeline_range10()))
    rows = batch["rows"]
    assert len(rows) == 3
    mean = _mean_calls(rows)
    # sanity: the calibrated radius actually lands near the target selectivity
    for row in rows:
        assert 1e-4 <= float(row["result_frac"]) <= 1e-2
    assert mean["inf"] <= mean["1"] <= mean["0"]
    assert mean["inf"] <= 0.9 * mean["0"]


@pytest.mark.acceptance(4, "covering radius returns everything after one distance call")
def test_04_covering_radius_single_call():
    pipe = pipeline_oracle()
    objects = pipe["objects"]
    n = len(objects)
    q = gen_uniform_points(1, 3, SEED_ORACLE + 13)[0]
    arr = np.asarray(objects)
    # Collection certifies coverage through the root's upper bound
    # d(q, p) + far[0] <= 2 * d(q, p) + max_x d(q, x), so three times the
    # true maximum distance is always enough for a single-call collect.
    r = 3.0 * float(np.linalg.norm(arr - np.asarray(q), axis=1).max()) + 1e-9
    want = brute_force_range(objects, euclidean_distance, q, r)
    assert len(want) == n
    for cl in CASCADES:
        stats = QueryStats()
        got = collect_range_query(pipe["trees"][cl], q, r, stats)
        assert stats.distance_calls == 1
        assert len(got) == n
        assert got.index_set() == want.index_set()
        stats = QueryStats()
        assert counting_query(pipe["trees"][cl], q, r, stats) == n
        assert stats.distance_calls == 1


@pytest.mark.acceptance(5, "cascading cuts kNN distance calls at 10^5, 3-d")
def test_05_knn_calls_drop_with_cascading():
    batch = _memo("csv_knn3", lambda: knn3_battery_csv(pipeline_knn3()))
    by_k = {}
    for row in batch["knn_rows"]:
        by_k.setdefault(row["k"], {})[row["cascade"]] = float(row["mean_distance_calls"])
    assert set(by_k) == {"1", "10", "100"}
    for k, mean in by_k.items():
        assert mean["inf"] <= mean["1"] <= mean["0"]
    assert by_k["100"]["inf"] <= 0.8 * by_k["100"]["0"]


@pytest.mark.acceptance(6, "kNN search is range-optimal on uniform 3-d")
def test_06_knn_range_optimality():
    batch = _memo("csv_knn3", lambda: knn3_battery_csv(pipeline_knn3()))
    ratios = {row["cascade"]: float(row["mean_optimality_ratio"])
              for row in batch["opt_rows"]}
    assert set(ratios) == {"0", "inf"}
    assert ratios["inf"] >= 0.95
    assert ratios["0"] >= 0.90


@pytest.mark.acceptance(7, "distance bounds accelerate protein kNN")
def test_07_bounded_knn_on_proteins():
    start = time.perf_counter()
    pipe = fasta_pipeline()
    tree = pipe["tree"]
    assert len(pipe["objects"]) == 10_000
    queries = sample_queries(pipe["spec"], 50, SEED_PROTEIN, objects=pipe["objects"])

    unbounded = 0
    for q in queries:
        stats = QueryStats()
        knn_query(tree, q, 10, stats=stats)
        unbounded += stats.distance_calls
    bounded = 0
    nonempty = 0
    for q in queries:
        stats = QueryStats()
        res = knn_query(tree, q, 10, r_bound=0.02 * len(q.symbols), stats=stats)
        bounded += stats.distance_calls
        nonempty += bool(len(res))
    # Short queries get a bound under their edit distance to the corpus and
    # legitimately come back empty; most queries must still find neighbors.
    assert nonempty >= len(queries) // 2
    assert bounded <= 0.5 * unbounded
    assert time.perf_counter() - start < 600.0


@pytest.mark.acceptance(8, "build cost is cascade-invariant, O(N log N); height is ceil(log2 N)")
def test_08_build_cost_and_height():
    for exp, n, trees in power_builds():
        calls = {t.build_distance_calls for t in trees}
        assert len(calls) == 1
        assert calls.pop() < 1.1 * n * exp
        for t in trees:
            assert t.height == exp
    sweep = sweep_results()
    assert sweep["bad_heights"] == []


@pytest.mark.acceptance(9, "validate_tree passes on every tree and catches an injected fault")
def test_09_validation_everywhere_and_fault_injection():
    for pipeline in (pipeline_oracle, pipeline_range10, pipeline_knn3):
        for tree in pipeline()["trees"].values():
            assert validate_tree(tree) == []
    assert validate_tree(fasta_pipeline()["tree"]) == []
    for _, _, tree, _, _ in small_mixed_trees():
        assert validate_tree(tree) == []
    for _, _, trees in power_builds():
        for tree in trees:
            assert validate_tree(tree) == []
    assert sweep_results()["violations"] == 0

    objects = gen_uniform_points(300, 3, 93)
    tree = build_cmt(objects, euclidean_distance,
                     BuildConfig(cascade_limit=math.inf, seed=93))
    tree.far[tree.offs[0]] -= 0.5
    found = validate_tree(tree)
    assert any(v.position == 0 and v.kind == "far" for v in found)


@pytest.mark.acceptance(10, "battery reruns with identical seeds are byte-identical")
def test_10_reruns_are_byte_identical():
    first = _memo("csv_oracle", oracle_battery_csv)
    assert oracle_battery_csv()["csv"] == first["csv"]

    first = _memo("csv_range10", range10_battery_csv)
    assert range10_battery_csv()["csv"] == first["csv"]

    first = _memo("csv_knn3", knn3_battery_csv)
    fresh = knn3_battery_csv()
    assert fresh["knn_csv"] == first["knn_csv"]
    assert fresh["opt_csv"] == first["opt_csv"]
