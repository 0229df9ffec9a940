"""Benchmark and inspection CLI.

Builds trees over generated or ingested datasets, runs query batteries across
cascade settings, and emits one CSV row per experiment cell. Without --timings
the CSV is byte-identical across reruns of the same configuration; wall-clock
columns are left empty because they can never be.

Exit codes: 0 success, 1 verification failure, 2 configuration error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
import time

from .data import (
    DatasetSpec,
    estimate_max_distance,
    load_dataset,
    sample_queries,
)
from .metrics import Sequence, metric_tag
from .query import (
    QueryStats,
    brute_force_knn,
    brute_force_range,
    collect_range_query,
    knn_query,
    range_optimality_ratio,
)
from .tree import BuildConfig, build_cmt, load_tree, save_tree

CASCADE_NAMES = {"0": 0, "1": 1, "inf": math.inf}

HEADER = [
    "command", "dataset", "metric", "n", "dim", "seed", "queries", "cascade",
    "radius_frac", "radius", "k", "bound_pct", "r_bound", "result_frac",
    "mean_result_size", "min_result_size", "max_result_size",
    "mean_distance_calls", "min_distance_calls", "max_distance_calls",
    "mean_nodes_visited", "min_nodes_visited", "max_nodes_visited",
    "mean_objects_collected", "min_objects_collected", "max_objects_collected",
    "mean_optimality_ratio", "min_optimality_ratio", "max_optimality_ratio",
    "mean_wall_ms", "min_wall_ms", "max_wall_ms",
]


class ConfigError(Exception):
    pass


def fmt(value) -> str:
    if value is None or value == "":
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if value == math.inf:
        return "inf"
    return "%.6g" % value


def cascade_name(cl) -> str:
    return "inf" if cl == math.inf else str(int(cl))


def parse_cascades(text: str) -> list:
    out = []
    for part in text.split(","):
        part = part.strip()
        if part not in CASCADE_NAMES:
            raise ConfigError(f"--cascade entries must be one of 0,1,inf; got {part!r}")
        value = CASCADE_NAMES[part]
        if value not in out:
            out.append(value)
    if not out:
        raise ConfigError("--cascade needs at least one setting")
    return out


def parse_floats(text: str, flag: str, minimum: float) -> list[float]:
    try:
        values = [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"{flag} expects a comma-separated list of numbers, got {text!r}")
    if not values:
        raise ConfigError(f"{flag} needs at least one value")
    for v in values:
        if v < minimum:
            raise ConfigError(f"{flag} values must be >= {minimum}, got {v}")
    return values


def parse_ints(text: str, flag: str, minimum: int) -> list[int]:
    try:
        values = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"{flag} expects a comma-separated list of integers, got {text!r}")
    if not values:
        raise ConfigError(f"{flag} needs at least one value")
    for v in values:
        if v < minimum:
            raise ConfigError(f"{flag} values must be >= {minimum}, got {v}")
    return values


def dataset_spec_from_args(args) -> DatasetSpec:
    if args.dataset == "uniform":
        return DatasetSpec("uniform_points", n=args.n, dim=args.dim, seed=args.seed)
    if not args.path:
        raise ConfigError("--dataset fasta requires --path")
    return DatasetSpec("fasta_file", n=args.cap, seed=args.seed, path=args.path)


def prepare_trees(objects, metric, cascades, seed) -> dict:
    """One tree per cascade setting; built once at the deepest setting and
    truncated for the others (bitwise-identical to direct builds)."""
    top = max(cascades)
    base = build_cmt(objects, metric, BuildConfig(cascade_limit=top, seed=seed))
    return {cl: (base if cl == top else base.with_cascade_limit(cl)) for cl in cascades}


def _blank_row() -> dict:
    return {key: "" for key in HEADER}


def _aggregate(row: dict, prefix: str, values: list) -> None:
    row[f"mean_{prefix}"] = fmt(sum(values) / len(values))
    row[f"min_{prefix}"] = fmt(min(values))
    row[f"max_{prefix}"] = fmt(max(values))


def _echo(row: dict, command: str, spec: DatasetSpec, metric, n: int, queries: int) -> None:
    row["command"] = command
    row["dataset"] = "uniform" if spec.kind == "uniform_points" else "fasta"
    row["metric"] = metric_tag(metric) or "custom"
    row["n"] = fmt(n)
    row["dim"] = fmt(spec.dim) if spec.kind == "uniform_points" else ""
    row["seed"] = fmt(spec.seed)
    row["queries"] = fmt(queries)


class VerifyFailure(Exception):
    """Raised internally; carries the dump of mismatched queries."""

    def __init__(self, lines):
        super().__init__("verification failed")
        self.lines = lines


def run_range_battery(spec, objects, metric, trees, queries, radii_fracs,
                      verify=False, timings=False):
    """Rows for the (cascade x radius) grid; raises VerifyFailure on oracle mismatch."""
    n = len(objects)
    est = estimate_max_distance(objects, metric, spec.seed)
    rows = []
    failures = []
    for frac in radii_fracs:
        radius = frac * est
        oracle = None
        if verify:
            oracle = [brute_force_range(objects, metric, q, radius).index_set()
                      for q in queries]
        for cl, tree in trees.items():
            sizes, calls, visited, collected, walls = [], [], [], [], []
            for qi, q in enumerate(queries):
                stats = QueryStats()
                t0 = time.perf_counter()
                res = collect_range_query(tree, q, radius, stats)
                walls.append((time.perf_counter() - t0) * 1e3)
                sizes.append(len(res))
                calls.append(stats.distance_calls)
                visited.append(stats.nodes_visited)
                collected.append(stats.objects_collected)
                if oracle is not None and res.index_set() != oracle[qi]:
                    failures.append(
                        f"range cascade={cascade_name(cl)} radius={fmt(radius)} query#{qi} "
                        f"q={q!r}: missing={sorted(oracle[qi] - res.index_set())[:8]} "
                        f"unexpected={sorted(res.index_set() - oracle[qi])[:8]}"
                    )
            row = _blank_row()
            _echo(row, "range", spec, metric, n, len(queries))
            row["cascade"] = cascade_name(cl)
            row["radius_frac"] = fmt(frac)
            row["radius"] = fmt(radius)
            _aggregate(row, "result_size", sizes)
            row["result_frac"] = fmt(sum(sizes) / len(sizes) / n) if n else ""
            _aggregate(row, "distance_calls", calls)
            _aggregate(row, "nodes_visited", visited)
            _aggregate(row, "objects_collected", collected)
            if timings:
                _aggregate(row, "wall_ms", walls)
            rows.append(row)
    if failures:
        raise VerifyFailure(failures)
    return rows


def _bound_for(q, pct, est) -> float:
    if pct is None:
        return math.inf
    if isinstance(q, (Sequence, str)):
        return pct / 100.0 * len(q)
    return pct / 100.0 * est


def run_knn_battery(spec, objects, metric, trees, queries, ks, bound_pcts=None,
                    verify=False, timings=False):
    """Rows for the (cascade x k x bound) grid. Bound percentages are relative to
    the query length for sequences and to the sampled max pairwise distance for
    points; no --bound-pct means unbounded."""
    n = len(objects)
    pcts = list(bound_pcts) if bound_pcts else [None]
    est = estimate_max_distance(objects, metric, spec.seed) if any(
        p is not None for p in pcts) else 0.0
    rows = []
    failures = []
    for k in ks:
        for pct in pcts:
            bounds = [_bound_for(q, pct, est) for q in queries]
            oracle = None
            if verify:
                oracle = [brute_force_knn(objects, metric, q, k, b).distances()
                          for q, b in zip(queries, bounds)]
            for cl, tree in trees.items():
                sizes, calls, visited, collected, walls = [], [], [], [], []
                for qi, q in enumerate(queries):
                    stats = QueryStats()
                    t0 = time.perf_counter()
                    res = knn_query(tree, q, k, bounds[qi], stats)
                    walls.append((time.perf_counter() - t0) * 1e3)
                    sizes.append(len(res))
                    calls.append(stats.distance_calls)
                    visited.append(stats.nodes_visited)
                    collected.append(stats.objects_collected)
                    if oracle is not None and res.distances() != oracle[qi]:
                        failures.append(
                            f"knn cascade={cascade_name(cl)} k={k} bound_pct={pct} query#{qi} "
                            f"q={q!r}: got {res.distances()[:6]}... want {oracle[qi][:6]}..."
                        )
                row = _blank_row()
                _echo(row, "knn", spec, metric, n, len(queries))
                row["cascade"] = cascade_name(cl)
                row["k"] = fmt(k)
                row["bound_pct"] = fmt(pct) if pct is not None else ""
                row["r_bound"] = fmt(sum(bounds) / len(bounds)) if pct is not None else "inf"
                _aggregate(row, "result_size", sizes)
                row["result_frac"] = fmt(sum(sizes) / len(sizes) / n) if n else ""
                _aggregate(row, "distance_calls", calls)
                _aggregate(row, "nodes_visited", visited)
                _aggregate(row, "objects_collected", collected)
                if timings:
                    _aggregate(row, "wall_ms", walls)
                rows.append(row)
    if failures:
        raise VerifyFailure(failures)
    return rows


def run_optimality_battery(spec, objects, metric, trees, queries, ks,
                           verify=False, timings=False):
    """Rows of range-optimality ratios per (cascade x k)."""
    n = len(objects)
    rows = []
    failures = []
    for k in ks:
        if k > n:
            raise ConfigError(f"--k {k} exceeds dataset size {n}")
        oracle = None
        if verify:
            oracle = [brute_force_knn(objects, metric, q, k).distances() for q in queries]
        for cl, tree in trees.items():
            ratios, calls, walls = [], [], []
            for qi, q in enumerate(queries):
                stats = QueryStats()
                t0 = time.perf_counter()
                ratio = range_optimality_ratio(tree, q, k, stats)
                walls.append((time.perf_counter() - t0) * 1e3)
                ratios.append(ratio)
                calls.append(stats.distance_calls)
                if oracle is not None:
                    got = knn_query(tree, q, k).distances()
                    if got != oracle[qi]:
                        failures.append(
                            f"optimality cascade={cascade_name(cl)} k={k} query#{qi} "
                            f"q={q!r}: got {got[:6]}... want {oracle[qi][:6]}..."
                        )
            row = _blank_row()
            _echo(row, "optimality", spec, metric, n, len(queries))
            row["cascade"] = cascade_name(cl)
            row["k"] = fmt(k)
            _aggregate(row, "distance_calls", calls)
            _aggregate(row, "optimality_ratio", ratios)
            if timings:
                _aggregate(row, "wall_ms", walls)
            rows.append(row)
    if failures:
        raise VerifyFailure(failures)
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=HEADER, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _write_output(text: str, out_path) -> None:
    if not out_path or out_path == "-":
        sys.stdout.write(text)
    else:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _load_or_build(args, cascades):
    """Returns (spec, objects, metric, trees)."""
    if args.tree and os.path.exists(args.tree):
        stored = load_tree(args.tree)
        objects, metric = stored.objects, stored.metric
        for cl in cascades:
            if cl > stored.cascade_limit:
                raise ConfigError(
                    f"stored tree holds cascade_limit={cascade_name(stored.cascade_limit)}; "
                    f"cannot serve cascade={cascade_name(cl)} (rebuild without --tree)"
                )
        trees = {cl: (stored if cl == stored.cascade_limit else stored.with_cascade_limit(cl))
                 for cl in cascades}
        if metric_tag(metric) == "euclidean":
            dim = len(objects[0]) if objects else 1
            spec = DatasetSpec("uniform_points", n=len(objects), dim=dim, seed=args.seed)
        else:
            spec = DatasetSpec("fasta_file", n=len(objects), seed=args.seed,
                               path=args.path or args.tree)
        return spec, objects, metric, trees
    spec = dataset_spec_from_args(args)
    objects, metric = load_dataset(spec)
    trees = prepare_trees(objects, metric, cascades, args.seed)
    return spec, objects, metric, trees


def cmd_build(args) -> int:
    cascades = parse_cascades(args.cascade)
    if len(cascades) != 1:
        raise ConfigError("build takes exactly one --cascade setting")
    if not args.tree:
        raise ConfigError("build requires --tree <output path>")
    spec = dataset_spec_from_args(args)
    objects, metric = load_dataset(spec)
    tree = build_cmt(objects, metric, BuildConfig(cascade_limit=cascades[0], seed=args.seed))
    save_tree(tree, args.tree)
    print(f"dataset={args.dataset} metric={metric_tag(metric)} n={tree.size}")
    print(f"cascade={cascade_name(tree.cascade_limit)} seed={args.seed}")
    print(f"height={tree.height} build_distance_calls={tree.build_distance_calls}")
    print(f"tree written to {args.tree} ({os.path.getsize(args.tree)} bytes)")
    return 0


def _query_command(args, runner, **extra) -> int:
    cascades = parse_cascades(args.cascade)
    spec, objects, metric, trees = _load_or_build(args, cascades)
    if not objects:
        raise ConfigError("dataset is empty; nothing to query")
    queries = sample_queries(spec, args.queries, args.seed, objects=objects)
    try:
        rows = runner(spec, objects, metric, trees, queries,
                      verify=args.verify, timings=args.timings, **extra)
    except VerifyFailure as vf:
        for line in vf.lines[:20]:
            print(f"VERIFY FAIL {line}", file=sys.stderr)
        if len(vf.lines) > 20:
            print(f"... and {len(vf.lines) - 20} more", file=sys.stderr)
        return 1
    _write_output(rows_to_csv(rows), args.out)
    return 0


def cmd_range(args) -> int:
    radii = parse_floats(args.radii, "--radii", minimum=0.0)
    return _query_command(args, run_range_battery, radii_fracs=radii)


def cmd_knn(args) -> int:
    ks = parse_ints(args.k, "--k", minimum=1)
    pcts = parse_floats(args.bound_pct, "--bound-pct", minimum=0.0) if args.bound_pct else None
    return _query_command(args, run_knn_battery, ks=ks, bound_pcts=pcts)


def cmd_optimality(args) -> int:
    ks = parse_ints(args.k, "--k", minimum=1)
    return _query_command(args, run_optimality_battery, ks=ks)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmtree",
        description="Cascaded metric tree benchmarks: build trees, run range/kNN "
                    "batteries across cascade settings, emit CSV.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--dataset", choices=["uniform", "fasta"], default="uniform")
    common.add_argument("--n", type=int, default=1000, help="object count (uniform)")
    common.add_argument("--dim", type=int, default=3, help="dimension (uniform)")
    common.add_argument("--path", default=None, help="FASTA file (fasta)")
    common.add_argument("--cap", type=int, default=0, help="max sequences to read (fasta)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tree", default=None,
                        help="serialized tree path (output for build; reused if it exists)")
    common.add_argument("--cascade", default="inf",
                        help="cascade settings to compare, comma-separated from {0,1,inf}")

    query = argparse.ArgumentParser(add_help=False)
    query.add_argument("--queries", type=int, default=100)
    query.add_argument("--verify", action="store_true",
                       help="check every query against the brute-force oracle")
    query.add_argument("--out", default=None, help="CSV output path (default stdout)")
    query.add_argument("--timings", action="store_true",
                       help="fill wall-clock columns (breaks byte-identical reruns)")

    p_build = sub.add_parser("build", parents=[common], help="build and serialize a tree")
    p_build.set_defaults(func=cmd_build)

    p_range = sub.add_parser("range", parents=[common, query],
                             help="range-query battery over a radius grid")
    p_range.add_argument("--radii", required=True,
                         help="radius grid as fractions of the sampled max pairwise distance")
    p_range.set_defaults(func=cmd_range)

    p_knn = sub.add_parser("knn", parents=[common, query],
                           help="kNN battery over a k grid, optionally range-bounded")
    p_knn.add_argument("--k", required=True, help="comma-separated k grid")
    p_knn.add_argument("--bound-pct", default=None,
                       help="radius bounds as percent of query length (sequences) "
                            "or of the sampled max pairwise distance (points)")
    p_knn.set_defaults(func=cmd_knn)

    p_opt = sub.add_parser("optimality", parents=[common, query],
                           help="range-optimality ratio per (cascade, k)")
    p_opt.add_argument("--k", required=True, help="comma-separated k grid")
    p_opt.set_defaults(func=cmd_optimality)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
