"""Cascaded metric trees: metric-space indexing with distance-interval pruning.

A CMT is a balanced binary tree over an arbitrary metric space. Each node keeps
min/max distance intervals from its own object and from its ancestors' objects
to everything below; queries use those intervals both to prune subtrees that
cannot contain results and to collect subtrees that are guaranteed to. The
cascade_limit build knob controls how many ancestral levels are stored:
0 degenerates to a classic middle-partitioning metric tree, 1 keeps a single
ancestral level, unbounded keeps them all.
"""

from .data import (
    DatasetSpec,
    estimate_max_distance,
    gen_protein_sequences,
    gen_uniform_points,
    load_dataset,
    parse_fasta,
    sample_queries,
    write_fasta,
)
from .metrics import (
    CountingMetric,
    Metric,
    Sequence,
    euclidean_distance,
    levenshtein_distance,
    metric_from_tag,
    metric_tag,
)
from .query import (
    PqEntry,
    QueryState,
    QueryStats,
    ResultSet,
    basic_range_query,
    brute_force_knn,
    brute_force_range,
    collect_range_query,
    collection_distance,
    counting_query,
    interval_pruning_distance,
    knn_query,
    max_pruning_distance,
    min_collection_distance,
    pruning_distance,
    range_optimality_ratio,
)
from .tree import (
    BuildConfig,
    BuildError,
    CmtNode,
    CmtTree,
    DistanceInterval,
    Violation,
    build_cmt,
    child_sizes,
    compute_adiv,
    load_tree,
    partition_bom,
    save_tree,
    tree_from_bytes,
    tree_to_bytes,
    validate_tree,
)

__version__ = "0.1.0"

__all__ = [
    "BuildConfig",
    "BuildError",
    "CmtNode",
    "CmtTree",
    "CountingMetric",
    "DatasetSpec",
    "DistanceInterval",
    "Metric",
    "PqEntry",
    "QueryState",
    "QueryStats",
    "ResultSet",
    "Sequence",
    "Violation",
    "basic_range_query",
    "brute_force_knn",
    "brute_force_range",
    "build_cmt",
    "child_sizes",
    "collect_range_query",
    "collection_distance",
    "compute_adiv",
    "counting_query",
    "estimate_max_distance",
    "euclidean_distance",
    "gen_protein_sequences",
    "gen_uniform_points",
    "interval_pruning_distance",
    "knn_query",
    "levenshtein_distance",
    "load_dataset",
    "load_tree",
    "max_pruning_distance",
    "metric_from_tag",
    "metric_tag",
    "min_collection_distance",
    "parse_fasta",
    "partition_bom",
    "pruning_distance",
    "range_optimality_ratio",
    "sample_queries",
    "save_tree",
    "tree_from_bytes",
    "tree_to_bytes",
    "validate_tree",
    "write_fasta",
    "__version__",
]
