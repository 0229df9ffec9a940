"""Dataset generation and ingestion: uniform point clouds, FASTA files, queries.

All generators are pure functions of (spec, seed). Randomness comes from
numpy's PCG64 bit generator keyed through SeedSequence, which is stable across
platforms and numpy versions; distinct derivation salts keep the dataset,
query, and distance-estimation streams independent of each other.
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from .metrics import AMINO_ACIDS, Metric, Sequence, euclidean_distance, levenshtein_distance

log = logging.getLogger(__name__)

DATA_DIR_ENV = "CASCADE_INDEX_DATA_DIR"

# derivation salts for independent PCG64 streams under one user seed
_QUERY_STREAM = 1
_PAIR_STREAM = 2
_PROTEIN_STREAM = 3

DEFAULT_QUERY_EDITS = 5


@dataclass(frozen=True)
class DatasetSpec:
    """What to load: uniform_points uses (n, dim, seed); fasta_file uses (path, n as cap)."""

    kind: str
    n: int = 0
    dim: int = 3
    seed: int = 0
    path: str | None = None

    def __post_init__(self):
        if self.kind not in ("uniform_points", "fasta_file"):
            raise ValueError(f"unknown dataset kind: {self.kind!r}")
        if self.n < 0:
            raise ValueError(f"n must be >= 0, got {self.n}")
        if self.kind == "uniform_points" and self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.kind == "fasta_file" and not self.path:
            raise ValueError("fasta_file spec requires a path")


def _rng(entropy) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def gen_uniform_points(n: int, dim: int, seed: int) -> list[tuple[float, ...]]:
    """n points i.i.d. uniform on [0,1)^dim (PCG64 keyed by seed)."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    pts = _rng(seed).random((n, dim))
    return [tuple(map(float, row)) for row in pts]


def parse_fasta(path, cap: int | None = None) -> list[Sequence]:
    """Read FASTA records: '>' header lines (id up to first whitespace), sequence
    lines concatenated, uppercased. Returns at most cap sequences; empty records
    are skipped and counted in one warning."""
    path = os.fspath(path)
    out: list[Sequence] = []
    skipped = 0
    current_id: str | None = None
    parts: list[str] = []

    def flush():
        nonlocal skipped, current_id, parts
        if current_id is None:
            return
        symbols = "".join(parts)
        if symbols:
            out.append(Sequence(current_id, symbols))
        else:
            skipped += 1
        current_id = None
        parts = []

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith(">"):
                flush()
                if cap is not None and len(out) >= cap:
                    break
                header = line[1:].strip()
                current_id = header.split()[0] if header else ""
            else:
                if current_id is None:
                    raise ValueError(f"{path}:{lineno}: sequence data before any header")
                chunk = "".join(line.split()).upper()
                if not (chunk.isascii() and chunk.isalpha()):
                    raise ValueError(f"{path}:{lineno}: invalid sequence characters")
                parts.append(chunk)
        else:
            flush()
    if skipped:
        log.warning("%s: skipped %d empty FASTA record(s)", path, skipped)
    if cap is not None:
        out = out[:cap]
    return out


def write_fasta(path, sequences, width: int = 60) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for seq in sequences:
            fh.write(f">{seq.id}\n")
            symbols = seq.symbols
            for i in range(0, len(symbols), width):
                fh.write(symbols[i:i + width] + "\n")


def _perturb(symbols: str, edits: int, rng: np.random.Generator) -> str:
    s = list(symbols)
    for _ in range(edits):
        op = int(rng.integers(3))
        if op == 0 and s:
            s[int(rng.integers(len(s)))] = AMINO_ACIDS[int(rng.integers(20))]
        elif op == 1:
            s.insert(int(rng.integers(len(s) + 1)), AMINO_ACIDS[int(rng.integers(20))])
        elif len(s) > 1:
            del s[int(rng.integers(len(s)))]
    return "".join(s)


def gen_protein_sequences(n: int, seed: int, mean_length: int = 360,
                          family_size: int = 50) -> list[Sequence]:
    """Synthetic protein-like corpus with family structure.

    Families are generated from a random ancestor sequence (length normal around
    mean_length); members are the ancestor with 1 + Poisson(6) random edits, so
    intra-family edit distances are small against a backdrop of unrelated
    families. Lengths and composition mimic protein databases well enough for
    benchmarking; there is no biology here.
    """
    rng = _rng([seed, _PROTEIN_STREAM])
    out: list[Sequence] = []
    fid = 0
    while len(out) < n:
        fid += 1
        length = max(40, int(rng.normal(mean_length, 0.25 * mean_length)))
        ancestor = "".join(AMINO_ACIDS[i] for i in rng.integers(0, 20, length))
        for member in range(min(family_size, n - len(out))):
            edits = 1 + int(rng.poisson(6.0))
            out.append(Sequence(f"F{fid:05d}_{member:03d}", _perturb(ancestor, edits, rng)))
    return out


def load_dataset(spec: DatasetSpec) -> tuple[list, Metric]:
    if spec.kind == "uniform_points":
        return gen_uniform_points(spec.n, spec.dim, spec.seed), euclidean_distance
    cap = spec.n if spec.n > 0 else None
    return parse_fasta(resolve_data_path(spec.path), cap), levenshtein_distance


def sample_queries(spec: DatasetSpec, count: int, seed: int, objects=None,
                   edits: int = DEFAULT_QUERY_EDITS) -> list:
    """Query objects near but (almost surely) not in the dataset.

    Points come from a fresh uniform stream independent of the dataset stream;
    sequences are dataset members perturbed by `edits` random single-symbol
    edits. Deterministic given (spec, count, seed).
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = _rng([seed, _QUERY_STREAM])
    if spec.kind == "uniform_points":
        return [tuple(map(float, row)) for row in rng.random((count, spec.dim))]
    if objects is None:
        objects, _ = load_dataset(spec)
    picks = rng.integers(0, len(objects), count)
    out = []
    for qi, i in enumerate(picks):
        src = objects[int(i)]
        out.append(Sequence(f"q{qi:04d}_{src.id}", _perturb(src.symbols, edits, rng)))
    return out


def estimate_max_distance(objects, metric: Metric, seed: int, pairs: int = 1000) -> float:
    """Max metric value over `pairs` random object pairs (radius-grid scale)."""
    n = len(objects)
    if n < 2:
        return 0.0
    rng = _rng([seed, _PAIR_STREAM])
    left = rng.integers(0, n, pairs)
    right = rng.integers(0, n, pairs)
    return max(metric(objects[int(a)], objects[int(b)]) for a, b in zip(left, right))


def resolve_data_path(path) -> str:
    """Resolve a dataset path, falling back to $CASCADE_INDEX_DATA_DIR/<path>."""
    p = os.fspath(path)
    if os.path.isabs(p) or os.path.exists(p):
        return p
    base = os.environ.get(DATA_DIR_ENV)
    if base:
        candidate = os.path.join(base, p)
        if os.path.exists(candidate):
            return candidate
    return p
