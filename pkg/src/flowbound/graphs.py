"""Undirected graphs for the vertex-coverage task, plus generators and IO."""

from __future__ import annotations

import math
from collections.abc import Iterable, Iterator
from pathlib import Path

import numpy as np

from .validation import as_rng


class EdgeListParseError(ValueError):
    """Malformed edge-list file; carries the offending line number."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class CoverageGraph:
    """An undirected simple graph stored as per-vertex neighbor bit masks.

    Self-loops and duplicate edges are dropped at construction.  The mask
    representation makes the coverage reward a popcount of OR-ed masks and
    keeps it exact (integer arithmetic until the final normalization).
    """

    def __init__(self, num_vertices: int, edges: Iterable[tuple[int, int]]):
        if num_vertices < 1:
            raise ValueError("graph needs at least one vertex")
        masks = [0] * num_vertices
        count = 0
        for u, v in edges:
            if not (0 <= u < num_vertices and 0 <= v < num_vertices):
                raise ValueError(f"edge ({u}, {v}) out of range for {num_vertices} vertices")
            if u == v:
                continue
            if masks[u] >> v & 1:
                continue
            masks[u] |= 1 << v
            masks[v] |= 1 << u
            count += 1
        self.num_vertices = num_vertices
        self.neighbor_masks: tuple[int, ...] = tuple(masks)
        self.num_edges = count
        self._packed: np.ndarray | None = None

    def degree(self, v: int) -> int:
        return self.neighbor_masks[v].bit_count()

    def degrees(self) -> np.ndarray:
        return np.array([m.bit_count() for m in self.neighbor_masks])

    def edges(self) -> Iterator[tuple[int, int]]:
        """All edges (u, v) with u < v, in increasing order."""
        for u, m in enumerate(self.neighbor_masks):
            m >>= u + 1
            v = u + 1
            while m:
                if m & 1:
                    yield (u, v)
                m >>= 1
                v += 1

    def packed_neighbors(self) -> np.ndarray:
        """Neighbor masks as a (num_vertices, words) uint64 array for batch ops."""
        if self._packed is None:
            words = (self.num_vertices + 63) // 64
            packed = np.zeros((self.num_vertices, words), dtype=np.uint64)
            for v, m in enumerate(self.neighbor_masks):
                w = 0
                while m:
                    packed[v, w] = m & 0xFFFFFFFFFFFFFFFF
                    m >>= 64
                    w += 1
            self._packed = packed
        return self._packed

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, CoverageGraph)
            and self.num_vertices == other.num_vertices
            and self.neighbor_masks == other.neighbor_masks
        )

    def __repr__(self) -> str:
        return f"CoverageGraph(num_vertices={self.num_vertices}, num_edges={self.num_edges})"


def generate_er(n: int, edge_prob: float, seed: int) -> CoverageGraph:
    """Erdős–Rényi G(n, p): each unordered pair is an edge independently."""
    if not 0.0 <= edge_prob <= 1.0:
        raise ValueError(f"edge probability must be in [0, 1], got {edge_prob}")
    rng = as_rng(seed)
    iu, iv = np.triu_indices(n, k=1)
    keep = rng.random(iu.shape[0]) < edge_prob
    return CoverageGraph(n, zip(iu[keep].tolist(), iv[keep].tolist()))


def generate_ba(n: int, attach_count: int, seed: int) -> CoverageGraph:
    """Preferential attachment starting from a clique of ``attach_count`` vertices.

    Every later vertex attaches to ``attach_count`` distinct existing
    vertices drawn (without replacement) with probability proportional to
    current degree.
    """
    if not 1 <= attach_count < n:
        raise ValueError(f"attach_count must be in [1, {n - 1}], got {attach_count}")
    rng = as_rng(seed)
    m = attach_count
    edges = [(u, v) for u in range(m) for v in range(u + 1, m)]
    degree = np.zeros(n, dtype=np.float64)
    degree[:m] = m - 1
    if m == 1:
        # A single-vertex core has degree 0; seed attachment uniformly.
        degree[0] = 1.0
    for v in range(m, n):
        weights = degree[:v].copy()
        targets = []
        for _ in range(m):
            p = weights / weights.sum()
            t = int(rng.choice(v, p=p))
            targets.append(t)
            weights[t] = 0.0
        for t in targets:
            edges.append((t, v))
            degree[t] += 1
        degree[v] += m
    graph = CoverageGraph(n, edges)
    return graph


def load_edge_list(path: str | Path) -> CoverageGraph:
    """Read an edge-list file into a graph.

    Format: one edge per line as two whitespace-separated labels (integers
    or arbitrary strings); ``#`` lines and blank lines are skipped.  Labels
    are reindexed densely 0..N-1 in first-appearance order; duplicate edges
    and self-loops are dropped.
    """
    path = Path(path)
    labels: dict[str, int] = {}
    edges: list[tuple[int, int]] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise EdgeListParseError(
                    f"expected two labels, got {len(parts)}: {line!r}", lineno
                )
            u = labels.setdefault(parts[0], len(labels))
            v = labels.setdefault(parts[1], len(labels))
            edges.append((u, v))
    if not labels:
        raise EdgeListParseError(f"no edges found in {path}")
    return CoverageGraph(len(labels), edges)


def write_edge_list(graph: CoverageGraph, path: str | Path) -> None:
    """Write one ``u v`` line per edge, u < v, in increasing order.

    The loader reindexes labels densely by first appearance, so when the
    edge order alone would not introduce vertices as 0, 1, 2, ... (or some
    vertex is isolated), a ``v v`` self-loop line per vertex is prepended:
    self-loops are dropped on load but still register their label, making
    the round trip reproduce the adjacency exactly.
    """
    path = Path(path)
    edges = list(graph.edges())
    seen: dict[int, None] = {}
    for u, v in edges:
        seen.setdefault(u)
        seen.setdefault(v)
    identity_order = list(seen) == list(range(graph.num_vertices))
    with path.open("w", encoding="utf-8") as fh:
        if not identity_order:
            for v in range(graph.num_vertices):
                fh.write(f"{v} {v}\n")
        for u, v in edges:
            fh.write(f"{u} {v}\n")


def expected_er_edges(n: int, edge_prob: float) -> float:
    return edge_prob * math.comb(n, 2)
