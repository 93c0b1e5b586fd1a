"""Graph loading, generation and normalization."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import networkx as nx
import numpy as np
import scipy.sparse as sp

from ..errors import (
    EdgeListParseError,
    NonFiniteValueError,
    SelfLoopError,
    UsageError,
    VertexBoundsError,
)

logger = logging.getLogger(__name__)


class Role(IntEnum):
    """Per-vertex mask role."""

    NONE = 0
    TRAIN = 1
    VAL = 2
    TEST = 3


@dataclass(frozen=True, slots=True)
class Graph:
    """
    Immutable undirected graph.

    `edges` keeps every undirected edge once, as (min, max), in first-seen
    order; `adjacency` is the symmetric CSR expansion with unit weights.
    """

    num_vertices: int
    edges: np.ndarray
    adjacency: sp.csr_matrix = field(repr=False)
    degrees: np.ndarray = field(repr=False)

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @classmethod
    def from_edges(cls, num_vertices: int, edges: np.ndarray) -> Graph:
        """
        Build a graph from canonical, deduplicated (u, v) pairs.

        Args:
            num_vertices: Vertex count
            edges: Integer array of shape (m, 2)

        Returns:
            Graph with CSR adjacency and degrees
        """
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        data = np.ones(rows.shape[0], dtype=np.float64)
        adjacency = sp.csr_matrix((data, (rows, cols)), shape=(num_vertices, num_vertices))
        adjacency.sort_indices()
        degrees = np.diff(adjacency.indptr).astype(np.int64)
        return cls(num_vertices=num_vertices, edges=edges, adjacency=adjacency, degrees=degrees)


@dataclass(frozen=True, slots=True)
class NormalizedAdjacency:
    """Symmetric normalized adjacency; entry (u, v) = (deg(u)·deg(v))^-1/2."""

    matrix: sp.csr_matrix = field(repr=False)
    self_loops: bool = False


@dataclass(frozen=True, slots=True)
class FeatureMatrix:
    values: np.ndarray

    @property
    def rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])


@dataclass(frozen=True, slots=True)
class LabelSet:
    labels: np.ndarray
    num_classes: int
    masks: np.ndarray

    def mask(self, role: Role) -> np.ndarray:
        return self.masks == int(role)


@dataclass(frozen=True, slots=True)
class Dataset:
    """Graph plus the per-vertex data every worker replicates."""

    graph: Graph
    features: FeatureMatrix
    labels: LabelSet

    def validate(self) -> None:
        """
        Check cross-object invariants.

        Raises:
            NonFiniteValueError: If features contain NaN/inf
            VertexBoundsError: If row counts disagree or a masked label is out of range
        """
        if self.features.rows != self.graph.num_vertices:
            raise VertexBoundsError(
                f"feature rows {self.features.rows} != vertices {self.graph.num_vertices}"
            )
        if self.labels.labels.shape[0] != self.graph.num_vertices:
            raise VertexBoundsError("label count does not match vertex count")
        if not np.all(np.isfinite(self.features.values)):
            raise NonFiniteValueError("feature matrix contains non-finite values")
        masked = self.labels.masks != int(Role.NONE)
        if np.any(self.labels.labels[masked] >= self.labels.num_classes):
            raise VertexBoundsError("masked vertex label >= num_classes")
        unreferenced = (~masked) & (self.graph.degrees == 0)
        if np.any(unreferenced):
            raise VertexBoundsError(
                f"{int(unreferenced.sum())} vertices are in no mask and on no edge"
            )


def load_edge_list(path: str | Path) -> Graph:
    """
    Parse an undirected edge list.

    Lines are "u v" pairs; '#' starts a comment; an optional "n <count>"
    header declares the vertex count (allowing isolated vertices).

    Args:
        path: Edge-list file path

    Returns:
        Graph with duplicate edges removed

    Raises:
        EdgeListParseError: On a malformed line
        VertexBoundsError: On an endpoint >= declared n
        SelfLoopError: On a "u u" line
    """
    declared: int | None = None
    seen: set[tuple[int, int]] = set()
    ordered: list[tuple[int, int]] = []
    max_id = -1

    with open(path, encoding="utf-8") as f:
        for line_number, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise EdgeListParseError(line_number, raw.rstrip("\n"))
            if parts[0] == "n":
                if declared is not None or ordered:
                    raise EdgeListParseError(line_number, raw.rstrip("\n"))
                declared = _parse_int(parts[1], line_number, raw)
                if declared < 0:
                    raise EdgeListParseError(line_number, raw.rstrip("\n"))
                continue
            u = _parse_int(parts[0], line_number, raw)
            v = _parse_int(parts[1], line_number, raw)
            if u < 0 or v < 0:
                raise EdgeListParseError(line_number, raw.rstrip("\n"))
            if declared is not None and max(u, v) >= declared:
                raise VertexBoundsError(
                    f"line {line_number}: endpoint {max(u, v)} >= declared n={declared}"
                )
            if u == v:
                raise SelfLoopError(f"line {line_number}: self-loop on vertex {u}")
            key = (min(u, v), max(u, v))
            if key in seen:
                continue
            seen.add(key)
            ordered.append(key)
            max_id = max(max_id, key[1])

    num_vertices = declared if declared is not None else max_id + 1
    graph = Graph.from_edges(num_vertices, np.array(ordered, dtype=np.int64).reshape(-1, 2))
    logger.info(
        "edge list loaded",
        extra={"path": str(path), "vertices": num_vertices, "edges": graph.num_edges},
    )
    return graph


def _parse_int(token: str, line_number: int, raw: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise EdgeListParseError(line_number, raw.rstrip("\n")) from None


def write_edge_list(graph: Graph, path: str | Path) -> None:
    """Write the graph with an "n <count>" header, one edge per line."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"n {graph.num_vertices}\n")
        for u, v in graph.edges.tolist():
            f.write(f"{u} {v}\n")


def normalize(
    graph: Graph,
    self_loops: bool = False,
    dtype: np.dtype | type = np.float64,
) -> NormalizedAdjacency:
    """
    Compute D^-1/2 A D^-1/2 with the graph's sparsity pattern.

    Each weight is evaluated as 1/sqrt(deg(u)·deg(v)) so symmetric pairs are
    bit-identical. Zero-degree rows stay empty.

    Args:
        graph: Input graph
        self_loops: Use A + I and degree + 1 instead of the literal formula
        dtype: Output precision

    Returns:
        NormalizedAdjacency with sorted CSR indices
    """
    pattern = graph.adjacency
    degrees = graph.degrees.astype(np.float64)
    if self_loops:
        pattern = (pattern + sp.identity(graph.num_vertices, format="csr")).tocsr()
        pattern.sort_indices()
        degrees = degrees + 1.0
    rows = np.repeat(np.arange(graph.num_vertices), np.diff(pattern.indptr))
    cols = pattern.indices
    weights = 1.0 / np.sqrt(degrees[rows] * degrees[cols])
    matrix = sp.csr_matrix(
        (weights.astype(dtype), cols.copy(), pattern.indptr.copy()),
        shape=pattern.shape,
    )
    matrix.sort_indices()
    return NormalizedAdjacency(matrix=matrix, self_loops=self_loops)


def gen_power_law(n: int, edges_per_vertex: int, seed: int) -> Graph:
    """
    Preferential-attachment graph (Barabási–Albert).

    Args:
        n: Vertex count
        edges_per_vertex: Edges attached by each new vertex
        seed: Generator seed

    Returns:
        Connected graph with m·(n - m) edges

    Raises:
        UsageError: If n < edges_per_vertex + 1 or edges_per_vertex < 1
    """
    if edges_per_vertex < 1 or n < edges_per_vertex + 1:
        raise UsageError(
            f"power-law generator needs n >= m + 1 and m >= 1 (n={n}, m={edges_per_vertex})"
        )
    nx_graph = nx.barabasi_albert_graph(n, edges_per_vertex, seed=seed)
    edges = np.array(
        [(min(u, v), max(u, v)) for u, v in nx_graph.edges()], dtype=np.int64
    ).reshape(-1, 2)
    return Graph.from_edges(n, edges)


def gen_planted_features(
    graph: Graph,
    num_classes: int,
    dim: int,
    noise: float,
    seed: int,
    smoothing_rounds: int = 2,
) -> tuple[FeatureMatrix, LabelSet]:
    """
    Plant a homophilous labeling and class-centroid features.

    Labels are the argmax of random per-class scores diffused over
    (I + A) for `smoothing_rounds` rounds, so neighbors tend to share a
    class. Features are the class centroid plus Gaussian noise of scale
    `noise`. Masks split 60/20/20 by a seeded shuffle.

    Args:
        graph: Graph to label
        num_classes: Number of classes (>= 2)
        dim: Feature dimension
        noise: Noise scale in [0, 1)
        seed: Generator seed

    Returns:
        (features, labels)

    Raises:
        UsageError: On invalid arguments
    """
    if num_classes < 2:
        raise UsageError("num_classes must be >= 2")
    if not 0.0 <= noise < 1.0:
        raise UsageError("noise must be in [0, 1)")
    if dim < 1:
        raise UsageError("dim must be >= 1")

    rng = np.random.default_rng(seed)
    n = graph.num_vertices

    scores = rng.standard_normal((n, num_classes))
    smoother = (graph.adjacency + sp.identity(n, format="csr")).tocsr()
    for _ in range(smoothing_rounds):
        scores = smoother @ scores
        # нормируем, чтобы хабы не доминировали по масштабу
        scores = scores / np.maximum(np.abs(scores).max(axis=1, keepdims=True), 1e-12)
    labels = np.argmax(scores, axis=1).astype(np.int64)

    centroids = rng.standard_normal((num_classes, dim))
    values = centroids[labels] + noise * rng.standard_normal((n, dim))

    order = rng.permutation(n)
    n_train = int(round(0.6 * n))
    n_val = int(round(0.2 * n))
    masks = np.full(n, int(Role.TEST), dtype=np.int8)
    masks[order[:n_train]] = int(Role.TRAIN)
    masks[order[n_train : n_train + n_val]] = int(Role.VAL)

    return (
        FeatureMatrix(values=values.astype(np.float64)),
        LabelSet(labels=labels, num_classes=num_classes, masks=masks),
    )
