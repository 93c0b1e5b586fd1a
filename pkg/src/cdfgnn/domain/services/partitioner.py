"""Streaming vertex-cut partitioning with a host-aware evaluation function."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import PlanIntegrityError, UsageError
from ..models import ClusterShape, PartitionStats
from .graph_store import Graph, NormalizedAdjacency

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 1.0
DEFAULT_BETA = 1.0
DEFAULT_GAMMA = 0.1
DEFAULT_EDGE_ORDER_SEED = 1


@dataclass(slots=True)
class PartitionerState:
    """Replica bookkeeping of the streaming pass."""

    d_rep: list[set[int]]
    h_rep: list[set[int]]
    e_count: list[int]
    v_count: list[int]
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    gamma: float = DEFAULT_GAMMA

    @classmethod
    def empty(
        cls,
        num_vertices: int,
        p: int,
        alpha: float = DEFAULT_ALPHA,
        beta: float = DEFAULT_BETA,
        gamma: float = DEFAULT_GAMMA,
    ) -> PartitionerState:
        return cls(
            d_rep=[set() for _ in range(num_vertices)],
            h_rep=[set() for _ in range(num_vertices)],
            e_count=[0] * p,
            v_count=[0] * p,
            alpha=alpha,
            beta=beta,
            gamma=gamma,
        )

    def place(self, vertex: int, worker: int, cluster: ClusterShape) -> bool:
        """Record a replica; returns True when it is the vertex's first one."""
        first = not self.d_rep[vertex]
        if worker not in self.d_rep[vertex]:
            self.d_rep[vertex].add(worker)
            self.h_rep[vertex].add(cluster.host_of(worker))
            self.v_count[worker] += 1
        return first


@dataclass(frozen=True, slots=True)
class WorkerPartition:
    """One worker's subgraph in local IDs (ascending global-ID order)."""

    worker_id: int
    global_ids: np.ndarray
    edges: np.ndarray
    master_flags: np.ndarray

    @property
    def num_local(self) -> int:
        return int(self.global_ids.shape[0])

    def local_rows(self, global_ids: np.ndarray) -> np.ndarray:
        """
        Map global IDs to local rows.

        Raises:
            KeyError: If any ID is not hosted on this worker
        """
        global_ids = np.asarray(global_ids, dtype=np.int64)
        if global_ids.size == 0:
            return np.zeros(0, dtype=np.int64)
        rows = np.searchsorted(self.global_ids, global_ids)
        rows = np.minimum(rows, max(self.num_local - 1, 0))
        if self.num_local == 0 or np.any(self.global_ids[rows] != global_ids):
            raise KeyError("vertex not hosted on this worker")
        return rows


@dataclass(frozen=True, slots=True)
class PartitionPlan:
    num_vertices: int
    num_edges: int
    cluster: ClusterShape
    workers: list[WorkerPartition]
    owner: np.ndarray
    replicas: list[tuple[int, ...]] = field(repr=False)

    def mirrors(self, vertex: int) -> tuple[int, ...]:
        return tuple(w for w in self.replicas[vertex] if w != self.owner[vertex])

    def replica_pairs(self) -> int:
        """Number of master↔mirror pairs (one gather message each in exact mode)."""
        return sum(len(r) - 1 for r in self.replicas)

    def validate(self) -> None:
        """
        Check the plan invariants.

        Raises:
            PlanIntegrityError: On any inconsistency
        """
        if len(self.workers) != self.cluster.p:
            raise PlanIntegrityError("worker count does not match cluster shape")
        if sum(w.edges.shape[0] for w in self.workers) != self.num_edges:
            raise PlanIntegrityError("edges are not assigned exactly once")
        hosted: list[list[int]] = [[] for _ in range(self.num_vertices)]
        for part in self.workers:
            if part.num_local and np.any(np.diff(part.global_ids) <= 0):
                raise PlanIntegrityError(f"worker {part.worker_id}: local IDs not ascending")
            if part.edges.size and (part.edges.min() < 0 or part.edges.max() >= part.num_local):
                raise PlanIntegrityError(f"worker {part.worker_id}: edge outside local range")
            for gid, is_master in zip(part.global_ids.tolist(), part.master_flags.tolist(),
                                      strict=True):
                hosted[gid].append(part.worker_id)
                if is_master != (self.owner[gid] == part.worker_id):
                    raise PlanIntegrityError(f"vertex {gid}: master flag disagrees with owner")
        for gid, workers in enumerate(hosted):
            if tuple(sorted(workers)) != self.replicas[gid]:
                raise PlanIntegrityError(f"vertex {gid}: replica set disagrees with mappings")
            if workers and self.owner[gid] not in workers:
                raise PlanIntegrityError(f"vertex {gid}: master not among replicas")


def eva(
    u: int,
    v: int,
    i: int,
    state: PartitionerState,
    cluster: ClusterShape,
    total_edges: int,
    total_vertices: int,
) -> float:
    """
    Score placing edge (u, v) on worker i; lower is better.

    Args:
        u: First endpoint
        v: Second endpoint
        i: Candidate worker
        state: Streaming state
        cluster: Cluster shape
        total_edges: |E|
        total_vertices: |V|

    Returns:
        Replication, host-locality and balance terms combined
    """
    host = cluster.host_of(i)
    gamma = state.gamma
    replica_term = (i not in state.d_rep[u]) + (i not in state.d_rep[v])
    host_term = (host not in state.h_rep[u]) + (host not in state.h_rep[v])
    p = cluster.p
    return (
        (1.0 - gamma) * replica_term
        + gamma * host_term
        + state.alpha * state.e_count[i] / (total_edges / p)
        + state.beta * state.v_count[i] / (total_vertices / p)
    )


def partition(
    graph: Graph,
    cluster: ClusterShape,
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
    gamma: float = DEFAULT_GAMMA,
    edge_order_seed: int | None = None,
) -> tuple[PartitionPlan, PartitionerState]:
    """
    Assign edges one by one to the worker minimizing `eva`.

    Ties go to the lowest worker ID; a vertex's master is the first worker it
    lands on. Vertices without edges are placed afterwards on the worker with
    the fewest replicas.

    Args:
        graph: Graph to partition
        cluster: Cluster shape
        alpha: Edge-balance weight
        beta: Vertex-balance weight
        gamma: Host-locality weight
        edge_order_seed: Shuffle the edge stream with this seed (None keeps input order)

    Returns:
        (plan, final streaming state)

    Raises:
        UsageError: On an empty graph
    """
    if graph.num_vertices == 0 or graph.num_edges == 0:
        raise UsageError("cannot partition an empty graph")

    p = cluster.p
    state = PartitionerState.empty(graph.num_vertices, p, alpha, beta, gamma)
    owner = np.full(graph.num_vertices, -1, dtype=np.int64)
    assignment = np.empty(graph.num_edges, dtype=np.int64)

    order = np.arange(graph.num_edges)
    if edge_order_seed is not None:
        order = np.random.default_rng(edge_order_seed).permutation(graph.num_edges)

    edges = graph.edges
    for idx in order.tolist():
        u, v = int(edges[idx, 0]), int(edges[idx, 1])
        best, best_score = 0, float("inf")
        for i in range(p):
            score = eva(u, v, i, state, cluster, graph.num_edges, graph.num_vertices)
            # строгое сравнение: при равенстве остаётся меньший id
            if score < best_score:
                best, best_score = i, score
        assignment[idx] = best
        state.e_count[best] += 1
        for vertex in (u, v):
            if state.place(vertex, best, cluster):
                owner[vertex] = best

    for vertex in np.flatnonzero(owner < 0).tolist():
        target = min(range(p), key=lambda i: (state.v_count[i], i))
        state.place(vertex, target, cluster)
        owner[vertex] = target

    plan = build_plan(graph, cluster, assignment, owner, edge_order=order)
    logger.info(
        "graph partitioned",
        extra={"p": p, "alpha": alpha, "beta": beta, "gamma": gamma, "edges": graph.num_edges},
    )
    return plan, state


def build_plan(
    graph: Graph,
    cluster: ClusterShape,
    assignment: np.ndarray,
    owner: np.ndarray | None = None,
    edge_order: np.ndarray | None = None,
) -> PartitionPlan:
    """
    Materialize a plan from an edge→worker assignment.

    Args:
        graph: Partitioned graph
        cluster: Cluster shape
        assignment: Worker per edge (indexed like graph.edges)
        owner: Master per vertex; derived from first assignment in edge order if None
        edge_order: Stream order used to derive first assignments

    Returns:
        Validated PartitionPlan
    """
    p = cluster.p
    n = graph.num_vertices
    assignment = np.asarray(assignment, dtype=np.int64)
    if owner is None:
        owner = np.full(n, -1, dtype=np.int64)
        stream = np.arange(graph.num_edges) if edge_order is None else edge_order
        for idx in stream.tolist():
            for vertex in graph.edges[idx].tolist():
                if owner[vertex] < 0:
                    owner[vertex] = assignment[idx]
        if np.any(owner < 0):
            raise UsageError("owner must be given for vertices without edges")

    replica_sets: list[set[int]] = [{int(owner[v])} for v in range(n)]
    for (u, v), worker in zip(graph.edges.tolist(), assignment.tolist(), strict=True):
        replica_sets[u].add(worker)
        replica_sets[v].add(worker)
    replicas = [tuple(sorted(s)) for s in replica_sets]

    workers: list[WorkerPartition] = []
    for i in range(p):
        global_ids = np.array([v for v in range(n) if i in replica_sets[v]], dtype=np.int64)
        mine = graph.edges[assignment == i]
        local = np.searchsorted(global_ids, mine) if mine.size else mine.reshape(0, 2)
        workers.append(
            WorkerPartition(
                worker_id=i,
                global_ids=global_ids,
                edges=np.asarray(local, dtype=np.int64).reshape(-1, 2),
                master_flags=owner[global_ids] == i,
            )
        )

    plan = PartitionPlan(
        num_vertices=n,
        num_edges=graph.num_edges,
        cluster=cluster,
        workers=workers,
        owner=np.asarray(owner, dtype=np.int64),
        replicas=replicas,
    )
    plan.validate()
    return plan


def local_adjacency(part: WorkerPartition, normalized: NormalizedAdjacency) -> sp.csr_matrix:
    """
    Slice this worker's share of the normalized adjacency, in local IDs.

    Every assigned edge contributes both directions with its global weight;
    with self-loops the diagonal entry goes to the vertex's master only, so
    summing the slices over workers reproduces the full matrix.

    Args:
        part: Worker partition
        normalized: Global normalized adjacency

    Returns:
        Symmetric CSR matrix of shape (num_local, num_local), sorted indices
    """
    matrix = normalized.matrix
    n_local = part.num_local
    lu, lv = part.edges[:, 0], part.edges[:, 1]
    gu, gv = part.global_ids[lu], part.global_ids[lv]
    weights = np.asarray(matrix[gu, gv]).ravel() if gu.size else np.zeros(0, matrix.dtype)
    rows = [lu, lv]
    cols = [lv, lu]
    data = [weights, weights]
    if normalized.self_loops:
        masters = np.flatnonzero(part.master_flags)
        gm = part.global_ids[masters]
        rows.append(masters)
        cols.append(masters)
        data.append(np.asarray(matrix[gm, gm]).ravel() if gm.size else np.zeros(0, matrix.dtype))
    local = sp.csr_matrix(
        (np.concatenate(data).astype(matrix.dtype), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_local, n_local),
    )
    local.sort_indices()
    return local


def peer_message_counts(plan: PartitionPlan) -> list[Counter[int]]:
    """Rows each worker sends to each peer in one gather plus one scatter."""
    counts: list[Counter[int]] = [Counter() for _ in range(plan.cluster.p)]
    for vertex, replica in enumerate(plan.replicas):
        master = int(plan.owner[vertex])
        for mirror in replica:
            if mirror == master:
                continue
            # gather: mirror -> master, scatter: master -> mirror
            counts[mirror][master] += 1
            counts[master][mirror] += 1
    return counts


def compute_stats(plan: PartitionPlan, cluster: ClusterShape) -> PartitionStats:
    """
    Replication factor, imbalance factors and per-worker connection maxima.

    Inner/outer counts charge each worker one message per mirror it holds
    (gather to the master) plus one per mirror of each master it holds
    (scatter), split by whether the peer shares the worker's host.

    Args:
        plan: Partition plan
        cluster: Cluster shape

    Returns:
        PartitionStats
    """
    p = cluster.p
    vertex_counts = [part.num_local for part in plan.workers]
    edge_counts = [int(part.edges.shape[0]) for part in plan.workers]
    total_replicas = sum(vertex_counts)

    inner = [0] * p
    outer = [0] * p
    for sender, peers in enumerate(peer_message_counts(plan)):
        for peer, count in peers.items():
            if cluster.same_host(sender, peer):
                inner[sender] += count
            else:
                outer[sender] += count

    return PartitionStats(
        replication_factor=total_replicas / plan.num_vertices,
        edge_imbalance=max(edge_counts) / (plan.num_edges / p),
        vertex_imbalance=max(vertex_counts) / (total_replicas / p),
        inner_max=max(inner),
        outer_max=max(outer),
    )
