"""Hierarchical communication cost model used for reporting."""

from __future__ import annotations

from pydantic import BaseModel, Field

from ..models import CommTimeReport, EpochMetrics, WorkerTraffic
from .partitioner import PartitionPlan, peer_message_counts

GB = 1e9


class CostModel(BaseModel):
    """Link bandwidths (bytes/s) and per-transfer latencies (s)."""

    inner_bandwidth: float = Field(default=22.70 * GB, gt=0)
    outer_bandwidth: float = Field(default=8.27 * GB, gt=0)
    inner_broadcast_bandwidth: float = Field(default=19.47 * GB, gt=0)
    outer_broadcast_bandwidth: float = Field(default=11.98 * GB, gt=0)
    inner_latency: float = Field(default=1e-5, gt=0)
    outer_latency: float = Field(default=2e-5, gt=0)


def worker_comm_time(traffic: WorkerTraffic, cost: CostModel) -> float:
    """Seconds one worker spends sending its epoch traffic."""
    return (
        traffic.inner_bytes / cost.inner_bandwidth
        + traffic.outer_bytes / cost.outer_bandwidth
        + traffic.inner_broadcast_bytes / cost.inner_broadcast_bandwidth
        + traffic.outer_broadcast_bytes / cost.outer_broadcast_bandwidth
        + traffic.inner_transfers * cost.inner_latency
        + traffic.outer_transfers * cost.outer_latency
    )


def model_comm_time(
    metrics: EpochMetrics | list[WorkerTraffic],
    cost: CostModel,
) -> CommTimeReport:
    """
    Modeled communication seconds per worker and the maximum over workers.

    Args:
        metrics: Epoch metrics (uses its per-worker traffic) or the traffic list itself
        cost: Cost model

    Returns:
        CommTimeReport; zero traffic gives 0 s
    """
    traffic = metrics.workers if isinstance(metrics, EpochMetrics) else metrics
    per_worker = [worker_comm_time(t, cost) for t in traffic]
    return CommTimeReport(per_worker=per_worker, max_seconds=max(per_worker, default=0.0))


def plan_traffic(plan: PartitionPlan, row_bytes: int) -> list[WorkerTraffic]:
    """
    Per-worker traffic of one exact gather/scatter round on a plan.

    Every master/mirror pair moves one row of `row_bytes` each way; each worker
    makes one transfer per peer it shares a vertex with.
    """
    cluster = plan.cluster
    traffic = [WorkerTraffic(worker_id=i) for i in range(cluster.p)]
    for sender, peers in enumerate(peer_message_counts(plan)):
        t = traffic[sender]
        for peer, count in peers.items():
            if cluster.same_host(sender, peer):
                t.inner_bytes += count * row_bytes
                t.inner_transfers += 1
            else:
                t.outer_bytes += count * row_bytes
                t.outer_transfers += 1
        t.vertex_bytes = t.inner_bytes + t.outer_bytes
    return traffic
