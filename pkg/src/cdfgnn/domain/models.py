"""Pydantic models for values that cross a file or report boundary."""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field, model_validator


class ClusterShape(BaseModel):
    """Hosts × GPUs-per-host worker layout; worker i lives on host i // gpus_per_host."""

    model_config = ConfigDict(frozen=True)

    num_hosts: int = Field(ge=1)
    gpus_per_host: int = Field(ge=1)

    @property
    def p(self) -> int:
        return self.num_hosts * self.gpus_per_host

    def host_of(self, worker: int) -> int:
        return worker // self.gpus_per_host

    def same_host(self, a: int, b: int) -> bool:
        return self.host_of(a) == self.host_of(b)


class PartitionStats(BaseModel):
    replication_factor: float = Field(ge=1.0)
    edge_imbalance: float = Field(ge=1.0)
    vertex_imbalance: float = Field(ge=1.0)
    inner_max: int = Field(ge=0)
    outer_max: int = Field(ge=0)


class WorkerFileEntry(BaseModel):
    worker_id: int
    num_local_vertices: int
    num_edges: int
    edges_sha256: str
    map_sha256: str


class PlanManifest(BaseModel):
    """Contents of manifest.json in a plan directory."""

    version: int
    num_vertices: int
    num_edges: int
    cluster: ClusterShape
    stats: PartitionStats
    workers: list[WorkerFileEntry]

    @model_validator(mode="after")
    def _workers_match_cluster(self) -> PlanManifest:
        if len(self.workers) != self.cluster.p:
            raise ValueError(f"{len(self.workers)} worker entries for p={self.cluster.p}")
        return self


class WorkerTraffic(BaseModel):
    """Bytes and transfers sent by one worker during one epoch."""

    worker_id: int
    inner_bytes: int = 0
    outer_bytes: int = 0
    inner_broadcast_bytes: int = 0
    outer_broadcast_bytes: int = 0
    inner_transfers: int = 0
    outer_transfers: int = 0
    vertex_bytes: int = 0
    param_bytes: int = 0
    sync_wall_s: float = 0.0


class EpochMetrics(BaseModel):
    epoch: int
    loss: float
    train_acc: float
    val_acc: float
    test_acc: float
    eps: float
    fwd_sends: list[int]
    bwd_sends: list[int]
    fwd_scatters: list[int]
    bwd_scatters: list[int]
    replica_pairs: int
    inner_bytes: int
    outer_bytes: int
    modeled_comm_s: float
    wall_s: float
    workers: list[WorkerTraffic] = Field(default_factory=list)

    @property
    def vertex_messages(self) -> int:
        return sum(self.fwd_sends) + sum(self.bwd_sends) + sum(self.fwd_scatters) + sum(
            self.bwd_scatters
        )

    def _fractions(self, sends: list[int]) -> list[float]:
        if self.replica_pairs == 0:
            return [0.0] * len(sends)
        return [count / self.replica_pairs for count in sends]

    @property
    def fwd_fractions(self) -> list[float]:
        """Per-layer forward sends over replica pairs (1.0 means no row was cached)."""
        return self._fractions(self.fwd_sends)

    @property
    def bwd_fractions(self) -> list[float]:
        return self._fractions(self.bwd_sends)

    @property
    def vertex_bytes(self) -> int:
        return sum(w.vertex_bytes for w in self.workers)

    @property
    def param_bytes(self) -> int:
        return sum(w.param_bytes for w in self.workers)


class CommTimeReport(BaseModel):
    per_worker: list[float]
    max_seconds: float


class RunSummary(BaseModel):
    """JSON summary written next to the metrics CSV."""

    schema_version: int = 1
    epochs: int
    final_loss: float | None = None
    final_train_acc: float | None = None
    final_val_acc: float | None = None
    final_test_acc: float | None = None
    total_vertex_messages: int = 0
    total_bytes: int = 0
    modeled_comm_s: float = 0.0
    sync_wall_s: float = 0.0
    partition: PartitionStats | None = None
    exact_total_vertex_messages: int | None = None
    exact_final_train_acc: float | None = None
    message_reduction: float | None = None
    byte_reduction: float | None = None


class EpochDelta(BaseModel):
    epoch: int
    loss: float
    train_acc: float
    val_acc: float
    vertex_messages: int
    bytes: int


class ComparisonReport(BaseModel):
    common_epochs: int
    epochs_a: int
    epochs_b: int
    per_epoch: list[EpochDelta]
    final_train_acc_delta: float | None
    final_val_acc_delta: float | None
    message_reduction: float | None
    byte_reduction: float | None


class AblationRow(BaseModel):
    variant: str
    cache: bool
    quant: bool
    total_vertex_messages: int
    total_bytes: int
    modeled_comm_s: float
    final_train_acc: float | None
    final_val_acc: float | None
