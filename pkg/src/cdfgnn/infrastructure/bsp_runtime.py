"""Simulated BSP cluster: workers, master-mirror sync and gradient reduction."""

from __future__ import annotations

import asyncio
import logging
import time
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
import scipy.sparse as sp

from ..domain.errors import CdfgnnError, MissingContributionError, UnknownVertexError
from ..domain.models import EpochMetrics, WorkerTraffic
from ..domain.ports.messaging import (
    Direction,
    EncodedRows,
    MessageKind,
    PayloadCodecProtocol,
    SyncMessage,
    TransportProtocol,
)
from ..domain.services.cost_model import CostModel, model_comm_time
from ..domain.services.gcn_engine import (
    LayerState,
    ModelParams,
    Optimizer,
    activate,
    backward_local,
    forward_local,
    loss_and_output_grad,
    param_grad,
)
from ..domain.services.graph_store import Dataset, NormalizedAdjacency, Role
from ..domain.services.partitioner import PartitionPlan, WorkerPartition, local_adjacency
from ..domain.services.reference_oracle import loss_scale
from ..domain.services.vertex_cache import (
    CacheTable,
    EpsilonController,
    ScatterMode,
    apply_scatter,
    master_pass,
    mirror_pass,
    scatter_pass,
    update_epsilon,
)
from .channels import ChannelHub, EpochBarrier, TrafficLedger
from .payload_codec import RawCodec

logger = logging.getLogger(__name__)

PARAM_SERVER = 0
ALL_LAYERS = -1

ParamSync = Literal["end", "per_layer"]


@dataclass(frozen=True, slots=True)
class RuntimeOptions:
    """Knobs of one simulated training run."""

    cache_enabled: bool = False
    scatter_mode: ScatterMode = "delta"
    controller: EpsilonController = field(default_factory=EpsilonController)
    param_sync: ParamSync = "end"
    loss_reduction: str = "mean"
    barrier_timeout: float = 30.0
    jitter_seed: int | None = None
    record_grads: bool = False
    wall_clock: bool = True


@dataclass(slots=True)
class SyncCounters:
    """Rows sent by one worker in one epoch, per layer (index 0 is layer 1)."""

    fwd_sends: list[int]
    bwd_sends: list[int]
    fwd_scatters: list[int]
    bwd_scatters: list[int]

    @classmethod
    def zeros(cls, num_layers: int) -> SyncCounters:
        return cls([0] * num_layers, [0] * num_layers, [0] * num_layers, [0] * num_layers)


@dataclass(frozen=True, slots=True)
class EpochReport:
    """Globally reduced loss and accuracy counters."""

    loss: float
    train_acc: float
    val_acc: float
    test_acc: float


def reduce_param_grads(
    contributions: dict[int, list[np.ndarray]],
    num_workers: int,
) -> list[np.ndarray]:
    """
    Sum per-worker gradient lists in ascending worker order.

    Args:
        contributions: Worker ID -> one array per layer
        num_workers: Expected number of contributions

    Returns:
        Summed gradient per layer

    Raises:
        MissingContributionError: If any worker did not contribute
    """
    missing = [w for w in range(num_workers) if w not in contributions]
    if missing:
        raise MissingContributionError("missing gradient contribution", workers=missing)
    ordered = [contributions[w] for w in range(num_workers)]
    summed = [g.copy() for g in ordered[0]]
    for grads in ordered[1:]:
        for idx, g in enumerate(grads):
            summed[idx] = summed[idx] + g
    return summed


def _ratio(correct: float, total: float) -> float:
    return float(correct / total) if total else 0.0


class Worker:
    """
    One simulated device.

    Holds its subgraph, replicated parameters, optimizer and threshold
    controller; talks to peers only through the channel hub.
    """

    def __init__(
        self,
        part: WorkerPartition,
        plan: PartitionPlan,
        adjacency: sp.csr_matrix,
        dataset: Dataset,
        params: ModelParams,
        optimizer: Optimizer,
        codec: PayloadCodecProtocol,
        options: RuntimeOptions,
        scale: float,
    ) -> None:
        self.worker_id = part.worker_id
        self.part = part
        self.params = params
        self.optimizer = optimizer
        self.controller = replace(options.controller)
        self._plan = plan
        self._adj = adjacency
        self._codec = codec
        self._options = options
        self._scale = scale
        self._num_workers = plan.cluster.p
        dtype = params.weights[0].dtype
        self._dtype = dtype

        ids = part.global_ids
        self._features = dataset.features.values[ids].astype(dtype)
        self._labels = dataset.labels.labels[ids]
        self._masks = dataset.labels.masks[ids]
        self._num_classes = dataset.labels.num_classes

        owners = plan.owner[ids]
        mirrors = np.flatnonzero(~part.master_flags)
        self._mirror_rows = mirrors
        # маршруты gather: куда отправлять зеркала (к владельцу-мастеру)
        self._gather_routes = {
            int(peer): mirrors[owners[mirrors] == peer] for peer in np.unique(owners[mirrors])
        }
        scatter: dict[int, list[int]] = {}
        replicated_masters: list[int] = []
        for row in np.flatnonzero(part.master_flags).tolist():
            holders = [w for w in plan.replicas[int(ids[row])] if w != self.worker_id]
            if holders:
                replicated_masters.append(row)
            for peer in holders:
                scatter.setdefault(peer, []).append(row)
        self._master_rows = np.array(replicated_masters, dtype=np.int64)
        self._scatter_routes = {
            peer: np.array(rows, dtype=np.int64) for peer, rows in sorted(scatter.items())
        }
        self._replicated_rows = np.sort(np.concatenate([self._master_rows, mirrors]))

        self._caches: dict[tuple[int, Direction], CacheTable] = {}
        self._hub: TransportProtocol | None = None
        self._barrier: EpochBarrier | None = None
        self.counters = SyncCounters.zeros(params.num_layers)
        self.last_grads: list[np.ndarray] = []
        self.last_report: EpochReport | None = None
        self.last_eps = self.controller.eps

    def attach(self, hub: TransportProtocol, barrier: EpochBarrier) -> None:
        self._hub = hub
        self._barrier = barrier

    @property
    def hub(self) -> TransportProtocol:
        if self._hub is None:
            raise RuntimeError("worker is not attached to a channel hub")
        return self._hub

    @property
    def barrier(self) -> EpochBarrier:
        if self._barrier is None:
            raise RuntimeError("worker is not attached to a barrier")
        return self._barrier

    def _rows_for(
        self, vertices: np.ndarray, expect_master: bool, **context: object
    ) -> np.ndarray:
        try:
            rows = self.part.local_rows(vertices)
        except KeyError:
            raise UnknownVertexError(
                "message for a vertex not hosted here", worker=self.worker_id, **context
            ) from None
        if rows.size and np.any(self.part.master_flags[rows] != expect_master):
            role = "master" if expect_master else "mirror"
            raise UnknownVertexError(
                f"message for a vertex that is not a {role} here",
                worker=self.worker_id,
                **context,
            )
        return rows

    async def _send_rows(
        self,
        kind: MessageKind,
        epoch: int,
        layer: int,
        direction: Direction,
        dest: int,
        rows: np.ndarray,
        values: np.ndarray,
    ) -> int:
        encoded: EncodedRows = self._codec.encode(values, direction)
        await self.hub.send(
            SyncMessage(
                kind=kind,
                epoch=epoch,
                layer=layer,
                direction=direction,
                source=self.worker_id,
                dest=dest,
                vertices=self.part.global_ids[rows],
                payload=encoded,
                nbytes=encoded.nbytes if rows.size else 0,
            )
        )
        return int(rows.size)

    def _cache(self, layer: int, direction: Direction, dim: int) -> CacheTable:
        key = (layer, direction)
        if key not in self._caches:
            self._caches[key] = CacheTable.zeros(self.part.num_local, dim, self._dtype)
        return self._caches[key]

    async def gather_scatter(
        self,
        epoch: int,
        layer: int,
        direction: Direction,
        local: np.ndarray,
    ) -> np.ndarray:
        """
        Synchronize replicated rows of `local` with their peers.

        Mirrors send to masters, every worker waits at a barrier, masters
        aggregate and send back, and a second barrier closes the phase.

        Returns:
            Synced values; rows of unreplicated vertices are the local values
        """
        started = time.perf_counter()
        if self._options.cache_enabled:
            synced = await self._sync_cached(epoch, layer, direction, local)
        else:
            synced = await self._sync_exact(epoch, layer, direction, local)
        if self._options.wall_clock:
            self.hub.record_sync_time(self.worker_id, time.perf_counter() - started)
        logger.debug(
            "sync finished",
            extra={
                "worker": self.worker_id,
                "epoch": epoch,
                "layer": layer,
                "direction": direction.value,
            },
        )
        return synced

    def _count(self, direction: Direction, layer: int, gathered: int, scattered: int) -> None:
        idx = layer - 1
        if direction == Direction.FORWARD:
            self.counters.fwd_sends[idx] += gathered
            self.counters.fwd_scatters[idx] += scattered
        else:
            self.counters.bwd_sends[idx] += gathered
            self.counters.bwd_scatters[idx] += scattered

    async def _sync_exact(
        self,
        epoch: int,
        layer: int,
        direction: Direction,
        local: np.ndarray,
    ) -> np.ndarray:
        gather_tag = (MessageKind.GATHER_DELTA, epoch, layer, direction)
        scatter_tag = (MessageKind.SCATTER_DELTA, epoch, layer, direction)
        context = {"epoch": epoch, "layer": layer, "direction": direction.value}

        gathered = 0
        for dest, rows in self._gather_routes.items():
            gathered += await self._send_rows(
                MessageKind.GATHER_DELTA, epoch, layer, direction, dest, rows, local[rows]
            )
        await self.barrier.wait(self.worker_id, "gather", epoch)

        synced = local.copy()
        sources = list(self._scatter_routes)
        received = {
            msg.source: msg for msg in self.hub.collect(self.worker_id, gather_tag, sources)
        }
        if self._master_rows.size:
            totals = np.zeros((self._master_rows.size, local.shape[1]), dtype=local.dtype)
            positions = {int(r): i for i, r in enumerate(self._master_rows.tolist())}
            for worker in sorted([*sources, self.worker_id]):
                if worker == self.worker_id:
                    totals += local[self._master_rows]
                    continue
                msg = received[worker]
                rows = self._rows_for(msg.vertices, True, source=worker, **context)
                idx = np.array([positions[int(r)] for r in rows.tolist()], dtype=np.int64)
                totals[idx] += self._codec.decode(msg.payload, local.dtype)
            synced[self._master_rows] = totals

        # мастер берёт тот же декодированный результат, что и зеркала
        scattered = 0
        outgoing = synced
        if self._master_rows.size:
            outgoing = synced.copy()
            own = self._codec.encode(synced[self._master_rows], direction)
            synced[self._master_rows] = self._codec.decode(own, local.dtype)
        for dest, rows in self._scatter_routes.items():
            scattered += await self._send_rows(
                MessageKind.SCATTER_DELTA, epoch, layer, direction, dest, rows, outgoing[rows]
            )
        await self.barrier.wait(self.worker_id, "scatter", epoch)

        for msg in self.hub.collect(self.worker_id, scatter_tag, list(self._gather_routes)):
            rows = self._rows_for(msg.vertices, False, source=msg.source, **context)
            synced[rows] = self._codec.decode(msg.payload, local.dtype)

        self._count(direction, layer, gathered, scattered)
        return synced

    async def _sync_cached(
        self,
        epoch: int,
        layer: int,
        direction: Direction,
        local: np.ndarray,
    ) -> np.ndarray:
        gather_tag = (MessageKind.GATHER_DELTA, epoch, layer, direction)
        scatter_tag = (MessageKind.SCATTER_DELTA, epoch, layer, direction)
        context = {"epoch": epoch, "layer": layer, "direction": direction.value}
        cache = self._cache(layer, direction, local.shape[1])
        eps = self.controller.eps
        mode = self._options.scatter_mode

        sending, deltas = mirror_pass(cache, self._mirror_rows, local[self._mirror_rows], eps)
        owners = self._plan.owner[self.part.global_ids[sending]]
        gathered = 0
        for dest in self._gather_routes:
            pick = owners == dest
            gathered += await self._send_rows(
                MessageKind.GATHER_DELTA, epoch, layer, direction, dest,
                sending[pick], deltas[pick],
            )
        await self.barrier.wait(self.worker_id, "gather", epoch)

        received = []
        for msg in self.hub.collect(self.worker_id, gather_tag, list(self._scatter_routes)):
            rows = self._rows_for(msg.vertices, True, source=msg.source, **context)
            received.append((rows, self._codec.decode(msg.payload, local.dtype)))
        active = master_pass(
            cache, received, self._master_rows, local[self._master_rows], eps
        )

        payload = scatter_pass(cache, active, mode)
        if active.size:
            own = self._codec.decode(self._codec.encode(payload, direction), local.dtype)
            apply_scatter(cache, active, own, mode)
        scattered = 0
        for dest, rows in self._scatter_routes.items():
            pick = np.isin(active, rows)
            scattered += await self._send_rows(
                MessageKind.SCATTER_DELTA, epoch, layer, direction, dest,
                active[pick], payload[pick],
            )
        await self.barrier.wait(self.worker_id, "scatter", epoch)

        for msg in self.hub.collect(self.worker_id, scatter_tag, list(self._gather_routes)):
            rows = self._rows_for(msg.vertices, False, source=msg.source, **context)
            apply_scatter(cache, rows, self._codec.decode(msg.payload, local.dtype), mode)

        synced = local.copy()
        synced[self._replicated_rows] = cache.published[self._replicated_rows]
        self._count(direction, layer, gathered, scattered)
        return synced

    async def _allreduce(
        self,
        kind: MessageKind,
        epoch: int,
        layer: int,
        payload: list[np.ndarray],
        reducer: Callable[[dict[int, list[np.ndarray]], int], list[np.ndarray]],
    ) -> list[np.ndarray]:
        """Send to the parameter server, let it reduce, receive its broadcast."""
        tag = (kind, epoch, layer, Direction.BACKWARD)
        await self.hub.send(
            SyncMessage(
                kind=kind,
                epoch=epoch,
                layer=layer,
                direction=Direction.BACKWARD,
                source=self.worker_id,
                dest=PARAM_SERVER,
                payload=[a.copy() for a in payload],
                nbytes=sum(a.nbytes for a in payload),
            )
        )
        await self.barrier.wait(self.worker_id, f"{kind.value}-reduce", epoch)
        if self.worker_id == PARAM_SERVER:
            messages = self.hub.collect(self.worker_id, tag, range(self._num_workers))
            total = reducer({m.source: m.payload for m in messages}, self._num_workers)
            for dest in range(self._num_workers):
                await self.hub.send(
                    SyncMessage(
                        kind=kind,
                        epoch=epoch,
                        layer=layer,
                        direction=Direction.FORWARD,
                        source=PARAM_SERVER,
                        dest=dest,
                        payload=[a.copy() for a in total],
                        nbytes=sum(a.nbytes for a in total),
                    ),
                    broadcast=True,
                )
        await self.barrier.wait(self.worker_id, f"{kind.value}-broadcast", epoch)
        (reply,) = self.hub.collect(
            self.worker_id, (kind, epoch, layer, Direction.FORWARD), [PARAM_SERVER]
        )
        return reply.payload

    async def reduce_param_grads(
        self,
        epoch: int,
        layer: int,
        grads: list[np.ndarray],
    ) -> list[np.ndarray]:
        return await self._allreduce(
            MessageKind.PARAM_GRAD, epoch, layer, grads, reduce_param_grads
        )

    async def run_epoch(self, epoch: int) -> None:
        """One full-batch iteration on this worker."""
        num_layers = self.params.num_layers
        self.counters = SyncCounters.zeros(num_layers)
        self.last_eps = self.controller.eps
        state = LayerState.start(self._features, num_layers)

        for layer in range(1, num_layers + 1):
            z_local, aggregated = forward_local(
                state.h[layer - 1], self.params.weights[layer - 1], self._adj
            )
            state.ah[layer - 1] = aggregated
            state.z_local[layer] = z_local
            state.z_synced[layer] = await self.gather_scatter(
                epoch, layer, Direction.FORWARD, z_local
            )
            state.h[layer] = activate(state.z_synced[layer], is_final=layer == num_layers)

        result = loss_and_output_grad(
            state.h[num_layers],
            self._labels,
            self._masks,
            self.part.master_flags,
            self._num_classes,
            self._scale,
        )
        state.delta_local[num_layers] = result.output_grad

        per_layer = self._options.param_sync == "per_layer"
        if per_layer:
            self.optimizer.begin_step()
        grads: list[np.ndarray] = [np.empty(0)] * num_layers
        summed: list[np.ndarray] = [np.empty(0)] * num_layers
        for layer in range(num_layers, 0, -1):
            state.delta_synced[layer] = await self.gather_scatter(
                epoch, layer, Direction.BACKWARD, state.delta_local[layer]
            )
            if layer > 1:
                state.delta_local[layer - 1] = backward_local(
                    state.delta_synced[layer],
                    self._adj,
                    self.params.weights[layer - 1],
                    state.z_synced[layer - 1],
                )
            grads[layer - 1] = param_grad(state.delta_synced[layer], state.ah[layer - 1])
            if per_layer:
                (summed[layer - 1],) = await self.reduce_param_grads(
                    epoch, layer - 1, [grads[layer - 1]]
                )
                self.optimizer.apply(self.params, layer - 1, summed[layer - 1])

        if not per_layer:
            summed = await self.reduce_param_grads(epoch, ALL_LAYERS, grads)
            self.optimizer.begin_step()
            for idx, grad in enumerate(summed):
                self.optimizer.apply(self.params, idx, grad)
        self.last_grads = summed

        counts = np.array(
            [
                result.loss,
                result.correct[Role.TRAIN],
                result.total[Role.TRAIN],
                result.correct[Role.VAL],
                result.total[Role.VAL],
                result.correct[Role.TEST],
                result.total[Role.TEST],
            ],
            dtype=np.float64,
        )
        (totals,) = await self._allreduce(
            MessageKind.ACCURACY_REPORT, epoch, ALL_LAYERS, [counts], reduce_param_grads
        )
        self.last_report = EpochReport(
            loss=float(totals[0]),
            train_acc=_ratio(totals[1], totals[2]),
            val_acc=_ratio(totals[3], totals[4]),
            test_acc=_ratio(totals[5], totals[6]),
        )
        if self._options.cache_enabled:
            update_epsilon(self.controller, self.last_report.train_acc)


class ClusterRuntime:
    """
    Coordinator of p workers.

    Workers run as asyncio tasks of one event loop; every reduction sorts by
    source rank, so results do not depend on scheduling.
    """

    def __init__(
        self,
        dataset: Dataset,
        plan: PartitionPlan,
        normalized: NormalizedAdjacency,
        params: ModelParams,
        optimizer_factory: Callable[[], Optimizer],
        options: RuntimeOptions | None = None,
        codec: PayloadCodecProtocol | None = None,
        cost_model: CostModel | None = None,
    ) -> None:
        self.plan = plan
        self.options = options or RuntimeOptions()
        self.cost_model = cost_model or CostModel()
        self.grad_history: list[list[np.ndarray]] = []
        self._codec = codec or RawCodec()
        self._ledger = TrafficLedger(plan.cluster)
        self._replica_pairs = plan.replica_pairs()
        self._epoch = 0
        scale = loss_scale(dataset.labels.masks, self.options.loss_reduction)
        self.workers = [
            Worker(
                part=part,
                plan=plan,
                adjacency=local_adjacency(part, normalized),
                dataset=dataset,
                params=params.copy(),
                optimizer=optimizer_factory(),
                codec=self._codec,
                options=self.options,
                scale=scale,
            )
            for part in plan.workers
        ]

    @property
    def params(self) -> ModelParams:
        return self.workers[PARAM_SERVER].params

    async def run_epoch(self, epoch: int | None = None) -> EpochMetrics:
        """
        Run one BSP iteration on all workers.

        Raises:
            CdfgnnError: The first error raised by any worker, with its context
        """
        epoch = self._epoch + 1 if epoch is None else epoch
        self._ledger.reset()
        jitter = self.options.jitter_seed
        hub = ChannelHub(
            self.plan.cluster, self._ledger, None if jitter is None else jitter + epoch
        )
        barrier = EpochBarrier(self.plan.cluster.p, self.options.barrier_timeout)
        for worker in self.workers:
            worker.attach(hub, barrier)

        started = time.perf_counter()
        try:
            async with asyncio.TaskGroup() as tg:
                for worker in self.workers:
                    tg.create_task(worker.run_epoch(epoch))
        except BaseExceptionGroup as group:
            error = _first_leaf(group)
            logger.error(
                "epoch failed",
                extra={"epoch": epoch, "error": str(error)},
                exc_info=error,
            )
            raise error from None
        wall = time.perf_counter() - started
        self._epoch = epoch

        metrics = self._assemble(epoch, wall)
        if self.options.record_grads:
            self.grad_history.append([g.copy() for g in self.workers[PARAM_SERVER].last_grads])
        logger.info(
            "epoch finished",
            extra={
                "epoch": epoch,
                "loss": metrics.loss,
                "train_acc": metrics.train_acc,
                "eps": metrics.eps,
                "vertex_messages": metrics.vertex_messages,
            },
        )
        return metrics

    async def train(
        self,
        epochs: int,
        on_epoch: Callable[[EpochMetrics], None] | None = None,
    ) -> list[EpochMetrics]:
        history = []
        for _ in range(epochs):
            metrics = await self.run_epoch()
            history.append(metrics)
            if on_epoch is not None:
                on_epoch(metrics)
        return history

    def run(
        self,
        epochs: int,
        on_epoch: Callable[[EpochMetrics], None] | None = None,
    ) -> list[EpochMetrics]:
        """Synchronous wrapper around `train`."""
        return asyncio.run(self.train(epochs, on_epoch))

    def _assemble(self, epoch: int, wall: float) -> EpochMetrics:
        lead = self.workers[PARAM_SERVER]
        report = lead.last_report
        assert report is not None
        num_layers = lead.params.num_layers

        def total(attr: str) -> list[int]:
            return [
                sum(getattr(w.counters, attr)[i] for w in self.workers) for i in range(num_layers)
            ]

        traffic: list[WorkerTraffic] = self._ledger.snapshot()
        if not self.options.wall_clock:
            for t in traffic:
                t.sync_wall_s = 0.0
        comm = model_comm_time(traffic, self.cost_model)
        return EpochMetrics(
            epoch=epoch,
            loss=report.loss,
            train_acc=report.train_acc,
            val_acc=report.val_acc,
            test_acc=report.test_acc,
            eps=lead.last_eps if self.options.cache_enabled else 0.0,
            fwd_sends=total("fwd_sends"),
            bwd_sends=total("bwd_sends"),
            fwd_scatters=total("fwd_scatters"),
            bwd_scatters=total("bwd_scatters"),
            replica_pairs=self._replica_pairs,
            inner_bytes=sum(t.inner_bytes + t.inner_broadcast_bytes for t in traffic),
            outer_bytes=sum(t.outer_bytes + t.outer_broadcast_bytes for t in traffic),
            modeled_comm_s=comm.max_seconds,
            wall_s=wall if self.options.wall_clock else 0.0,
            workers=traffic,
        )


def _first_leaf(group: BaseExceptionGroup) -> BaseException:
    """First non-group exception, preferring simulator errors."""
    leaves: list[BaseException] = []
    stack: list[BaseException] = [group]
    while stack:
        current = stack.pop(0)
        if isinstance(current, BaseExceptionGroup):
            stack[:0] = list(current.exceptions)
        else:
            leaves.append(current)
    for leaf in leaves:
        if isinstance(leaf, CdfgnnError):
            return leaf
    return leaves[0]

