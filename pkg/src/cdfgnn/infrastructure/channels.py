"""In-process message channels, barriers and traffic accounting for simulated workers."""

from __future__ import annotations

import asyncio
import logging
from collections import defaultdict
from collections.abc import Sequence

import numpy as np

from ..domain.errors import BarrierTimeoutError, MissingContributionError, ProtocolError
from ..domain.models import ClusterShape, WorkerTraffic
from ..domain.ports.messaging import Direction, MessageKind, SyncMessage

logger = logging.getLogger(__name__)

Tag = tuple[MessageKind, int, int, Direction]


class Mailbox:
    """Inbound queue of one worker plus a stash of drained messages keyed by tag."""

    def __init__(self, worker_id: int) -> None:
        self.worker_id = worker_id
        self._queue: asyncio.Queue[SyncMessage] = asyncio.Queue()
        self._stash: dict[Tag, dict[int, SyncMessage]] = defaultdict(dict)

    def put(self, message: SyncMessage) -> None:
        self._queue.put_nowait(message)

    def _drain(self) -> None:
        while True:
            try:
                message = self._queue.get_nowait()
            except asyncio.QueueEmpty:
                return
            bucket = self._stash[message.tag]
            if message.source in bucket:
                raise ProtocolError(
                    "duplicate message",
                    worker=self.worker_id,
                    source=message.source,
                    kind=message.kind.value,
                    epoch=message.epoch,
                    layer=message.layer,
                )
            bucket[message.source] = message

    def take(self, tag: Tag, sources: Sequence[int]) -> list[SyncMessage]:
        """
        Remove and return one message per source, ordered by source rank.

        Raises:
            MissingContributionError: If a source has not delivered
        """
        self._drain()
        bucket = self._stash.get(tag, {})
        missing = [s for s in sources if s not in bucket]
        if missing:
            kind, epoch, layer, direction = tag
            raise MissingContributionError(
                "missing message after barrier",
                worker=self.worker_id,
                sources=missing,
                kind=kind.value,
                epoch=epoch,
                layer=layer,
                direction=direction.value,
            )
        taken = [bucket.pop(s) for s in sorted(sources)]
        if not bucket:
            self._stash.pop(tag, None)
        return taken


class TrafficLedger:
    """Per-worker byte and transfer counters for the current epoch."""

    def __init__(self, cluster: ClusterShape) -> None:
        self._cluster = cluster
        self._traffic = [WorkerTraffic(worker_id=i) for i in range(cluster.p)]

    def record(self, message: SyncMessage, broadcast: bool = False) -> None:
        """Charge a message to its sender; self-delivery and empty batches cost nothing."""
        if message.source == message.dest or message.nbytes == 0:
            return
        t = self._traffic[message.source]
        inner = self._cluster.same_host(message.source, message.dest)
        if broadcast:
            if inner:
                t.inner_broadcast_bytes += message.nbytes
            else:
                t.outer_broadcast_bytes += message.nbytes
        elif inner:
            t.inner_bytes += message.nbytes
        else:
            t.outer_bytes += message.nbytes
        if inner:
            t.inner_transfers += 1
        else:
            t.outer_transfers += 1
        if message.kind in (MessageKind.GATHER_DELTA, MessageKind.SCATTER_DELTA):
            t.vertex_bytes += message.nbytes
        elif message.kind == MessageKind.PARAM_GRAD:
            t.param_bytes += message.nbytes

    def add_sync_time(self, worker: int, seconds: float) -> None:
        self._traffic[worker].sync_wall_s += seconds

    def snapshot(self) -> list[WorkerTraffic]:
        return [t.model_copy() for t in self._traffic]

    def reset(self) -> None:
        self._traffic = [WorkerTraffic(worker_id=i) for i in range(self._cluster.p)]


class ChannelHub:
    """
    Point-to-point transport between all workers of one cluster.

    With a jitter seed, every send yields to the event loop a random number
    of times so that delivery interleavings vary between workers.
    """

    def __init__(
        self,
        cluster: ClusterShape,
        ledger: TrafficLedger,
        jitter_seed: int | None = None,
    ) -> None:
        self._mailboxes = [Mailbox(i) for i in range(cluster.p)]
        self._ledger = ledger
        self._jitter = (
            [np.random.default_rng([jitter_seed, i]) for i in range(cluster.p)]
            if jitter_seed is not None
            else None
        )

    @property
    def ledger(self) -> TrafficLedger:
        return self._ledger

    async def send(self, message: SyncMessage, broadcast: bool = False) -> None:
        if not 0 <= message.dest < len(self._mailboxes):
            raise ProtocolError("unknown destination", source=message.source, dest=message.dest)
        if self._jitter is not None:
            for _ in range(int(self._jitter[message.source].integers(0, 4))):
                await asyncio.sleep(0)
        self._ledger.record(message, broadcast=broadcast)
        self._mailboxes[message.dest].put(message)

    def collect(self, worker: int, tag: Tag, sources: Sequence[int]) -> list[SyncMessage]:
        return self._mailboxes[worker].take(tag, sources)

    def record_sync_time(self, worker: int, seconds: float) -> None:
        self._ledger.add_sync_time(worker, seconds)


class EpochBarrier:
    """asyncio.Barrier with a deadlock guard."""

    def __init__(self, parties: int, timeout: float) -> None:
        self._barrier = asyncio.Barrier(parties)
        self._timeout = timeout

    async def wait(self, worker: int, phase: str, epoch: int) -> None:
        """
        Block until every worker arrives.

        Raises:
            BarrierTimeoutError: If the barrier does not release within the timeout
        """
        try:
            async with asyncio.timeout(self._timeout):
                await self._barrier.wait()
        except TimeoutError:
            logger.error(
                "barrier timed out",
                extra={"worker": worker, "phase": phase, "epoch": epoch},
            )
            raise BarrierTimeoutError(
                "barrier wait timed out", worker=worker, phase=phase, epoch=epoch
            ) from None
