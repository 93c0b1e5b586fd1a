"""Contracts between simulated workers: messages, transport and payload codecs."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any, Protocol

import numpy as np


class MessageKind(StrEnum):
    GATHER_DELTA = "gather_delta"
    SCATTER_DELTA = "scatter_delta"
    PARAM_GRAD = "param_grad"
    ACCURACY_REPORT = "accuracy_report"


class Direction(StrEnum):
    FORWARD = "forward"
    BACKWARD = "backward"


@dataclass(frozen=True, slots=True)
class EncodedRows:
    """Codec output for a batch of vertex rows."""

    data: Any
    num_rows: int
    dim: int
    nbytes: int


@dataclass(frozen=True, slots=True)
class SyncMessage:
    """
    One point-to-point transfer.

    Vertex kinds batch every row a worker sends to one peer in one phase;
    `vertices` holds their global IDs in ascending order and `payload` the
    encoded rows. Parameter and accuracy kinds leave `vertices` empty.
    """

    kind: MessageKind
    epoch: int
    layer: int
    direction: Direction
    source: int
    dest: int
    vertices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    payload: Any = None
    nbytes: int = 0

    @property
    def tag(self) -> tuple[MessageKind, int, int, Direction]:
        return (self.kind, self.epoch, self.layer, self.direction)


class TransportProtocol(Protocol):
    """Port describing ordered point-to-point delivery between workers."""

    async def send(self, message: SyncMessage, broadcast: bool = False) -> None:
        """Queue a message for its destination worker."""

    def collect(
        self,
        worker: int,
        tag: tuple[MessageKind, int, int, Direction],
        sources: Sequence[int],
    ) -> list[SyncMessage]:
        """Return exactly one message per source, sorted by source rank."""

    def record_sync_time(self, worker: int, seconds: float) -> None:
        """Charge wall time spent inside a synchronization phase."""


class PayloadCodecProtocol(Protocol):
    """Port describing how vertex rows are put on the wire."""

    def encode(self, rows: np.ndarray, direction: Direction) -> EncodedRows:
        """Encode a (k, F) batch of rows."""

    def decode(self, encoded: EncodedRows, dtype: np.dtype) -> np.ndarray:
        """Restore a (k, F) batch of rows."""
