"""Adaptive per-vertex cache for replica synchronization.

A replica sends its local value only when it drifted from the snapshot it
last sent by more than ε times the snapshot's magnitude. Masters keep the
exact aggregate of everything received; every replica (master included)
holds a published aggregate that changes only through scatter payloads, so
all replicas of a vertex see identical values even with lossy payloads.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np

from ..errors import UnknownVertexError
from . import tensor_math as tm

logger = logging.getLogger(__name__)

ScatterMode = Literal["delta", "full"]


@dataclass(slots=True)
class CacheTable:
    """Snapshots of one (layer, direction) on one worker, indexed by local row."""

    local_snapshot: np.ndarray
    published: np.ndarray
    accumulator: np.ndarray

    @classmethod
    def zeros(cls, num_local: int, dim: int, dtype: np.dtype | type) -> CacheTable:
        return cls(
            local_snapshot=np.zeros((num_local, dim), dtype=dtype),
            published=np.zeros((num_local, dim), dtype=dtype),
            accumulator=np.zeros((num_local, dim), dtype=dtype),
        )


def should_send(current: np.ndarray, snapshot: np.ndarray, eps: float) -> bool:
    """True iff ||current - snapshot||∞ > eps·||snapshot||∞."""
    return tm.linf_norm(current - snapshot) > eps * tm.linf_norm(snapshot)


def send_mask(current: np.ndarray, snapshot: np.ndarray, eps: float) -> np.ndarray:
    """Row-wise `should_send`."""
    return tm.row_linf(current - snapshot) > eps * tm.row_linf(snapshot)


def mirror_pass(
    cache: CacheTable,
    rows: np.ndarray,
    current: np.ndarray,
    eps: float,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Pick the mirror rows that must send and record their new snapshots.

    Args:
        cache: This worker's table
        rows: Local rows of the mirror replicas
        current: Current local values for those rows
        eps: Threshold

    Returns:
        (sending rows, deltas current - previous snapshot)
    """
    mask = send_mask(current, cache.local_snapshot[rows], eps)
    sending = rows[mask]
    deltas = current[mask] - cache.local_snapshot[sending]
    cache.local_snapshot[sending] = current[mask]
    return sending, deltas


def master_pass(
    cache: CacheTable,
    received: Sequence[tuple[np.ndarray, np.ndarray]],
    master_rows: np.ndarray,
    own_current: np.ndarray,
    eps: float,
) -> np.ndarray:
    """
    Fold mirror deltas and the master's own drift into the exact aggregate.

    Args:
        cache: This worker's table
        received: (rows, deltas) per source, in ascending source order
        master_rows: Local rows this worker masters that have mirrors
        own_current: Current local values at master_rows
        eps: Threshold

    Returns:
        Sorted local rows touched by either path (the active set)

    Raises:
        UnknownVertexError: If a delta targets a row that is not a replicated master here
    """
    touched = np.zeros(cache.accumulator.shape[0], dtype=bool)
    allowed = np.zeros_like(touched)
    allowed[master_rows] = True
    for rows, deltas in received:
        if rows.size and not np.all(allowed[rows]):
            bad = int(rows[~allowed[rows]][0])
            raise UnknownVertexError("gather delta for a row this worker does not master", row=bad)
        cache.accumulator[rows] += deltas
        touched[rows] = True

    mask = send_mask(own_current, cache.local_snapshot[master_rows], eps)
    drifting = master_rows[mask]
    cache.accumulator[drifting] += own_current[mask] - cache.local_snapshot[drifting]
    cache.local_snapshot[drifting] = own_current[mask]
    touched[drifting] = True
    return np.flatnonzero(touched)


def scatter_pass(cache: CacheTable, active: np.ndarray, mode: ScatterMode = "delta") -> np.ndarray:
    """
    Payload rows for the active vertices.

    Delta mode sends what the published aggregate still lacks; full mode
    sends the aggregate itself.
    """
    if mode == "full":
        return cache.accumulator[active].copy()
    return cache.accumulator[active] - cache.published[active]


def apply_scatter(
    cache: CacheTable,
    rows: np.ndarray,
    payload: np.ndarray,
    mode: ScatterMode = "delta",
) -> None:
    """Fold a decoded scatter payload into the published aggregate."""
    if mode == "full":
        cache.published[rows] = payload
    else:
        cache.published[rows] += payload


@dataclass(slots=True)
class EpsilonController:
    """
    Per-epoch threshold controller.

    Loosens ε when accuracy falls below its moving average and tightens it
    when accuracy climbs above; `frozen` pins ε at its initial value.
    """

    eps: float = 0.01
    mean_acc: float | None = None
    mu1: float = 0.001
    mu2: float = 0.02
    nu1: float = 0.3
    nu2: float = 0.001
    xi: float = 0.01
    lambda1: float = 1.05
    lambda2: float = 0.9
    frozen: bool = False


def update_epsilon(controller: EpsilonController, acc: float) -> float:
    """
    Apply one controller step and return the new ε.

    The first call only seeds the moving average. ε is clamped to [ν2, ν1].
    """
    c = controller
    if c.frozen:
        return c.eps
    if c.mean_acc is None:
        c.mean_acc = acc
        return c.eps

    previous = c.eps
    if acc < c.mean_acc - c.mu1 and c.eps < c.nu1:
        c.eps = min(c.lambda1 * c.eps, c.eps + c.xi)
    elif acc > c.mean_acc + c.mu2 and c.eps > c.nu2:
        c.eps = max(c.lambda2 * c.eps, c.eps - c.xi)
    c.eps = min(max(c.eps, c.nu2), c.nu1)
    c.mean_acc = 0.8 * c.mean_acc + 0.2 * acc

    if c.eps != previous:
        logger.debug("threshold updated", extra={"eps": c.eps, "acc": acc})
    return c.eps
