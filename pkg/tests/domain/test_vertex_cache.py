"""Tests for the adaptive replica cache and its threshold controller."""

from __future__ import annotations

import numpy as np
import pytest

from cdfgnn.domain.errors import UnknownVertexError
from cdfgnn.domain.services.vertex_cache import (
    CacheTable,
    EpsilonController,
    apply_scatter,
    master_pass,
    mirror_pass,
    scatter_pass,
    should_send,
    update_epsilon,
)


def test_should_send_examples() -> None:
    """Test the send condition on the reference examples."""
    assert should_send(np.array([0.5]), np.zeros(1), 0.1)
    assert not should_send(np.array([1.0, 2.0]), np.array([1.0, 2.0]), 0.1)
    assert not should_send(np.array([1.05, 2.0]), np.array([1.0, 2.0]), 0.1)
    assert should_send(np.array([1.5, 2.0]), np.array([1.0, 2.0]), 0.1)
    # ε = 0 отправляет любое изменение
    assert should_send(np.array([1.0 + 1e-12]), np.array([1.0]), 0.0)


def test_mirror_pass_sends_only_drifted_rows() -> None:
    """Test that only drifted mirrors send, with deltas against their old snapshots."""
    cache = CacheTable.zeros(3, 1, np.float64)
    cache.local_snapshot[1] = [2.0]
    rows = np.array([0, 1])

    sending, deltas = mirror_pass(cache, rows, np.array([[1.0], [2.01]]), 0.1)

    assert sending.tolist() == [0]
    assert deltas.tolist() == [[1.0]]
    assert cache.local_snapshot[:, 0].tolist() == [1.0, 2.0, 0.0]


def test_master_pass_adds_delta_to_aggregate() -> None:
    """Test aggregate 5 plus mirror delta 1 gives 6 and marks the row active."""
    cache = CacheTable.zeros(2, 1, np.float64)
    cache.accumulator[0] = [5.0]
    cache.local_snapshot[0] = [2.0]

    active = master_pass(
        cache,
        [(np.array([0]), np.array([[1.0]]))],
        master_rows=np.array([0]),
        own_current=np.array([[2.0]]),
        eps=0.1,
    )

    assert active.tolist() == [0]
    assert cache.accumulator[0, 0] == 6.0


def test_master_pass_folds_own_drift() -> None:
    """Test that a drifting master contributes its own delta without mirror input."""
    cache = CacheTable.zeros(1, 2, np.float64)
    cache.accumulator[0] = [3.0, 3.0]
    cache.local_snapshot[0] = [1.0, 1.0]

    active = master_pass(cache, [], np.array([0]), np.array([[2.0, 1.0]]), 0.1)

    assert active.tolist() == [0]
    assert cache.accumulator[0].tolist() == [4.0, 3.0]
    assert cache.local_snapshot[0].tolist() == [2.0, 1.0]


def test_master_pass_rejects_unknown_rows() -> None:
    """Test that a delta for a row not mastered here is a protocol error."""
    cache = CacheTable.zeros(3, 1, np.float64)

    with pytest.raises(UnknownVertexError):
        master_pass(
            cache,
            [(np.array([2]), np.array([[1.0]]))],
            master_rows=np.array([0]),
            own_current=np.zeros((1, 1)),
            eps=0.0,
        )


@pytest.mark.parametrize("mode", ["delta", "full"])
def test_scatter_then_apply_makes_published_match_aggregate(mode: str) -> None:
    """Test both scatter modes bring the published rows up to the aggregate."""
    cache = CacheTable.zeros(2, 2, np.float64)
    cache.accumulator[:] = [[1.0, 2.0], [3.0, 4.0]]
    cache.published[1] = [3.0, 1.0]
    active = np.array([0, 1])

    payload = scatter_pass(cache, active, mode)  # type: ignore[arg-type]
    if mode == "delta":
        assert payload.tolist() == [[1.0, 2.0], [0.0, 3.0]]
    apply_scatter(cache, active, payload, mode)  # type: ignore[arg-type]

    assert np.array_equal(cache.published, cache.accumulator)


def test_controller_loosens_when_accuracy_drops() -> None:
    """Test ε 0.1 -> 0.105 on an accuracy drop."""
    controller = EpsilonController(eps=0.1)
    update_epsilon(controller, 0.8)

    assert update_epsilon(controller, 0.7) == pytest.approx(0.105, abs=1e-15)
    assert controller.mean_acc == pytest.approx(0.78)


def test_controller_tightens_when_accuracy_climbs() -> None:
    """Test ε 0.005 -> 0.0045 on an accuracy gain."""
    controller = EpsilonController(eps=0.005)
    update_epsilon(controller, 0.5)

    assert update_epsilon(controller, 0.6) == pytest.approx(0.0045, abs=1e-15)


def test_controller_holds_inside_band_and_seeds_first() -> None:
    """Test that the first call only seeds and small moves keep ε."""
    controller = EpsilonController(eps=0.05)

    assert update_epsilon(controller, 0.8) == 0.05
    assert controller.mean_acc == 0.8
    assert update_epsilon(controller, 0.81) == 0.05


def test_controller_respects_bounds_and_freeze() -> None:
    """Test clamping to [ν2, ν1] and a frozen controller."""
    controller = EpsilonController(eps=0.29)
    update_epsilon(controller, 0.9)
    assert update_epsilon(controller, 0.1) == pytest.approx(0.3)
    assert update_epsilon(controller, 0.0) == pytest.approx(0.3)

    frozen = EpsilonController(eps=0.2, frozen=True)
    update_epsilon(frozen, 0.9)
    assert update_epsilon(frozen, 0.1) == 0.2
    assert frozen.mean_acc is None
