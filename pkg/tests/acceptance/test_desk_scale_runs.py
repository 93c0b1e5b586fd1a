"""Full-size runs on the 2000-vertex planted graph (marked slow)."""

from __future__ import annotations

from pathlib import Path
from typing import Any

import numpy as np
import pytest

from cdfgnn.cli.dependencies import (
    get_normalized,
    get_optimizer_factory,
    get_params,
    get_plan,
    get_runtime,
)
from cdfgnn.config import Settings, load_settings
from cdfgnn.domain.models import EpochMetrics
from cdfgnn.domain.services.graph_store import Dataset, gen_planted_features, gen_power_law
from cdfgnn.domain.services.reference_oracle import OracleTrainer
from cdfgnn.infrastructure.bsp_runtime import ClusterRuntime
from cdfgnn.infrastructure.metrics_store import write_metrics

pytestmark = pytest.mark.slow

# p -> (hosts, gpus per host)
SHAPES = {1: (1, 1), 2: (2, 1), 4: (2, 2)}
EXACT_EPOCHS = 20
# оптимизатор по умолчанию для приёмки; Adam только в тесте сходимости
SGD = {"optimizer": "sgd"}


@pytest.fixture(scope="module")
def planted() -> Dataset:
    graph = gen_power_law(2000, 3, seed=0)
    features, labels = gen_planted_features(graph, 4, 32, 0.1, seed=0)
    dataset = Dataset(graph=graph, features=features, labels=labels)
    dataset.validate()
    return dataset


def _settings(p: int = 4, **groups: dict[str, Any]) -> Settings:
    hosts, gpus = SHAPES[p]
    partition = {"hosts": hosts, "gpus_per_host": gpus, **groups.pop("partition", {})}
    return load_settings(partition=partition, metrics_wall_clock=False, **groups)


def _exact_settings(p: int) -> Settings:
    return _settings(
        p,
        train={"epochs": EXACT_EPOCHS, "optimizer": "sgd"},
        cache={"enabled": False},
    )


def _runtime(dataset: Dataset, settings: Settings, record_grads: bool = False) -> ClusterRuntime:
    plan, _ = get_plan(dataset.graph, settings)
    return get_runtime(
        dataset, plan, get_normalized(dataset, settings), settings, record_grads=record_grads
    )


def _train(dataset: Dataset, settings: Settings) -> tuple[ClusterRuntime, list[EpochMetrics]]:
    runtime = _runtime(dataset, settings)
    return runtime, runtime.run(settings.train.epochs)


def _relative(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def _total_messages(history: list[EpochMetrics]) -> int:
    return sum(m.vertex_messages for m in history)


@pytest.mark.parametrize("p", [1, 2, 4])
def test_exact_mode_reproduces_single_device(planted: Dataset, p: int) -> None:
    """Test summed gradients and final weights against the single-device trainer."""
    settings = _exact_settings(p)
    runtime = _runtime(planted, settings, record_grads=True)
    oracle = OracleTrainer(
        planted,
        get_normalized(planted, settings),
        get_params(planted, settings),
        get_optimizer_factory(settings)(),
        settings.train.loss_reduction,
    )

    runtime.run(EXACT_EPOCHS)
    for epoch in range(1, EXACT_EPOCHS + 1):
        oracle.step(epoch)

    for ours, theirs in zip(runtime.grad_history, oracle.history, strict=True):
        for a, b in zip(ours, theirs, strict=True):
            assert _relative(a, b) <= 1e-10
    for a, b in zip(runtime.params.weights, oracle.params.weights, strict=True):
        np.testing.assert_allclose(a, b, rtol=1e-8, atol=1e-12)


def test_zero_threshold_cache_reproduces_exact_mode(planted: Dataset) -> None:
    """Test that ε pinned at 0 with the cache engaged follows the exact run."""
    exact, exact_history = _train(planted, _exact_settings(4))
    cached, cached_history = _train(
        planted,
        _settings(
            4,
            train={"epochs": EXACT_EPOCHS, "optimizer": "sgd"},
            cache={"enabled": True, "eps_fixed": 0.0},
        ),
    )

    for a, b in zip(exact_history, cached_history, strict=True):
        assert b.loss == pytest.approx(a.loss, rel=1e-10)
        assert b.train_acc == pytest.approx(a.train_acc, abs=1e-3)
    for a, b in zip(exact.params.weights, cached.params.weights, strict=True):
        assert _relative(b, a) <= 1e-10


def test_adaptive_cache_cuts_messages(planted: Dataset) -> None:
    """Test at least 25% fewer vertex messages at the same accuracy over 200 epochs."""
    settings = _settings(4, train=SGD)
    _, cached = _train(planted, settings)
    _, exact = _train(planted, _settings(4, train=SGD, cache={"enabled": False}))

    cache = settings.cache
    assert all(cache.nu2 <= m.eps <= cache.nu1 for m in cached)

    reduction = 1 - _total_messages(cached) / _total_messages(exact)
    assert reduction >= 0.25
    assert abs(cached[-1].train_acc - exact[-1].train_acc) <= 0.02


def test_host_locality_weight_cuts_outer_traffic(planted: Dataset) -> None:
    """Test that γ = 0.1 lowers the busiest outer connection on a 2 x 2 cluster."""
    _, flat = get_plan(planted.graph, _settings(4, partition={"gamma": 0.0}))
    _, local = get_plan(planted.graph, _settings(4, partition={"gamma": 0.1}))

    assert local.outer_max <= 0.9 * flat.outer_max
    assert flat.edge_imbalance <= 1.1
    assert local.edge_imbalance <= 1.1


def test_training_converges_with_cache_and_quantization(planted: Dataset) -> None:
    """Test ≥ 90% train accuracy in exact mode and B = 8 staying within two points."""
    _, exact = _train(planted, _settings(4, cache={"enabled": False}))
    _, compressed = _train(
        planted,
        _settings(4, cache={"enabled": True}, quant={"enabled": True, "bits": 8}),
    )

    assert exact[-1].train_acc >= 0.9
    assert compressed[-1].train_acc >= exact[-1].train_acc - 0.02


@pytest.mark.parametrize(
    "groups",
    [
        {"train": {"epochs": EXACT_EPOCHS, "optimizer": "sgd"}, "cache": {"enabled": False}},
        {"train": SGD},
    ],
    ids=["exact", "adaptive-cache"],
)
def test_repeated_runs_write_identical_metrics(
    planted: Dataset,
    tmp_path: Path,
    groups: dict[str, Any],
) -> None:
    """Test byte-identical metrics files for two runs with the same seed."""
    settings = _settings(4, **groups)
    for name in ("first.csv", "second.csv"):
        _, history = _train(planted, settings)
        write_metrics(tmp_path / name, history, settings.train.layers)

    assert (tmp_path / "first.csv").read_bytes() == (tmp_path / "second.csv").read_bytes()
