"""Shared pytest fixtures."""

from __future__ import annotations

import os
from collections.abc import Callable

import numpy as np
import pytest

from cdfgnn.config import get_settings
from cdfgnn.domain.models import ClusterShape
from cdfgnn.domain.services.graph_store import (
    Dataset,
    FeatureMatrix,
    Graph,
    LabelSet,
    Role,
    gen_planted_features,
    gen_power_law,
)
from cdfgnn.domain.services.partitioner import PartitionPlan, build_plan

# A=0, B=1, C=2, D=3, E=4, F=5; B is replicated on all three workers
SIX_VERTEX_EDGES = np.array([[0, 1], [0, 2], [1, 3], [3, 4], [1, 5], [4, 5]], dtype=np.int64)
SIX_VERTEX_ASSIGNMENT = np.array([0, 0, 1, 1, 2, 2], dtype=np.int64)

DatasetFactory = Callable[..., Dataset]


@pytest.fixture(autouse=True)
def _clear_settings_cache(monkeypatch: pytest.MonkeyPatch) -> None:
    """Keep CDFGNN_* variables of the developer's shell out of the tests."""
    for name in list(os.environ):
        if name.startswith("CDFGNN_"):
            monkeypatch.delenv(name)
    get_settings.cache_clear()


@pytest.fixture
def triangle_graph() -> Graph:
    return Graph.from_edges(3, np.array([[0, 1], [1, 2], [0, 2]]))


@pytest.fixture
def six_vertex_graph() -> Graph:
    return Graph.from_edges(6, SIX_VERTEX_EDGES)


@pytest.fixture
def six_vertex_plan(six_vertex_graph: Graph) -> PartitionPlan:
    """Hand-built 3-worker plan: B on workers 0/1/2, E on workers 1/2."""
    cluster = ClusterShape(num_hosts=3, gpus_per_host=1)
    return build_plan(six_vertex_graph, cluster, SIX_VERTEX_ASSIGNMENT)


@pytest.fixture
def six_vertex_dataset(six_vertex_graph: Graph) -> Dataset:
    rng = np.random.default_rng(3)
    return Dataset(
        graph=six_vertex_graph,
        features=FeatureMatrix(values=rng.standard_normal((6, 2))),
        labels=LabelSet(
            labels=np.array([0, 1, 0, 1, 0, 1], dtype=np.int64),
            num_classes=2,
            masks=np.full(6, int(Role.TRAIN), dtype=np.int8),
        ),
    )


@pytest.fixture
def make_dataset() -> DatasetFactory:
    """Return a factory for planted power-law datasets."""

    def _factory(
        n: int = 60,
        m: int = 2,
        classes: int = 3,
        dim: int = 8,
        noise: float = 0.1,
        seed: int = 0,
    ) -> Dataset:
        graph = gen_power_law(n, m, seed)
        features, labels = gen_planted_features(graph, classes, dim, noise, seed)
        dataset = Dataset(graph=graph, features=features, labels=labels)
        dataset.validate()
        return dataset

    return _factory
