"""Tests for plan directory persistence."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from cdfgnn.domain.errors import PlanIntegrityError
from cdfgnn.domain.models import ClusterShape
from cdfgnn.domain.services.partitioner import PartitionPlan, partition
from cdfgnn.infrastructure.plan_store import MANIFEST_NAME, load_manifest, load_plan, write_plan


def _assert_same_plan(a: PartitionPlan, b: PartitionPlan) -> None:
    assert a.num_vertices == b.num_vertices
    assert a.cluster == b.cluster
    assert np.array_equal(a.owner, b.owner)
    assert a.replicas == b.replicas
    for x, y in zip(a.workers, b.workers, strict=True):
        assert np.array_equal(x.global_ids, y.global_ids)
        assert np.array_equal(x.edges, y.edges)
        assert np.array_equal(x.master_flags, y.master_flags)


def test_write_then_load_hand_built_plan(six_vertex_plan: PartitionPlan, tmp_path: Path) -> None:
    """Test that the six-vertex plan survives a write/load cycle."""
    manifest = write_plan(six_vertex_plan, tmp_path / "plan")

    assert manifest.stats.outer_max == 2
    assert (tmp_path / "plan" / "worker_2.map").read_text().splitlines() == [
        "0 1 0",
        "1 4 0",
        "2 5 1",
    ]
    _assert_same_plan(six_vertex_plan, load_plan(tmp_path / "plan"))


def test_write_then_load_streamed_plan(make_dataset, tmp_path: Path) -> None:
    """Test a partitioner-produced plan on a 2x2 cluster."""
    graph = make_dataset(n=70).graph
    plan, _ = partition(graph, ClusterShape(num_hosts=2, gpus_per_host=2))

    write_plan(plan, tmp_path)
    _assert_same_plan(plan, load_plan(tmp_path))


def test_truncated_file_fails_checksum(six_vertex_plan: PartitionPlan, tmp_path: Path) -> None:
    """Test that a modified worker file is detected."""
    write_plan(six_vertex_plan, tmp_path)
    edges = tmp_path / "worker_1.edges"
    edges.write_bytes(edges.read_bytes()[:-2])

    with pytest.raises(PlanIntegrityError):
        load_plan(tmp_path)


def test_missing_and_foreign_manifests(six_vertex_plan: PartitionPlan, tmp_path: Path) -> None:
    """Test missing, malformed and wrong-version manifests."""
    with pytest.raises(PlanIntegrityError):
        load_manifest(tmp_path)

    write_plan(six_vertex_plan, tmp_path)
    path = tmp_path / MANIFEST_NAME
    document = json.loads(path.read_text())

    document["version"] = 99
    path.write_text(json.dumps(document))
    with pytest.raises(PlanIntegrityError):
        load_manifest(tmp_path)

    path.write_text("{not json")
    with pytest.raises(PlanIntegrityError):
        load_manifest(tmp_path)


def test_missing_worker_file(six_vertex_plan: PartitionPlan, tmp_path: Path) -> None:
    """Test that a deleted map file is reported."""
    write_plan(six_vertex_plan, tmp_path)
    (tmp_path / "worker_0.map").unlink()

    with pytest.raises(PlanIntegrityError):
        load_plan(tmp_path)
