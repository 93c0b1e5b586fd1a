"""Plan directory persistence: manifest.json plus per-worker edge and map files."""

from __future__ import annotations

import hashlib
import logging
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from ..domain.errors import PlanIntegrityError
from ..domain.models import PlanManifest, WorkerFileEntry
from ..domain.services.partitioner import PartitionPlan, WorkerPartition, compute_stats

logger = logging.getLogger(__name__)

PLAN_FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"


def _edges_name(worker: int) -> str:
    return f"worker_{worker}.edges"


def _map_name(worker: int) -> str:
    return f"worker_{worker}.map"


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _edges_text(part: WorkerPartition) -> bytes:
    return "".join(f"{u} {v}\n" for u, v in part.edges.tolist()).encode("ascii")


def _map_text(part: WorkerPartition) -> bytes:
    lines = (
        f"{local} {gid} {int(master)}\n"
        for local, (gid, master) in enumerate(
            zip(part.global_ids.tolist(), part.master_flags.tolist(), strict=True)
        )
    )
    return "".join(lines).encode("ascii")


def write_plan(plan: PartitionPlan, directory: str | Path) -> PlanManifest:
    """
    Write a plan directory.

    Args:
        plan: Plan to persist
        directory: Target directory (created if missing)

    Returns:
        The manifest that was written
    """
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for part in plan.workers:
        edges_bytes = _edges_text(part)
        map_bytes = _map_text(part)
        (root / _edges_name(part.worker_id)).write_bytes(edges_bytes)
        (root / _map_name(part.worker_id)).write_bytes(map_bytes)
        entries.append(
            WorkerFileEntry(
                worker_id=part.worker_id,
                num_local_vertices=part.num_local,
                num_edges=int(part.edges.shape[0]),
                edges_sha256=_sha256(edges_bytes),
                map_sha256=_sha256(map_bytes),
            )
        )
    manifest = PlanManifest(
        version=PLAN_FORMAT_VERSION,
        num_vertices=plan.num_vertices,
        num_edges=plan.num_edges,
        cluster=plan.cluster,
        stats=compute_stats(plan, plan.cluster),
        workers=entries,
    )
    (root / MANIFEST_NAME).write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info("plan written", extra={"path": str(root), "p": plan.cluster.p})
    return manifest


def load_manifest(directory: str | Path) -> PlanManifest:
    """
    Read and validate manifest.json.

    Raises:
        PlanIntegrityError: If missing, malformed or of another format version
    """
    path = Path(directory) / MANIFEST_NAME
    if not path.is_file():
        raise PlanIntegrityError(f"{path}: manifest missing")
    try:
        manifest = PlanManifest.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise PlanIntegrityError(f"{path}: invalid manifest: {e.error_count()} errors") from e
    if manifest.version != PLAN_FORMAT_VERSION:
        raise PlanIntegrityError(
            f"{path}: format version {manifest.version}, expected {PLAN_FORMAT_VERSION}"
        )
    return manifest


def _read_checked(path: Path, expected_sha: str) -> bytes:
    if not path.is_file():
        raise PlanIntegrityError(f"{path}: file missing")
    data = path.read_bytes()
    if _sha256(data) != expected_sha:
        raise PlanIntegrityError(f"{path}: checksum mismatch (truncated or modified)")
    return data


def _parse_rows(data: bytes, width: int, path: Path) -> np.ndarray:
    rows = []
    for line_number, line in enumerate(data.decode("ascii").splitlines(), start=1):
        parts = line.split()
        if len(parts) != width:
            raise PlanIntegrityError(f"{path}:{line_number}: expected {width} fields")
        try:
            rows.append([int(x) for x in parts])
        except ValueError:
            raise PlanIntegrityError(f"{path}:{line_number}: non-integer field") from None
    return np.array(rows, dtype=np.int64).reshape(-1, width)


def load_plan(directory: str | Path) -> PartitionPlan:
    """
    Load a plan directory written by `write_plan`.

    Raises:
        PlanIntegrityError: On a missing or modified file, a version mismatch or
            inconsistent contents
    """
    root = Path(directory)
    manifest = load_manifest(root)
    workers: list[WorkerPartition] = []
    owner = np.full(manifest.num_vertices, -1, dtype=np.int64)
    replica_sets: list[list[int]] = [[] for _ in range(manifest.num_vertices)]

    for entry in sorted(manifest.workers, key=lambda e: e.worker_id):
        edges_path = root / _edges_name(entry.worker_id)
        map_path = root / _map_name(entry.worker_id)
        edges = _parse_rows(_read_checked(edges_path, entry.edges_sha256), 2, edges_path)
        mapping = _parse_rows(_read_checked(map_path, entry.map_sha256), 3, map_path)
        if edges.shape[0] != entry.num_edges or mapping.shape[0] != entry.num_local_vertices:
            raise PlanIntegrityError(f"worker {entry.worker_id}: counts disagree with manifest")
        if not np.array_equal(mapping[:, 0], np.arange(mapping.shape[0])):
            raise PlanIntegrityError(f"{map_path}: local IDs are not contiguous from 0")
        global_ids = mapping[:, 1]
        if global_ids.size and (global_ids.min() < 0 or global_ids.max() >= manifest.num_vertices):
            raise PlanIntegrityError(f"{map_path}: global ID out of range")
        master_flags = mapping[:, 2] == 1
        for gid, is_master in zip(global_ids.tolist(), master_flags.tolist(), strict=True):
            replica_sets[gid].append(entry.worker_id)
            if is_master:
                if owner[gid] >= 0:
                    raise PlanIntegrityError(f"vertex {gid}: more than one master")
                owner[gid] = entry.worker_id
        workers.append(
            WorkerPartition(
                worker_id=entry.worker_id,
                global_ids=global_ids,
                edges=edges,
                master_flags=master_flags,
            )
        )

    for gid, hosted in enumerate(replica_sets):
        if hosted and owner[gid] < 0:
            raise PlanIntegrityError(f"vertex {gid}: replicated without a master")

    plan = PartitionPlan(
        num_vertices=manifest.num_vertices,
        num_edges=manifest.num_edges,
        cluster=manifest.cluster,
        workers=workers,
        owner=owner,
        replicas=[tuple(sorted(h)) for h in replica_sets],
    )
    plan.validate()
    logger.info("plan loaded", extra={"path": str(root), "p": manifest.cluster.p})
    return plan
