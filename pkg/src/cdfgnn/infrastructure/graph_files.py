"""Feature and label files next to an edge list."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from ..domain.errors import FeatureFileError, LabelFileError
from ..domain.services.graph_store import (
    Dataset,
    FeatureMatrix,
    LabelSet,
    Role,
    load_edge_list,
)

logger = logging.getLogger(__name__)

FEATURE_MAGIC = b"CDFG"

# magic, n, dim, ширина элемента в байтах (4 или 8)
FEATURE_HEADER = np.dtype([("magic", "S4"), ("n", "<u4"), ("dim", "<u4"), ("dtype", "u1")])

_DTYPE_CODES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}

MASK_CHARS = {
    Role.TRAIN: "t",
    Role.VAL: "v",
    Role.TEST: "e",
    Role.NONE: "-",
}
_MASK_FROM_CHAR = {char: role for role, char in MASK_CHARS.items()}


def write_features(features: FeatureMatrix, path: str | Path) -> None:
    """Write features as little-endian binary with the CDFG header."""
    values = features.values
    dtype = np.dtype("<f4") if values.dtype == np.float32 else np.dtype("<f8")
    header = np.zeros(1, dtype=FEATURE_HEADER)
    header[0] = (FEATURE_MAGIC, features.rows, features.dim, dtype.itemsize)
    with open(path, "wb") as f:
        f.write(header.tobytes())
        f.write(np.ascontiguousarray(values, dtype=dtype).tobytes())


def read_features(path: str | Path) -> FeatureMatrix:
    """
    Read a CDFG feature file.

    Raises:
        FeatureFileError: On a bad magic, unknown dtype, wrong size or non-finite values
    """
    data = Path(path).read_bytes()
    if len(data) < FEATURE_HEADER.itemsize:
        raise FeatureFileError(f"{path}: file shorter than header")
    header = np.frombuffer(data, dtype=FEATURE_HEADER, count=1)[0]
    if bytes(header["magic"]) != FEATURE_MAGIC:
        raise FeatureFileError(f"{path}: bad magic {bytes(header['magic'])!r}")
    dtype = _DTYPE_CODES.get(int(header["dtype"]))
    if dtype is None:
        raise FeatureFileError(f"{path}: unknown element width {int(header['dtype'])}")
    n, dim = int(header["n"]), int(header["dim"])
    expected = FEATURE_HEADER.itemsize + n * dim * dtype.itemsize
    if len(data) != expected:
        raise FeatureFileError(f"{path}: expected {expected} bytes, found {len(data)}")
    values = np.frombuffer(data, dtype=dtype, offset=FEATURE_HEADER.itemsize).reshape(n, dim)
    if not np.all(np.isfinite(values)):
        raise FeatureFileError(f"{path}: non-finite feature values")
    return FeatureMatrix(values=values.astype(dtype.newbyteorder("="), copy=True))


def write_labels(labels: LabelSet, path: str | Path) -> None:
    """Write a "k <classes>" header, then "label mask" per vertex."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"k {labels.num_classes}\n")
        for label, role in zip(labels.labels.tolist(), labels.masks.tolist(), strict=True):
            f.write(f"{label} {MASK_CHARS[Role(role)]}\n")


def read_labels(path: str | Path) -> LabelSet:
    """
    Read a label file; without a "k" header num_classes is max label + 1.

    Raises:
        LabelFileError: On a malformed line or a masked label out of range
    """
    declared: int | None = None
    labels: list[int] = []
    masks: list[int] = []
    with open(path, encoding="utf-8") as f:
        for line_number, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise LabelFileError(f"{path}:{line_number}: expected 'label mask'")
            if parts[0] == "k" and not labels and declared is None:
                declared = _parse_label(parts[1], path, line_number)
                continue
            role = _MASK_FROM_CHAR.get(parts[1])
            if role is None:
                raise LabelFileError(f"{path}:{line_number}: unknown mask {parts[1]!r}")
            labels.append(_parse_label(parts[0], path, line_number))
            masks.append(int(role))

    label_array = np.array(labels, dtype=np.int64)
    mask_array = np.array(masks, dtype=np.int8)
    masked = mask_array != int(Role.NONE)
    num_classes = declared
    if num_classes is None:
        num_classes = int(label_array[masked].max()) + 1 if masked.any() else 0
    in_mask = label_array[masked]
    if in_mask.size and (in_mask.min() < 0 or in_mask.max() >= num_classes):
        raise LabelFileError(f"{path}: masked label outside [0, {num_classes})")
    return LabelSet(labels=label_array, num_classes=num_classes, masks=mask_array)


def _parse_label(token: str, path: str | Path, line_number: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise LabelFileError(f"{path}:{line_number}: cannot parse {token!r}") from None


def load_dataset(
    graph_path: str | Path,
    features_path: str | Path,
    labels_path: str | Path,
) -> Dataset:
    """Load and cross-validate an edge list with its feature and label files."""
    dataset = Dataset(
        graph=load_edge_list(graph_path),
        features=read_features(features_path),
        labels=read_labels(labels_path),
    )
    dataset.validate()
    logger.info(
        "dataset loaded",
        extra={
            "vertices": dataset.graph.num_vertices,
            "dim": dataset.features.dim,
            "classes": dataset.labels.num_classes,
        },
    )
    return dataset
