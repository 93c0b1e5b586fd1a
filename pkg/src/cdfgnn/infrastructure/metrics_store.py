"""Metrics CSV and JSON summary files, and run-to-run comparison."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

from ..domain.errors import SchemaMismatchError
from ..domain.models import ComparisonReport, EpochDelta, EpochMetrics, RunSummary

logger = logging.getLogger(__name__)

METRICS_VERSION_LINE = "# cdfgnn-metrics v1"


def metrics_columns(num_layers: int) -> list[str]:
    """Column order: the base schema followed by the extra columns."""
    return [
        "epoch",
        "loss",
        "train_acc",
        "val_acc",
        "eps",
        *[f"fwd_sends_l{i}" for i in range(1, num_layers + 1)],
        *[f"bwd_sends_l{i}" for i in range(1, num_layers + 1)],
        "inner_bytes",
        "outer_bytes",
        "modeled_comm_s",
        "wall_s",
        "test_acc",
        "vertex_messages",
        *[f"fwd_frac_l{i}" for i in range(1, num_layers + 1)],
        *[f"bwd_frac_l{i}" for i in range(1, num_layers + 1)],
    ]


def _row(metrics: EpochMetrics) -> list[str]:
    return [
        str(metrics.epoch),
        repr(metrics.loss),
        repr(metrics.train_acc),
        repr(metrics.val_acc),
        repr(metrics.eps),
        *[str(v) for v in metrics.fwd_sends],
        *[str(v) for v in metrics.bwd_sends],
        str(metrics.inner_bytes),
        str(metrics.outer_bytes),
        repr(metrics.modeled_comm_s),
        repr(metrics.wall_s),
        repr(metrics.test_acc),
        str(metrics.vertex_messages),
        *[repr(v) for v in metrics.fwd_fractions],
        *[repr(v) for v in metrics.bwd_fractions],
    ]


class MetricsWriter:
    """Streams one CSV row per epoch; the header is written on open."""

    def __init__(self, path: str | Path, num_layers: int) -> None:
        self._path = Path(path)
        self._path.parent.mkdir(parents=True, exist_ok=True)
        self._file = open(self._path, "w", encoding="utf-8", newline="")
        self._file.write(METRICS_VERSION_LINE + "\n")
        self._writer = csv.writer(self._file, lineterminator="\n")
        self._writer.writerow(metrics_columns(num_layers))

    def write(self, metrics: EpochMetrics) -> None:
        self._writer.writerow(_row(metrics))
        self._file.flush()

    def close(self) -> None:
        self._file.close()

    def __enter__(self) -> MetricsWriter:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()


def write_metrics(path: str | Path, history: list[EpochMetrics], num_layers: int) -> None:
    with MetricsWriter(path, num_layers) as writer:
        for metrics in history:
            writer.write(metrics)


@dataclass(frozen=True, slots=True)
class MetricsTable:
    columns: list[str]
    rows: list[dict[str, float]]

    def column(self, name: str) -> list[float]:
        return [row[name] for row in self.rows]

    def bytes_per_epoch(self) -> list[float]:
        return [row["inner_bytes"] + row["outer_bytes"] for row in self.rows]


def read_metrics(path: str | Path) -> MetricsTable:
    """
    Read a metrics CSV.

    Raises:
        SchemaMismatchError: On a missing or unknown version line or an unparsable row
    """
    with open(path, encoding="utf-8", newline="") as f:
        first = f.readline().rstrip("\n")
        if first != METRICS_VERSION_LINE:
            raise SchemaMismatchError(
                f"{path}: expected {METRICS_VERSION_LINE!r}, got {first!r}"
            )
        reader = csv.reader(f)
        try:
            columns = next(reader)
        except StopIteration:
            raise SchemaMismatchError(f"{path}: missing column header") from None
        rows = []
        for line_number, record in enumerate(reader, start=3):
            if len(record) != len(columns):
                raise SchemaMismatchError(f"{path}:{line_number}: wrong number of fields")
            try:
                rows.append(
                    {name: float(value) for name, value in zip(columns, record, strict=True)}
                )
            except ValueError:
                raise SchemaMismatchError(f"{path}:{line_number}: non-numeric field") from None
    return MetricsTable(columns=columns, rows=rows)


def reduction_fraction(baseline: float, candidate: float) -> float | None:
    """1 - candidate / baseline; None when the baseline is zero."""
    if baseline <= 0:
        return None
    return 1.0 - candidate / baseline


def compare_runs(a: MetricsTable, b: MetricsTable) -> ComparisonReport:
    """
    Compare run b against baseline run a over their common epochs.

    Deltas are b - a; reductions are 1 - total_b / total_a.

    Raises:
        SchemaMismatchError: If the column sets differ
    """
    if a.columns != b.columns:
        raise SchemaMismatchError("metrics files have different columns")
    common = min(len(a.rows), len(b.rows))
    if len(a.rows) != len(b.rows):
        logger.warning(
            "epoch counts differ; comparing the common prefix",
            extra={"epochs_a": len(a.rows), "epochs_b": len(b.rows), "common": common},
        )

    per_epoch = []
    for ra, rb in zip(a.rows[:common], b.rows[:common], strict=True):
        per_epoch.append(
            EpochDelta(
                epoch=int(ra["epoch"]),
                loss=rb["loss"] - ra["loss"],
                train_acc=rb["train_acc"] - ra["train_acc"],
                val_acc=rb["val_acc"] - ra["val_acc"],
                vertex_messages=int(rb["vertex_messages"] - ra["vertex_messages"]),
                bytes=int(
                    rb["inner_bytes"] + rb["outer_bytes"] - ra["inner_bytes"] - ra["outer_bytes"]
                ),
            )
        )

    final_train = final_val = message_reduction = byte_reduction = None
    if common:
        final_train = b.rows[common - 1]["train_acc"] - a.rows[common - 1]["train_acc"]
        final_val = b.rows[common - 1]["val_acc"] - a.rows[common - 1]["val_acc"]
        message_reduction = reduction_fraction(
            sum(a.column("vertex_messages")[:common]), sum(b.column("vertex_messages")[:common])
        )
        byte_reduction = reduction_fraction(
            sum(a.bytes_per_epoch()[:common]), sum(b.bytes_per_epoch()[:common])
        )
    return ComparisonReport(
        common_epochs=common,
        epochs_a=len(a.rows),
        epochs_b=len(b.rows),
        per_epoch=per_epoch,
        final_train_acc_delta=final_train,
        final_val_acc_delta=final_val,
        message_reduction=message_reduction,
        byte_reduction=byte_reduction,
    )


def summarize(history: list[EpochMetrics], **extra: object) -> RunSummary:
    """Build the JSON summary of a finished run."""
    last = history[-1] if history else None
    return RunSummary(
        epochs=len(history),
        final_loss=last.loss if last else None,
        final_train_acc=last.train_acc if last else None,
        final_val_acc=last.val_acc if last else None,
        final_test_acc=last.test_acc if last else None,
        total_vertex_messages=sum(m.vertex_messages for m in history),
        total_bytes=sum(m.inner_bytes + m.outer_bytes for m in history),
        modeled_comm_s=sum(m.modeled_comm_s for m in history),
        sync_wall_s=sum(w.sync_wall_s for m in history for w in m.workers),
        **extra,
    )


def write_summary(summary: RunSummary, path: str | Path) -> None:
    Path(path).write_text(summary.model_dump_json(indent=2) + "\n", encoding="utf-8")
