"""Subcommand handlers; each returns the process exit status."""

from __future__ import annotations

import argparse
import logging
from pathlib import Path

from pydantic import TypeAdapter

from cdfgnn.cli.dependencies import (
    exact_variant,
    get_normalized,
    get_optimizer_factory,
    get_params,
    get_plan,
    get_runtime,
    variant,
)
from cdfgnn.config import Settings
from cdfgnn.domain.models import AblationRow, EpochMetrics, RunSummary
from cdfgnn.domain.services.graph_store import (
    Dataset,
    NormalizedAdjacency,
    gen_planted_features,
    gen_power_law,
    load_edge_list,
    write_edge_list,
)
from cdfgnn.domain.services.partitioner import PartitionPlan
from cdfgnn.domain.services.reference_oracle import OracleTrainer
from cdfgnn.infrastructure.graph_files import load_dataset, write_features, write_labels
from cdfgnn.infrastructure.metrics_store import (
    MetricsWriter,
    compare_runs,
    read_metrics,
    reduction_fraction,
    summarize,
    write_summary,
)
from cdfgnn.infrastructure.plan_store import write_plan

logger = logging.getLogger(__name__)

EDGES_SUFFIX = ".edges"
FEATURES_SUFFIX = ".feat"
LABELS_SUFFIX = ".labels"

# (variant, cache, quant)
ABLATION_VARIANTS: tuple[tuple[str, bool, bool], ...] = (
    ("baseline", False, False),
    ("cache", True, False),
    ("quant", False, True),
    ("cache+quant", True, True),
)


def _summary_path(args: argparse.Namespace) -> Path:
    if args.summary_out is not None:
        return Path(args.summary_out)
    return Path(args.metrics_out).with_suffix(".json")


def _emit(text: str, out: str | Path | None = None) -> None:
    if out is not None:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n", encoding="utf-8")
    print(text)


def cmd_gen_graph(args: argparse.Namespace, settings: Settings) -> int:
    """Generate a power-law graph with planted features and labels."""
    graph = gen_power_law(args.n, args.m, args.seed)
    features, labels = gen_planted_features(graph, args.classes, args.dim, args.noise, args.seed)
    prefix = str(args.out_prefix)
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    write_edge_list(graph, prefix + EDGES_SUFFIX)
    write_features(features, prefix + FEATURES_SUFFIX)
    write_labels(labels, prefix + LABELS_SUFFIX)
    logger.info(
        "graph generated",
        extra={"vertices": graph.num_vertices, "edges": graph.num_edges, "prefix": prefix},
    )
    return 0


def cmd_partition(args: argparse.Namespace, settings: Settings) -> int:
    """Stream-partition an edge list and write the plan directory."""
    graph = load_edge_list(args.graph)
    plan, _ = get_plan(graph, settings)
    manifest = write_plan(plan, args.out)
    _emit(manifest.stats.model_dump_json(indent=2))
    return 0


def _train_run(
    settings: Settings,
    dataset: Dataset,
    plan: PartitionPlan,
    normalized: NormalizedAdjacency,
    metrics_out: Path,
) -> list[EpochMetrics]:
    runtime = get_runtime(dataset, plan, normalized, settings)
    with MetricsWriter(metrics_out, settings.train.layers) as writer:
        return runtime.run(settings.train.epochs, on_epoch=writer.write)


def cmd_train(args: argparse.Namespace, settings: Settings) -> int:
    """
    Train on the simulated cluster and write the metrics CSV and JSON summary.

    With --compare-exact the same plan is also trained with the cache and
    quantization off; its metrics go to <metrics>.exact.csv and the summary
    reports the message and byte reductions.
    """
    settings.warn_conflicts()
    dataset = load_dataset(args.graph, args.features, args.labels)
    plan, stats = get_plan(dataset.graph, settings, args.plan)
    normalized = get_normalized(dataset, settings)
    metrics_out = Path(args.metrics_out)

    history = _train_run(settings, dataset, plan, normalized, metrics_out)
    summary = summarize(history, partition=stats)

    if args.compare_exact:
        exact_out = metrics_out.with_suffix(".exact.csv")
        exact = summarize(
            _train_run(exact_variant(settings), dataset, plan, normalized, exact_out)
        )
        summary = summary.model_copy(
            update={
                "exact_total_vertex_messages": exact.total_vertex_messages,
                "exact_final_train_acc": exact.final_train_acc,
                "message_reduction": reduction_fraction(
                    exact.total_vertex_messages, summary.total_vertex_messages
                ),
                "byte_reduction": reduction_fraction(exact.total_bytes, summary.total_bytes),
            }
        )
        logger.info(
            "exact comparison finished",
            extra={
                "message_reduction": summary.message_reduction,
                "byte_reduction": summary.byte_reduction,
            },
        )

    write_summary(summary, _summary_path(args))
    _emit(summary.model_dump_json(indent=2))
    return 0


def cmd_oracle_train(args: argparse.Namespace, settings: Settings) -> int:
    """Train the single-device reference and write its metrics CSV."""
    dataset = load_dataset(args.graph, args.features, args.labels)
    trainer = OracleTrainer(
        dataset,
        get_normalized(dataset, settings),
        get_params(dataset, settings),
        get_optimizer_factory(settings)(),
        settings.train.loss_reduction,
    )
    history: list[EpochMetrics] = []
    with MetricsWriter(args.metrics_out, settings.train.layers) as writer:
        for epoch in range(1, settings.train.epochs + 1):
            metrics = trainer.step(epoch)
            writer.write(metrics)
            history.append(metrics)
    summary: RunSummary = summarize(history)
    write_summary(summary, _summary_path(args))
    _emit(summary.model_dump_json(indent=2))
    return 0


def cmd_compare(args: argparse.Namespace, settings: Settings) -> int:
    """Tabulate run B against baseline run A."""
    report = compare_runs(read_metrics(args.run_a), read_metrics(args.run_b))
    _emit(report.model_dump_json(indent=2), args.out)
    return 0


def cmd_ablation(args: argparse.Namespace, settings: Settings) -> int:
    """Train baseline, cache-only, quant-only and cache+quant on one plan."""
    dataset = load_dataset(args.graph, args.features, args.labels)
    plan, _ = get_plan(dataset.graph, settings, args.plan)
    normalized = get_normalized(dataset, settings)
    rows = []
    for name, cache, quant in ABLATION_VARIANTS:
        run_settings = variant(settings, cache=cache, quant=quant)
        runtime = get_runtime(dataset, plan, normalized, run_settings)
        summary = summarize(runtime.run(run_settings.train.epochs))
        rows.append(
            AblationRow(
                variant=name,
                cache=cache,
                quant=quant,
                total_vertex_messages=summary.total_vertex_messages,
                total_bytes=summary.total_bytes,
                modeled_comm_s=summary.modeled_comm_s,
                final_train_acc=summary.final_train_acc,
                final_val_acc=summary.final_val_acc,
            )
        )
        logger.info("ablation variant finished", extra={"variant": name})
    text = TypeAdapter(list[AblationRow]).dump_json(rows, indent=2).decode()
    _emit(text, args.out)
    return 0
