"""Assembly of datasets, plans, models and runtimes from settings."""

from __future__ import annotations

import logging
from collections.abc import Callable
from pathlib import Path

import numpy as np

from cdfgnn.config import Settings
from cdfgnn.domain.errors import PlanIntegrityError
from cdfgnn.domain.models import ClusterShape, PartitionStats
from cdfgnn.domain.ports.messaging import PayloadCodecProtocol
from cdfgnn.domain.services.cost_model import CostModel
from cdfgnn.domain.services.gcn_engine import ModelParams, Optimizer
from cdfgnn.domain.services.graph_store import Dataset, Graph, NormalizedAdjacency, normalize
from cdfgnn.domain.services.partitioner import PartitionPlan, compute_stats, partition
from cdfgnn.domain.services.vertex_cache import EpsilonController
from cdfgnn.infrastructure.bsp_runtime import ClusterRuntime, RuntimeOptions
from cdfgnn.infrastructure.payload_codec import LinearQuantCodec, RawCodec
from cdfgnn.infrastructure.plan_store import load_plan

logger = logging.getLogger(__name__)


def get_dtype(settings: Settings) -> type:
    return np.float32 if settings.train.precision == "float32" else np.float64


def get_cluster(settings: Settings) -> ClusterShape:
    return ClusterShape(
        num_hosts=settings.partition.hosts,
        gpus_per_host=settings.partition.gpus_per_host,
    )


def get_normalized(dataset: Dataset, settings: Settings) -> NormalizedAdjacency:
    return normalize(dataset.graph, self_loops=settings.train.self_loops, dtype=get_dtype(settings))


def get_plan(
    graph: Graph,
    settings: Settings,
    plan_dir: str | Path | None = None,
) -> tuple[PartitionPlan, PartitionStats]:
    """
    Load a plan directory or stream-partition the graph.

    Raises:
        PlanIntegrityError: If a loaded plan does not describe this graph
    """
    if plan_dir is not None:
        plan = load_plan(plan_dir)
        if plan.num_vertices != graph.num_vertices or plan.num_edges != graph.num_edges:
            raise PlanIntegrityError(
                f"plan {plan_dir} has {plan.num_vertices} vertices / {plan.num_edges} edges, "
                f"graph has {graph.num_vertices} / {graph.num_edges}"
            )
    else:
        part = settings.partition
        plan, _ = partition(
            graph,
            get_cluster(settings),
            alpha=part.alpha,
            beta=part.beta,
            gamma=part.gamma,
            edge_order_seed=part.edge_order_seed,
        )
    return plan, compute_stats(plan, plan.cluster)


def get_params(dataset: Dataset, settings: Settings) -> ModelParams:
    """Glorot weights with dims [F0, hidden, ..., hidden, classes]."""
    train = settings.train
    dims = [dataset.features.dim, *[train.hidden] * (train.layers - 1), dataset.labels.num_classes]
    return ModelParams.glorot(dims, seed=train.seed, dtype=get_dtype(settings))


def get_optimizer_factory(settings: Settings) -> Callable[[], Optimizer]:
    train = settings.train

    def _factory() -> Optimizer:
        return Optimizer(train.optimizer, train.lr)

    return _factory


def get_controller(settings: Settings) -> EpsilonController:
    cache = settings.cache
    if cache.eps_fixed is not None:
        return EpsilonController(eps=cache.eps_fixed, frozen=True)
    return EpsilonController(
        eps=cache.eps_init,
        mu1=cache.mu1,
        mu2=cache.mu2,
        nu1=cache.nu1,
        nu2=cache.nu2,
        xi=cache.xi,
        lambda1=cache.lambda1,
        lambda2=cache.lambda2,
    )


def get_runtime_options(settings: Settings, record_grads: bool = False) -> RuntimeOptions:
    return RuntimeOptions(
        cache_enabled=settings.cache.enabled,
        scatter_mode=settings.cache.scatter_mode,
        controller=get_controller(settings),
        param_sync=settings.train.param_sync,
        loss_reduction=settings.train.loss_reduction,
        barrier_timeout=settings.runtime.barrier_timeout,
        jitter_seed=settings.runtime.jitter_seed,
        record_grads=record_grads,
        wall_clock=settings.metrics_wall_clock,
    )


def get_codec(settings: Settings) -> PayloadCodecProtocol:
    quant = settings.quant
    if not quant.enabled:
        return RawCodec()
    return LinearQuantCodec(bits_forward=quant.forward, bits_backward=quant.backward)


def get_cost_model(settings: Settings) -> CostModel:
    return CostModel(**settings.cost.model_dump())


def exact_variant(settings: Settings) -> Settings:
    """Same run with the cache and quantization switched off."""
    return variant(settings, cache=False, quant=False)


def variant(settings: Settings, cache: bool, quant: bool) -> Settings:
    return settings.model_copy(
        update={
            "cache": settings.cache.model_copy(update={"enabled": cache}),
            "quant": settings.quant.model_copy(update={"enabled": quant}),
        }
    )


def get_runtime(
    dataset: Dataset,
    plan: PartitionPlan,
    normalized: NormalizedAdjacency,
    settings: Settings,
    record_grads: bool = False,
) -> ClusterRuntime:
    """Assemble a cluster runtime with fresh parameters and optimizers."""
    logger.info(
        "assembling runtime",
        extra={
            "p": plan.cluster.p,
            "cache": settings.cache.enabled,
            "quant": settings.quant.enabled,
        },
    )
    return ClusterRuntime(
        dataset=dataset,
        plan=plan,
        normalized=normalized,
        params=get_params(dataset, settings),
        optimizer_factory=get_optimizer_factory(settings),
        options=get_runtime_options(settings, record_grads=record_grads),
        codec=get_codec(settings),
        cost_model=get_cost_model(settings),
    )
