"""Single-device full-batch GCN trainer used as ground truth."""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import NonFiniteLossError, UsageError
from ..models import EpochMetrics
from .gcn_engine import (
    ModelParams,
    Optimizer,
    activate,
    backward_local,
    forward_local,
    loss_and_output_grad,
    optimizer_step,
    param_grad,
)
from .graph_store import Dataset, NormalizedAdjacency, Role

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class OracleResult:
    loss: float
    train_acc: float
    val_acc: float
    test_acc: float
    grads: list[np.ndarray]


def loss_scale(masks: np.ndarray, reduction: str) -> float:
    """1/|train| for mean reduction, 1 for sum."""
    if reduction == "sum":
        return 1.0
    if reduction != "mean":
        raise UsageError(f"unknown loss reduction {reduction!r}")
    count = int(np.sum(masks == int(Role.TRAIN)))
    return 1.0 / count if count else 1.0


def _ratio(correct: int, total: int) -> float:
    return correct / total if total else 0.0


def oracle_forward_backward(
    normalized: NormalizedAdjacency,
    features: np.ndarray,
    labels: np.ndarray,
    masks: np.ndarray,
    params: ModelParams,
    num_classes: int,
    scale: float = 1.0,
) -> OracleResult:
    """
    Whole-graph forward and backward pass with the worker kernels.

    Args:
        normalized: Whole-graph normalized adjacency
        features: Input features H(0)
        labels: Label per vertex
        masks: Role per vertex
        params: Model parameters
        num_classes: Class count
        scale: Loss multiplier (see `loss_scale`)

    Returns:
        OracleResult with per-layer weight gradients
    """
    adj = normalized.matrix
    num_layers = params.num_layers
    h: list[np.ndarray] = [features]
    ah: list[np.ndarray] = []
    z: list[np.ndarray] = []
    for layer in range(num_layers):
        z_next, aggregated = forward_local(h[layer], params.weights[layer], adj)
        ah.append(aggregated)
        z.append(z_next)
        h.append(activate(z_next, is_final=layer == num_layers - 1))

    everyone = np.ones(labels.shape[0], dtype=bool)
    result = loss_and_output_grad(h[-1], labels, masks, everyone, num_classes, scale)

    grads: list[np.ndarray] = [np.empty(0)] * num_layers
    delta = result.output_grad
    for layer in range(num_layers - 1, -1, -1):
        grads[layer] = param_grad(delta, ah[layer])
        if layer > 0:
            delta = backward_local(delta, adj, params.weights[layer], z[layer - 1])

    return OracleResult(
        loss=result.loss,
        train_acc=_ratio(result.correct[Role.TRAIN], result.total[Role.TRAIN]),
        val_acc=_ratio(result.correct[Role.VAL], result.total[Role.VAL]),
        test_acc=_ratio(result.correct[Role.TEST], result.total[Role.TEST]),
        grads=grads,
    )


class OracleTrainer:
    """Trains the whole graph on one device; one epoch is one full-batch step."""

    def __init__(
        self,
        dataset: Dataset,
        normalized: NormalizedAdjacency,
        params: ModelParams,
        optimizer: Optimizer,
        loss_reduction: str = "mean",
    ) -> None:
        self._dataset = dataset
        self._normalized = normalized
        self._features = dataset.features.values.astype(params.weights[0].dtype)
        self.params = params
        self._optimizer = optimizer
        self._scale = loss_scale(dataset.labels.masks, loss_reduction)
        self.history: list[list[np.ndarray]] = []

    def step(self, epoch: int) -> EpochMetrics:
        """Run one iteration, record its gradients and return its metrics."""
        labels = self._dataset.labels
        result = oracle_forward_backward(
            self._normalized,
            self._features,
            labels.labels,
            labels.masks,
            self.params,
            labels.num_classes,
            self._scale,
        )
        self.history.append([g.copy() for g in result.grads])
        optimizer_step(self.params, result.grads, self._optimizer)
        zeros = [0] * self.params.num_layers
        metrics = EpochMetrics(
            epoch=epoch,
            loss=result.loss,
            train_acc=result.train_acc,
            val_acc=result.val_acc,
            test_acc=result.test_acc,
            eps=0.0,
            fwd_sends=zeros,
            bwd_sends=list(zeros),
            fwd_scatters=list(zeros),
            bwd_scatters=list(zeros),
            replica_pairs=0,
            inner_bytes=0,
            outer_bytes=0,
            modeled_comm_s=0.0,
            wall_s=0.0,
        )
        logger.info(
            "oracle epoch finished",
            extra={"epoch": epoch, "loss": result.loss, "train_acc": result.train_acc},
        )
        return metrics


def finite_difference_grad(
    loss_fn: Callable[[list[np.ndarray]], float],
    params: list[np.ndarray],
    step: float = 1e-6,
) -> list[np.ndarray]:
    """
    Central differences of a scalar loss with respect to every parameter entry.

    Args:
        loss_fn: Maps a list of arrays to a scalar loss
        params: Point of evaluation (not modified)
        step: Perturbation size h

    Returns:
        One gradient array per parameter

    Raises:
        UsageError: If step <= 0
        NonFiniteLossError: If any evaluation is NaN or infinite
    """
    if step <= 0:
        raise UsageError("finite-difference step must be positive")
    point = [np.array(p, dtype=np.float64, copy=True) for p in params]
    grads = [np.zeros_like(p) for p in point]
    for idx, array in enumerate(point):
        flat = array.reshape(-1)
        out = grads[idx].reshape(-1)
        for k in range(flat.shape[0]):
            original = flat[k]
            flat[k] = original + step
            plus = loss_fn(point)
            flat[k] = original - step
            minus = loss_fn(point)
            flat[k] = original
            if not (np.isfinite(plus) and np.isfinite(minus)):
                raise NonFiniteLossError(f"non-finite loss while perturbing parameter {idx}[{k}]")
            out[k] = (plus - minus) / (2.0 * step)
    return grads


def naive_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Triple-loop product for cross-checking the fast kernels."""
    rows, inner = a.shape
    cols = b.shape[1]
    out = np.zeros((rows, cols), dtype=np.float64)
    for i in range(rows):
        for j in range(cols):
            total = 0.0
            for k in range(inner):
                total += float(a[i, k]) * float(b[k, j])
            out[i, j] = total
    return out


def naive_spmm(adj: sp.csr_matrix, dense: np.ndarray) -> np.ndarray:
    """Row-by-row sparse product over materialized entries."""
    coo = adj.tocoo()
    out = np.zeros((adj.shape[0], dense.shape[1]), dtype=np.float64)
    for r, c, w in zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist(), strict=True):
        out[r] += w * dense[c]
    return out


def dense_linf(m: np.ndarray) -> float:
    """Scan-based L-infinity norm."""
    best = 0.0
    for value in np.asarray(m).ravel().tolist():
        best = max(best, abs(value))
    return best

