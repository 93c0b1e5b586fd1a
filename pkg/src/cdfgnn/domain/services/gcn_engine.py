"""Per-worker GCN computation: local products, loss head, gradients and optimizers."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.sparse as sp

from ..errors import LabelOutOfRangeError, NonFiniteLossError, ShapeMismatchError, UsageError
from . import tensor_math as tm
from .graph_store import Role

logger = logging.getLogger(__name__)

OptimizerMode = Literal["sgd", "adam"]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(slots=True)
class ModelParams:
    """Weights W(0)..W(L-1); weights[l] has shape (F_l, F_{l+1})."""

    weights: list[np.ndarray]

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self) -> ModelParams:
        return ModelParams([w.copy() for w in self.weights])

    @classmethod
    def glorot(
        cls, dims: list[int], seed: int, dtype: np.dtype | type = np.float64
    ) -> ModelParams:
        """
        Glorot-uniform init; the same seed yields the same replica on every worker.

        Args:
            dims: [F_0, F_1, ..., F_L]
            seed: Generator seed
            dtype: Parameter precision
        """
        if len(dims) < 2 or min(dims) < 1:
            raise UsageError(f"invalid layer dims {dims}")
        rng = np.random.default_rng(seed)
        weights = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:], strict=True):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype))
        return cls(weights)


@dataclass(slots=True)
class LayerState:
    """
    One worker's intermediates for one iteration.

    Index l runs 1..L for z_local/z_synced/delta_*; h[0] is the input
    features; ah[l] caches Â_i H(l) for reuse by the weight gradient.
    """

    num_layers: int
    h: list[np.ndarray | None] = field(default_factory=list)
    ah: list[np.ndarray | None] = field(default_factory=list)
    z_local: list[np.ndarray | None] = field(default_factory=list)
    z_synced: list[np.ndarray | None] = field(default_factory=list)
    delta_local: list[np.ndarray | None] = field(default_factory=list)
    delta_synced: list[np.ndarray | None] = field(default_factory=list)

    @classmethod
    def start(cls, features: np.ndarray, num_layers: int) -> LayerState:
        slots = num_layers + 1
        state = cls(
            num_layers=num_layers,
            h=[None] * slots,
            ah=[None] * slots,
            z_local=[None] * slots,
            z_synced=[None] * slots,
            delta_local=[None] * slots,
            delta_synced=[None] * slots,
        )
        state.h[0] = features
        return state


@dataclass(frozen=True, slots=True)
class LossResult:
    loss: float
    output_grad: np.ndarray
    correct: dict[Role, int]
    total: dict[Role, int]


def forward_local(
    h_prev: np.ndarray,
    weight: np.ndarray,
    adj_local: sp.csr_matrix,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Local pre-activation Ż = Â_i H W.

    Returns:
        (Z_local, Â_i H); the second is reused by `param_grad`
    """
    aggregated = tm.spmm(adj_local, h_prev)
    return tm.matmul(aggregated, weight), aggregated


def activate(z_synced: np.ndarray, is_final: bool) -> np.ndarray:
    """ReLU for hidden layers; the output layer stays linear (softmax is in the loss)."""
    if is_final:
        return z_synced
    return tm.relu(z_synced)


def loss_and_output_grad(
    logits: np.ndarray,
    labels: np.ndarray,
    masks: np.ndarray,
    master_flags: np.ndarray,
    num_classes: int,
    scale: float = 1.0,
) -> LossResult:
    """
    Cross-entropy over local master vertices in the train mask.

    Args:
        logits: Synced output rows, one per local vertex
        labels: Label per local vertex
        masks: Role per local vertex
        master_flags: True where this worker is the master
        num_classes: Class count
        scale: Multiplier applied to the summed loss and its gradient

    Returns:
        LossResult whose gradient rows are scale·(softmax - onehot) for
        contributing masters and zero elsewhere; correct/total counted per
        role over masters only

    Raises:
        ShapeMismatchError: If row counts disagree
        LabelOutOfRangeError: If a contributing label is >= num_classes
        NonFiniteLossError: If the loss is NaN or infinite
    """
    n = logits.shape[0]
    if labels.shape[0] != n or masks.shape[0] != n or master_flags.shape[0] != n:
        raise ShapeMismatchError("logits, labels, masks and master flags must align")
    if logits.shape[1] != num_classes:
        raise ShapeMismatchError(f"logits width {logits.shape[1]} != num_classes {num_classes}")

    contributing = master_flags & (masks == int(Role.TRAIN))
    rows = np.flatnonzero(contributing)
    if rows.size and int(labels[rows].max()) >= num_classes:
        raise LabelOutOfRangeError("train label >= num_classes")

    grad = np.zeros_like(logits)
    loss = 0.0
    if rows.size:
        selected = logits[rows]
        log_probs = tm.log_softmax_rows(selected)
        picked = log_probs[np.arange(rows.size), labels[rows]]
        loss = float(-np.sum(picked)) * scale
        probs = tm.softmax_rows(selected)
        probs[np.arange(rows.size), labels[rows]] -= 1.0
        grad[rows] = probs * scale
    if not np.isfinite(loss):
        raise NonFiniteLossError(f"loss evaluated to {loss}")

    predicted = np.argmax(logits, axis=1) if logits.shape[1] else np.zeros(n, dtype=np.int64)
    correct: dict[Role, int] = {}
    total: dict[Role, int] = {}
    for role in (Role.TRAIN, Role.VAL, Role.TEST):
        members = master_flags & (masks == int(role))
        total[role] = int(members.sum())
        correct[role] = int(np.sum(predicted[members] == labels[members]))
    return LossResult(loss=loss, output_grad=grad, correct=correct, total=total)


def backward_local(
    delta_synced_next: np.ndarray,
    adj_local: sp.csr_matrix,
    weight: np.ndarray,
    z_synced_prev: np.ndarray,
) -> np.ndarray:
    """
    Local gradient δ̈(l-1) = (Â_i δ(l) Wᵀ) ⊙ relu'(Z(l-1)); Â_i is symmetric.
    """
    propagated = tm.spmm(adj_local, tm.matmul(delta_synced_next, weight.T))
    return tm.hadamard(propagated, tm.relu_grad(z_synced_prev))


def param_grad(delta_synced: np.ndarray, aggregated_prev: np.ndarray) -> np.ndarray:
    """
    This worker's weight-gradient contribution (Â_i H(l-1))ᵀ δ(l).

    Summing contributions over workers gives the whole-graph gradient
    because Â = Σ_i Â_i.
    """
    return tm.matmul(aggregated_prev.T, delta_synced)


class Optimizer:
    """SGD or Adam, replicated identically on every worker."""

    def __init__(
        self,
        mode: OptimizerMode,
        lr: float,
        beta1: float = ADAM_BETA1,
        beta2: float = ADAM_BETA2,
        eps_hat: float = ADAM_EPS,
    ) -> None:
        if mode not in ("sgd", "adam"):
            raise UsageError(f"unknown optimizer {mode!r}")
        if lr <= 0:
            raise UsageError("learning rate must be positive")
        self.mode = mode
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps_hat = eps_hat
        self.step_count = 0
        self._m: dict[int, np.ndarray] = {}
        self._v: dict[int, np.ndarray] = {}

    def begin_step(self) -> None:
        """Advance the shared step counter once per iteration."""
        self.step_count += 1

    def apply(self, params: ModelParams, layer: int, grad: np.ndarray) -> None:
        """Update weights[layer] in place from the summed gradient."""
        weight = params.weights[layer]
        if grad.shape != weight.shape:
            raise ShapeMismatchError(
                f"gradient {grad.shape} does not match W({layer}) {weight.shape}"
            )
        if self.mode == "sgd":
            params.weights[layer] = weight - self.lr * grad
            return

        t = max(self.step_count, 1)
        m = self._m.get(layer, np.zeros_like(weight))
        v = self._v.get(layer, np.zeros_like(weight))
        m = self.beta1 * m + (1.0 - self.beta1) * grad
        v = self.beta2 * v + (1.0 - self.beta2) * grad * grad
        self._m[layer] = m
        self._v[layer] = v
        m_hat = m / (1.0 - self.beta1**t)
        v_hat = v / (1.0 - self.beta2**t)
        params.weights[layer] = weight - self.lr * m_hat / (np.sqrt(v_hat) + self.eps_hat)


def optimizer_step(
    params: ModelParams,
    summed_grads: list[np.ndarray],
    opt: Optimizer,
) -> ModelParams:
    """
    Apply one full iteration's update to every layer.

    Args:
        params: Current parameters (updated in place and returned)
        summed_grads: One summed gradient per layer
        opt: Optimizer state

    Returns:
        The updated params
    """
    if len(summed_grads) != params.num_layers:
        raise ShapeMismatchError(
            f"{len(summed_grads)} gradients for {params.num_layers} layers"
        )
    opt.begin_step()
    for layer, grad in enumerate(summed_grads):
        opt.apply(params, layer, grad)
    return params
