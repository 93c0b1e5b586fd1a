"""Dense and sparse kernels shared by the distributed workers and the oracle.

All kernels return freshly allocated arrays and accumulate in ascending index
order, so identical inputs give bit-identical outputs across runs and workers.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import ShapeMismatchError

DenseMatrix = np.ndarray


def _check_same_shape(a: DenseMatrix, b: DenseMatrix, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{op}: shapes {a.shape} and {b.shape} differ")


def spmm(adj: sp.csr_matrix, dense: DenseMatrix) -> DenseMatrix:
    """
    Sparse-dense product.

    scipy's CSR kernel walks each row's stored entries in index order; the
    adjacency is kept with sorted indices, so every row sums its neighbors
    in ascending neighbor ID.

    Args:
        adj: CSR matrix with sorted indices
        dense: Dense right operand

    Returns:
        adj @ dense as a dense array of dense's dtype

    Raises:
        ShapeMismatchError: If adj columns != dense rows
    """
    if adj.shape[1] != dense.shape[0]:
        raise ShapeMismatchError(f"spmm: adjacency {adj.shape} vs dense {dense.shape}")
    result = adj @ dense
    return np.asarray(result, dtype=dense.dtype)


def matmul(a: DenseMatrix, b: DenseMatrix) -> DenseMatrix:
    """Dense product with shape checking."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul: shapes {a.shape} and {b.shape} do not chain")
    return a @ b


def add(a: DenseMatrix, b: DenseMatrix) -> DenseMatrix:
    _check_same_shape(a, b, "add")
    return a + b


def sub(a: DenseMatrix, b: DenseMatrix) -> DenseMatrix:
    _check_same_shape(a, b, "sub")
    return a - b


def hadamard(a: DenseMatrix, b: DenseMatrix) -> DenseMatrix:
    _check_same_shape(a, b, "hadamard")
    return a * b


def linf_norm(m: DenseMatrix) -> float:
    """Maximum absolute element; 0 for an empty matrix."""
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(m)))


def row_linf(m: DenseMatrix) -> np.ndarray:
    """Per-row L-infinity norms (zeros for zero-width rows)."""
    if m.shape[1] == 0:
        return np.zeros(m.shape[0], dtype=m.dtype)
    return np.max(np.abs(m), axis=1)


def relu(m: DenseMatrix) -> DenseMatrix:
    return np.maximum(m, 0).astype(m.dtype, copy=False)


def relu_grad(m: DenseMatrix) -> DenseMatrix:
    """Indicator of x > 0; the subgradient at 0 is 0."""
    return (m > 0).astype(m.dtype)


def softmax_rows(m: DenseMatrix) -> DenseMatrix:
    """Row-wise softmax with per-row max subtraction."""
    if m.shape[1] == 0:
        return m.copy()
    shifted = m - np.max(m, axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / np.sum(exp, axis=1, keepdims=True)


def log_softmax_rows(m: DenseMatrix) -> DenseMatrix:
    """Row-wise log-softmax, stable for large logits."""
    shifted = m - np.max(m, axis=1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
