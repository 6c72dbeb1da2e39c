"""
linalg.py

Purpose
- Dense float64 primitives shared by every other module: cross-Gram products,
  Hadamard reductions, column sums and the Adam update.
- Matrices are plain 2-D numpy arrays (dtype float64, C order).

Summation order
- Deterministic mode (the default) routes contractions through np.einsum,
  which runs a fixed single-threaded loop nest, so two runs under one seed are
  bit-identical. Parallel mode hands them to the BLAS matmul instead; values
  agree to rounding, bits may not.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DimensionError, NumericError

_DETERMINISTIC = True


def set_deterministic(flag: bool) -> None:
    global _DETERMINISTIC
    _DETERMINISTIC = bool(flag)


def is_deterministic() -> bool:
    return _DETERMINISTIC


# -----------------------------
# Validation
# -----------------------------

def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting other ranks."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name}: expected a 2-D matrix, got shape {arr.shape}")
    return arr


def _same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


# -----------------------------
# Products and reductions
# -----------------------------

def cross_gram(X, Y) -> np.ndarray:
    """X^T Y for two n x d tables: result[i][j] = sum_k X[k][i] * Y[k][j]."""
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    _same_shape(X, Y, "cross_gram")
    if _DETERMINISTIC:
        G = np.einsum("ki,kj->ij", X, Y)
    else:
        G = X.T @ Y
    if X is Y:
        # mirror the upper triangle so self-Grams are exactly symmetric
        G = np.triu(G) + np.triu(G, 1).T
    return G


def matmul(A, B) -> np.ndarray:
    """A @ B with the same deterministic/parallel switch as cross_gram."""
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if A.shape[1] != B.shape[0]:
        raise DimensionError(f"matmul: inner dimensions differ {A.shape} @ {B.shape}")
    if _DETERMINISTIC:
        return np.einsum("ij,jk->ik", A, B)
    return A @ B


def hadamard_sum(matrices: Sequence) -> float:
    """Sum over all (i, j) of the elementwise product of every matrix."""
    if len(matrices) == 0:
        raise DimensionError("hadamard_sum: empty matrix list")
    mats = [as_matrix(m, f"matrices[{k}]") for k, m in enumerate(matrices)]
    first = mats[0]
    if first.shape[0] != first.shape[1]:
        raise DimensionError(f"hadamard_sum: expected square matrices, got {first.shape}")
    prod = first.copy()
    for k, m in enumerate(mats[1:], start=1):
        _same_shape(first, m, f"hadamard_sum[{k}]")
        prod *= m
    return float(prod.sum())


def column_sums(X) -> np.ndarray:
    X = as_matrix(X, "X")
    if X.shape[0] < 1:
        raise DimensionError("column_sums: need at least one row")
    if _DETERMINISTIC:
        return np.einsum("ki->i", X)
    return X.sum(axis=0)


# -----------------------------
# Adam
# -----------------------------

@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros_like(cls, table: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(table), np.zeros_like(table), 0)


def adam_step(
    table: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    name: Optional[str] = None,
) -> Tuple[np.ndarray, AdamState]:
    """Bias-corrected Adam, applied in place to `table` and `state`."""
    label = name or "table"
    _same_shape(table, grad, f"adam_step[{label}]")
    _same_shape(table, state.first_moment, f"adam_step[{label}] first moment")
    _same_shape(table, state.second_moment, f"adam_step[{label}] second moment")
    if not lr > 0:
        raise ConfigError(f"adam_step: lr must be > 0, got {lr}")
    if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
        raise ConfigError(f"adam_step: betas must lie in [0, 1), got {beta1}, {beta2}")
    if not eps > 0:
        raise ConfigError(f"adam_step: eps must be > 0, got {eps}")
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient entries", table=label)

    state.step_count += 1
    t = state.step_count
    m, v = state.first_moment, state.second_moment
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    table -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return table, state
