"""Softmax cross-entropy and classification metrics."""

from __future__ import annotations

import numpy as np

from ..errors import BoundsError, ParameterError, ShapeError

__all__ = [
    "softmax",
    "softmax_cross_entropy",
    "batch_cross_entropy",
    "categorical_accuracy",
    "mean_absolute_error",
]


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, shifted by the max for stability. Accepts (K,) or (N, K)."""
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _check_labels(labels: np.ndarray, k: int) -> np.ndarray:
    labels = np.asarray(labels)
    if not np.issubdtype(labels.dtype, np.integer):
        raise ParameterError(f"labels must be integers, got dtype {labels.dtype}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        bad = labels[(labels < 0) | (labels >= k)][0]
        raise BoundsError(f"label {bad} outside [0, {k})")
    return labels


def softmax_cross_entropy(logits: np.ndarray, label: int):
    """Loss of one sample: probs = softmax(logits), loss = -ln probs[label].

    Returns (loss, probs, grad_logits) with grad = probs - one_hot(label).
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1:
        raise ShapeError(f"expected a logit vector, got shape {z.shape}")
    k = z.shape[0]
    label = int(_check_labels(np.asarray(label), k))
    shifted = z - z.max()
    log_probs = shifted - np.log(np.exp(shifted).sum())
    probs = np.exp(log_probs)
    loss = -log_probs[label]
    grad = probs.copy()
    grad[label] -= 1.0
    return loss, probs, grad


def batch_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over a batch of logit rows.

    Returns (mean_loss, probs, grad_logits); the gradient already carries the
    1/N factor so it backpropagates the mean loss.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 2:
        raise ShapeError(f"expected (N, K) logits, got shape {z.shape}")
    n, k = z.shape
    if n == 0:
        raise ParameterError("empty batch")
    labels = _check_labels(labels, k)
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} != ({n},)")
    shifted = z - z.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    probs = np.exp(log_probs)
    rows = np.arange(n)
    loss = -log_probs[rows, labels].mean()
    grad = probs.copy()
    grad[rows, labels] -= 1.0
    grad /= n
    return loss, probs, grad


def categorical_accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of rows whose argmax matches the label; ties pick the lowest index."""
    p = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    if p.shape[0] == 0:
        raise ParameterError("empty prediction list")
    labels = _check_labels(labels, p.shape[1])
    if labels.shape != (p.shape[0],):
        raise ShapeError(f"{p.shape[0]} predictions vs labels shape {labels.shape}")
    return float((p.argmax(axis=1) == labels).mean())


def mean_absolute_error(predictions: np.ndarray, labels: np.ndarray) -> float:
    """Mean |p_k - onehot_k| over every sample and class."""
    p = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    if p.shape[0] == 0:
        raise ParameterError("empty prediction list")
    labels = _check_labels(labels, p.shape[1])
    if labels.shape != (p.shape[0],):
        raise ShapeError(f"{p.shape[0]} predictions vs labels shape {labels.shape}")
    onehot = np.zeros_like(p)
    onehot[np.arange(p.shape[0]), labels] = 1.0
    return float(np.abs(p - onehot).mean())
