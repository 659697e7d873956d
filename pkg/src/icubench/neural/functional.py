"""Activations and losses with their input-side gradients."""

from __future__ import annotations

import numpy as np

from ..schema import Task

_EPS = 1e-12


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic; outputs stay inside (0, 1) for |x| < ~36."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def bce_loss(preds: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient w.r.t. the predictions.

    Predictions are clamped away from 0/1 before the log so saturated
    outputs cannot produce infinities.
    """
    preds = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if preds.shape != labels.shape:
        raise ValueError(f"prediction shape {preds.shape} != label shape {labels.shape}")
    uniques = np.unique(labels)
    if not np.all(np.isin(uniques, (0.0, 1.0))):
        raise ValueError(f"classification labels must be 0/1, got values {uniques[:5]}")
    p = np.clip(preds, _EPS, 1.0 - _EPS)
    n = preds.size
    loss = -float(np.sum(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p))) / n
    dpreds = (p - labels) / (p * (1.0 - p)) / n
    return loss, dpreds


def mse_loss(preds: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient w.r.t. the predictions."""
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape:
        raise ValueError(f"prediction shape {preds.shape} != target shape {targets.shape}")
    diff = preds - targets
    n = preds.size
    return float(np.sum(diff * diff)) / n, 2.0 * diff / n


def task_loss(preds: np.ndarray, labels: np.ndarray, task: Task) -> tuple[float, np.ndarray]:
    """Dispatch: cross-entropy for the classification tasks, MSE for LoS."""
    if task == Task.LOS:
        return mse_loss(preds, labels)
    return bce_loss(preds, labels)
