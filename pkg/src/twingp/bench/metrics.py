from __future__ import annotations

import numpy as np


def rmse(pred_means, truth) -> float:
    pred_means, truth = np.asarray(pred_means, dtype=float), np.asarray(truth, dtype=float)
    if pred_means.shape != truth.shape or pred_means.size == 0:
        raise ValueError(f"length mismatch or empty input: {pred_means.shape} vs {truth.shape}")
    return float(np.sqrt(np.mean((truth - pred_means) ** 2)))


def nlpd(pred_means, pred_vars, truth) -> float:
    """Mean negative log predictive density under Gaussian predictions."""
    mu = np.asarray(pred_means, dtype=float)
    var = np.asarray(pred_vars, dtype=float)
    y = np.asarray(truth, dtype=float)
    if not (mu.shape == var.shape == y.shape) or y.size == 0:
        raise ValueError("length mismatch or empty input")
    if np.any(var <= 0):
        raise ValueError("predictive variances must be positive")
    return float(np.mean((y - mu) ** 2 / var + np.log(2 * np.pi * var)) / 2)
