"""Evaluation metrics, reported on original-scale traffic volumes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datapipe import ScalerParams, inverse_target

DEFAULT_EPSILON = 1e-8


@dataclass
class EvalReport:
    mse: float
    mae: float
    mape: float  # ratio, not percent
    n: int
    epsilon: float = DEFAULT_EPSILON


def _paired(y, y_hat) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(y, dtype=np.float64).ravel()
    b = np.asarray(y_hat, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("empty inputs")
    return a, b


def mse(y, y_hat) -> float:
    a, b = _paired(y, y_hat)
    return float(np.mean((a - b) ** 2))


def mae(y, y_hat) -> float:
    a, b = _paired(y, y_hat)
    return float(np.mean(np.abs(a - b)))


def mape(y, y_hat, epsilon: float = DEFAULT_EPSILON) -> float:
    """Mean of |y - y_hat| / max(epsilon, |y|); finite even at y = 0."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    a, b = _paired(y, y_hat)
    return float(np.mean(np.abs(a - b) / np.maximum(epsilon, np.abs(a))))


def evaluate(pred_scaled, target_scaled, scaler: ScalerParams, epsilon: float = DEFAULT_EPSILON) -> EvalReport:
    """Inverse-transform predictions and targets to the original scale, then score."""
    pred, target = _paired(pred_scaled, target_scaled)
    p = inverse_target(pred, scaler)
    t = inverse_target(target, scaler)
    return EvalReport(
        mse=mse(t, p), mae=mae(t, p), mape=mape(t, p, epsilon), n=int(t.size), epsilon=epsilon)
