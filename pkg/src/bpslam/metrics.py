"""Agent RMSE and OSPA/MOSPA map errors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class OspaParams:
    cutoff: float = 5.0
    order: float = 1.0

    def __post_init__(self):
        if self.cutoff <= 0:
            raise ValueError("cutoff must be positive")
        if self.order < 1:
            raise ValueError("order must be >= 1")


def optimal_assignment(cost) -> tuple[list[tuple[int, int]], float]:
    """Minimum-cost one-to-one matching of ``min(n, m)`` pairs.

    Returns 0-based ``(row, col)`` pairs and the total cost.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if cost.size == 0:
        return [], 0.0
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost must be finite")
    rows, cols = linear_sum_assignment(cost)
    return list(zip(rows.tolist(), cols.tolist())), float(cost[rows, cols].sum())


def ospa(truth, estimate, params: OspaParams = OspaParams()) -> float:
    """OSPA distance between two finite 2-D point sets (Euclidean base metric)."""
    X = np.asarray(truth, dtype=float).reshape(-1, 2)
    Y = np.asarray(estimate, dtype=float).reshape(-1, 2)
    n, m = len(X), len(Y)
    if n == 0 and m == 0:
        return 0.0
    c, p = params.cutoff, params.order
    if n == 0 or m == 0:
        return float(c)
    d = np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=-1)
    D = np.minimum(d, c) ** p
    _, matched = optimal_assignment(D)
    total = matched + c**p * abs(n - m)
    return float((total / max(n, m)) ** (1.0 / p))


def rmse(true_positions, estimates) -> np.ndarray:
    """Per-step RMSE over runs.

    ``true_positions`` is (T, 2); ``estimates`` is (R, T, 2) or (T, 2).
    """
    truth = np.asarray(true_positions, dtype=float)
    est = np.asarray(estimates, dtype=float)
    if est.ndim == 2:
        est = est[None]
    if est.shape[1:] != truth.shape:
        raise ValueError(f"length mismatch: truth {truth.shape}, estimates {est.shape}")
    sq = np.sum((est - truth[None]) ** 2, axis=-1)
    return np.sqrt(np.mean(sq, axis=0))


def mospa(truth, estimates_per_run, params: OspaParams = OspaParams()) -> float:
    """Mean OSPA over runs at one time step."""
    vals = [ospa(truth, est, params) for est in estimates_per_run]
    return float(np.mean(vals)) if vals else 0.0
