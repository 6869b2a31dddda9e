"""Split-conformal calibration of quantile-regressor pairs (CQR).

A calibrated unit wraps a lower and an upper quantile model plus the
calibration offset epsilon; the resulting intervals carry the marginal
coverage guarantee whenever calibration and test data are exchangeable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .qr import QuantileModel, predict_batch

__all__ = [
    "NonconformityScores",
    "ConformalUnit",
    "nonconformity_scores",
    "calibrate",
    "interval",
    "bonferroni",
]


@dataclass(frozen=True)
class NonconformityScores:
    """One score per calibration row: max(q_lo(x) - y, y - q_hi(x))."""

    scores: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float).ravel()
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        if scores.size == 0:
            raise ValueError("empty score set")

    @property
    def n(self) -> int:
        return self.scores.size


@dataclass(frozen=True)
class ConformalUnit:
    """Calibrated prediction-interval builder for one feature.

    ``epsilon = +inf`` means the calibration set was too small for the
    requested significance; the unit then covers everything and never
    flags.
    """

    feature: int
    q_lo: QuantileModel
    q_hi: QuantileModel
    epsilon: float
    alpha: float
    conditioner_indices: tuple[int, ...] | None

    def interval(self, conditioner_values) -> tuple[float, float]:
        return interval(self, conditioner_values)

    def interval_batch(self, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized intervals for a block of conditioner inputs."""
        lo = predict_batch(self.q_lo, Z) - self.epsilon
        hi = predict_batch(self.q_hi, Z) + self.epsilon
        return np.minimum(lo, hi), np.maximum(lo, hi)


def nonconformity_scores(
    q_lo: QuantileModel, q_hi: QuantileModel, cal_inputs, cal_targets
) -> NonconformityScores:
    """Score each calibration row by how far it escapes the raw band."""
    y = np.asarray(cal_targets, dtype=float).ravel()
    lo = predict_batch(q_lo, cal_inputs)
    hi = predict_batch(q_hi, cal_inputs)
    if lo.size != y.size:
        raise ValueError(f"{lo.size} predictions vs {y.size} targets")
    return NonconformityScores(np.maximum(lo - y, y - hi))


def calibrate(scores: NonconformityScores, alpha: float) -> float:
    """Empirical (1-alpha)(1 + 1/n) quantile of the scores.

    Realized as the k-th smallest score with k = ceil((1-alpha)(n+1)); the
    tiny slack stops float round-up at exact-integer ranks.  When k exceeds
    n the offset saturates to +inf, preserving validity on tiny calibration
    sets at the cost of power.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    n = scores.n
    k = math.ceil((1.0 - alpha) * (n + 1) - 1e-9)
    if k > n:
        return math.inf
    k = max(k, 1)
    return float(np.partition(scores.scores, k - 1)[k - 1])


def interval(unit: ConformalUnit, conditioner_values) -> tuple[float, float]:
    """Prediction interval [q_lo(z) - eps, q_hi(z) + eps], ordered."""
    z = np.asarray(conditioner_values, dtype=float).ravel()
    lo, hi = unit.interval_batch(z.reshape(1, -1))
    return float(lo[0]), float(hi[0])


def bonferroni(alpha0: float, d: int) -> float:
    """Per-test significance controlling family-wise error at alpha0."""
    if not 0.0 < alpha0 < 1.0:
        raise ValueError(f"alpha0 must be in (0, 1), got {alpha0}")
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    return alpha0 / d
