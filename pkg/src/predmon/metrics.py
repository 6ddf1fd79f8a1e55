"""Forecast error metrics and reward aggregation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyInput, NonFiniteValue, ZeroActual


def _pair(pred, actual):
    p = np.asarray(pred, dtype=np.float64).ravel()
    a = np.asarray(actual, dtype=np.float64).ravel()
    if p.shape != a.shape:
        raise DimensionMismatch(f"{p.shape} vs {a.shape}")
    if p.size == 0:
        raise EmptyInput("metrics need at least one sample")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(a))):
        raise NonFiniteValue("metrics inputs must be finite")
    return p, a


def mae(pred, actual) -> float:
    p, a = _pair(pred, actual)
    return float(np.mean(np.abs(p - a)))


def rmse(pred, actual) -> float:
    p, a = _pair(pred, actual)
    return math.sqrt(float(np.mean((p - a) ** 2)))


def mape(pred, actual) -> float:
    """Mean absolute percentage error, in percent."""
    p, a = _pair(pred, actual)
    if np.any(a == 0):
        raise ZeroActual("MAPE undefined when an actual value is 0")
    return float(100.0 * np.mean(np.abs(p - a) / np.abs(a)))


def cumulative_reward(rewards) -> float:
    return math.fsum(float(r) for r in rewards)


@dataclass(frozen=True)
class MetricReport:
    mae: float
    mape: float
    rmse: float
    n: int

    @classmethod
    def compute(cls, pred, actual) -> "MetricReport":
        p, a = _pair(pred, actual)
        return cls(mae(p, a), mape(p, a), rmse(p, a), p.size)

    def as_dict(self) -> dict:
        return {"mae": self.mae, "mape": self.mape, "rmse": self.rmse, "n": self.n}
