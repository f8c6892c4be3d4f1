"""Error metrics on paired actual/estimated sequences."""

from __future__ import annotations

import math

import numpy as np


class NotAValue(float):
    """A NaN that carries the reason a metric is undefined; prints as NA."""

    def __new__(cls, reason: str):
        obj = super().__new__(cls, math.nan)
        obj.reason = reason
        return obj

    def __repr__(self) -> str:
        return f"NotAValue({self.reason!r})"

    def __str__(self) -> str:
        return "NA"


def _pair(actual, estimated):
    a = np.asarray(actual, dtype=np.float64).reshape(-1)
    e = np.asarray(estimated, dtype=np.float64).reshape(-1)
    if a.size != e.size:
        raise ValueError(f"length mismatch: {a.size} actual vs {e.size} estimated")
    if a.size == 0:
        raise ValueError("metrics need at least one pair")
    return a, e


def rmse(actual, estimated) -> float:
    a, e = _pair(actual, estimated)
    d = a - e
    return math.sqrt(float(np.dot(d, d)) / d.size)


def mae(actual, estimated) -> float:
    a, e = _pair(actual, estimated)
    return float(np.mean(np.abs(a - e)))


def corr(actual, estimated) -> float:
    """Pearson correlation; a zero-variance side gives NotAValue."""
    a, e = _pair(actual, estimated)
    da, de = a - a.mean(), e - e.mean()
    saa, see = float(np.dot(da, da)), float(np.dot(de, de))
    if saa == 0.0 or see == 0.0:
        return NotAValue("zero variance in " + ("actual" if saa == 0.0 else "estimated") + " values")
    r = float(np.dot(da, de)) / math.sqrt(saa * see)
    return min(max(r, -1.0), 1.0)


def mae_dev(actual_MJ, estimated_MJ) -> float:
    """Mean absolute deviation of per-cycle energies (same unit as the inputs)."""
    return mae(actual_MJ, estimated_MJ)
