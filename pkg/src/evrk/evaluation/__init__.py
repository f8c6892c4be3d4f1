"""Metrics, repeated k-fold cross-validation, comparison tables and t-tests."""

from .metrics import NotAValue, corr, mae, mae_dev, rmse
from .stats import t_test

__all__ = ["NotAValue", "corr", "mae", "mae_dev", "rmse", "t_test"]
