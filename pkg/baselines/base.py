"""
Base classes and shared helpers for baseline forecasters.
"""

from abc import ABC, abstractmethod
from typing import Dict, Sequence

import numpy as np


class BaselineError(Exception):
    """Raised when a baseline cannot be fitted or evaluated"""
    pass


class Baseline(ABC):
    """
    Abstract base class every baseline must inherit from.
    A baseline is fitted on the leading part of a yearly series and then
    asked for one-step-ahead forecasts, each seeing the true history up to
    the year before.
    """
    def __init__(self, name: str):
        self.name = name

    # ------------------------------------------------------------------
    # lifecycle hooks
    # ------------------------------------------------------------------
    @abstractmethod
    def fit(self, years: np.ndarray, values: np.ndarray) -> None:
        """Estimate parameters from the fitting span."""
        ...

    @abstractmethod
    def predict_next(self, history: np.ndarray, year: int) -> float:
        """Forecast the value for `year` given all true values before it."""
        ...

    def describe(self) -> Dict:
        """Fitted parameters for the report block."""
        return {}

    # ------------------------------------------------------------------
    # evaluation
    # ------------------------------------------------------------------
    def walk_forward(self, years: Sequence[int], values: Sequence[float], n_fit: int) -> np.ndarray:
        """Fit on rows [0, n_fit) and forecast every later row one step ahead."""
        years = np.asarray(years, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if not 0 < n_fit < len(values):
            raise BaselineError(f"fit span {n_fit} must leave rows to forecast out of {len(values)}")
        self.fit(years[:n_fit], values[:n_fit])
        return np.array([self.predict_next(values[:t], int(years[t])) for t in range(n_fit, len(values))])


def as_series(values, name: str = "series") -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if not np.all(np.isfinite(arr)):
        raise BaselineError(f"{name} contains non-finite values")
    return arr
