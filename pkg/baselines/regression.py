from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import Baseline, BaselineError, as_series


@dataclass(frozen=True, eq=False)
class OlsFit:
    beta0: float
    beta1: float
    residuals: np.ndarray

    def predict(self, x) -> np.ndarray:
        return self.beta0 + self.beta1 * np.asarray(x, dtype=np.float64)


def fit_ols(x, y) -> OlsFit:
    """Closed-form simple linear regression y = b0 + b1*x."""
    x = as_series(x, "x")
    y = as_series(y, "y")
    if x.shape != y.shape:
        raise BaselineError(f"x and y differ in length: {x.size} vs {y.size}")
    if x.size < 2:
        raise BaselineError("regression needs at least two points")

    dx = x - x.mean()
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise BaselineError("degenerate regressor")

    beta1 = float(dx @ (y - y.mean())) / sxx
    beta0 = float(y.mean() - beta1 * x.mean())
    return OlsFit(beta0=beta0, beta1=beta1, residuals=y - (beta0 + beta1 * x))


class LinearTrend(Baseline):
    """Target regressed on calendar year."""
    def __init__(self):
        super().__init__("OLS")
        self.fit_: OlsFit | None = None

    def fit(self, years, values):
        self.fit_ = fit_ols(years, values)

    def predict_next(self, history, year):
        return float(self.fit_.predict(year))

    def describe(self):
        return {"beta0": self.fit_.beta0, "beta1": self.fit_.beta1}
