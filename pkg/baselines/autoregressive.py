from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import Baseline, BaselineError, as_series

RIDGE = 1e-10
DEFAULT_ORDER = 2
DEFAULT_DIFF = 1


@dataclass(frozen=True, eq=False)
class ArFit:
    p: int
    d: int
    alpha: np.ndarray
    residuals: np.ndarray
    mean: float = 0.0


def _lag_design(z: np.ndarray, p: int):
    # row t: [z[t-1], ..., z[t-p]] -> z[t]
    x = np.column_stack([z[p - j:len(z) - j] for j in range(1, p + 1)])
    return x, z[p:]


def fit_ar(series, p: int, d: int = 0, center: bool = False) -> ArFit:
    """Least-squares AR(p) without intercept on the d-fold differenced series.

    With `center` the differenced series is mean-removed first and the mean
    is added back at forecast time.
    """
    if p < 1 or d < 0:
        raise BaselineError(f"invalid AR order p={p}, d={d}")
    x = as_series(series)
    if x.size <= p + d + 1:
        raise BaselineError(f"series of length {x.size} too short for p={p}, d={d}")

    z = np.diff(x, n=d) if d else x.copy()
    mean = float(z.mean()) if center else 0.0
    z = z - mean

    design, target = _lag_design(z, p)
    if np.linalg.matrix_rank(design) < p:
        raise BaselineError("degenerate regressor")
    gram = design.T @ design + RIDGE * np.eye(p)
    try:
        alpha = np.linalg.solve(gram, design.T @ target)
    except np.linalg.LinAlgError:
        raise BaselineError("degenerate regressor")
    if not np.all(np.isfinite(alpha)):
        raise BaselineError("degenerate regressor")

    return ArFit(p=p, d=d, alpha=alpha, residuals=target - design @ alpha, mean=mean)


def forecast_ar(fit: ArFit, history, steps: int) -> np.ndarray:
    """Roll the recursion forward on the differenced scale, then integrate back."""
    h = as_series(history, "history")
    if h.size < fit.p + fit.d:
        raise BaselineError(f"history of length {h.size} is shorter than p + d = {fit.p + fit.d}")
    if steps < 1:
        return np.zeros(0)

    z = list((np.diff(h, n=fit.d) if fit.d else h) - fit.mean)
    out = []
    for _ in range(steps):
        nxt = float(sum(fit.alpha[j] * z[-1 - j] for j in range(fit.p)))
        z.append(nxt)
        out.append(nxt + fit.mean)

    f = np.asarray(out)
    for k in range(fit.d - 1, -1, -1):
        level = np.diff(h, n=k) if k else h
        f = level[-1] + np.cumsum(f)
    return f


class Autoregressive(Baseline):
    def __init__(self, p: int = DEFAULT_ORDER, d: int = DEFAULT_DIFF, center: bool = True):
        super().__init__(f"AR({p},{d})")
        self.p, self.d, self.center = p, d, center
        self.fit_: ArFit | None = None

    def fit(self, years, values):
        self.fit_ = fit_ar(values, self.p, self.d, center=self.center)

    def predict_next(self, history, year):
        return float(forecast_ar(self.fit_, history, 1)[0])

    def describe(self):
        return {"p": self.p, "d": self.d, "alpha": self.fit_.alpha.tolist(),
                "mean": self.fit_.mean, "centered": self.center}
