from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .base import Baseline, BaselineError, as_series


@dataclass(frozen=True)
class PoissonFit:
    lam: float


def poisson_fit(counts) -> PoissonFit:
    """MLE rate: the sample mean."""
    c = as_series(counts, "counts")
    if c.size == 0:
        raise BaselineError("no counts to fit")
    if np.any(c < 0):
        raise BaselineError("negative count")
    return PoissonFit(lam=float(c.mean()))


def poisson_log_pmf(lam: float, k):
    if lam < 0 or not np.isfinite(lam):
        raise BaselineError(f"invalid Poisson rate: {lam}")
    k_arr = np.asarray(k, dtype=np.float64)
    if np.any(k_arr < 0) or np.any(k_arr != np.floor(k_arr)):
        raise BaselineError("k must be a non-negative integer")
    if lam == 0.0:
        out = np.where(k_arr == 0, 0.0, -np.inf)
    else:
        out = k_arr * np.log(lam) - lam - gammaln(k_arr + 1.0)
    return float(out) if np.ndim(k) == 0 else out


def poisson_pmf(lam: float, k):
    """P(X = k) evaluated in log space; pmf(0 | lam=0) is 1."""
    out = np.exp(poisson_log_pmf(lam, k))
    return float(out) if np.ndim(k) == 0 else out


class PoissonRate(Baseline):
    """Constant forecast at the fitted mean count."""
    def __init__(self):
        super().__init__("Poisson")
        self.fit_: PoissonFit | None = None

    def fit(self, years, values):
        self.fit_ = poisson_fit(values)

    def predict_next(self, history, year):
        return self.fit_.lam

    def mean_log_pmf(self, actual) -> float:
        counts = np.rint(as_series(actual, "actual"))
        return float(np.mean(poisson_log_pmf(self.fit_.lam, np.maximum(counts, 0.0))))

    def describe(self):
        return {"lambda": self.fit_.lam}
