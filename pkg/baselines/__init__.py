import logging
from typing import Any, Dict

import numpy as np

from analysis import mae, rmse
from .autoregressive import Autoregressive, ArFit, fit_ar, forecast_ar
from .base import Baseline, BaselineError
from .persistence import Persistence
from .poisson import PoissonFit, PoissonRate, poisson_fit, poisson_log_pmf, poisson_pmf
from .regression import LinearTrend, OlsFit, fit_ols

logger = logging.getLogger(__name__)


def run_baselines(years, values, n_fit: int, ar_order: int = 2, ar_diff: int = 1,
                  ar_center: bool = True) -> Dict[str, Any]:
    """Fit every baseline on rows [0, n_fit) and score one-step forecasts on the rest."""
    years = np.asarray(years, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    actual = values[n_fit:]

    models = {
        "ols": LinearTrend(),
        "ar": Autoregressive(ar_order, ar_diff, center=ar_center),
        "poisson": PoissonRate(),
        "persistence": Persistence(),
    }
    block = {}
    for key, model in models.items():
        forecast = model.walk_forward(years, values, n_fit)
        entry = {"name": model.name, "rmse": rmse(actual, forecast), "mae": mae(actual, forecast),
                 "params": model.describe(), "predicted": forecast.tolist()}
        if isinstance(model, PoissonRate):
            entry["mean_log_pmf"] = model.mean_log_pmf(actual)
        block[key] = entry
        logger.info(f"Baseline {model.name}: RMSE {entry['rmse']:.2f}, MAE {entry['mae']:.2f}")

    block["fit_years"] = [int(years[0]), int(years[n_fit - 1])]
    block["test_years"] = [int(y) for y in years[n_fit:]]
    return block
