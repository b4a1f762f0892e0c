"""
Evaluation metrics, yearly trend analysis and vehicle-type correlation.
All reports are plain records that render to the artifact formats:
eval_report.json, trend_report.csv (year,value,rolling,decade) and
correlations.csv (column,r,rank).
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from engines.numkernel import DegenerateInputError, NumericError, ShapeError, pearson
from model_constants import VEHICLE_TYPE_COLUMNS, YEAR_COLUMN

logger = logging.getLogger(__name__)

UNDEFINED = "undefined"


def _paired(y, yhat):
    y = np.asarray(y, dtype=np.float64).ravel()
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    if y.shape != yhat.shape:
        raise ShapeError(f"Metric inputs differ in length: {y.shape} vs {yhat.shape}")
    if y.size == 0:
        raise NumericError("metric of empty input")
    return y, yhat


def rmse(y, yhat) -> float:
    y, yhat = _paired(y, yhat)
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def mae(y, yhat) -> float:
    y, yhat = _paired(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


# ----------------------------------------------------------------------
# evaluation
# ----------------------------------------------------------------------
@dataclass
class EvalReport:
    rmse: float
    mae: float
    n: int
    residuals: np.ndarray
    years: np.ndarray
    actual: np.ndarray
    predicted: np.ndarray
    test_loss: float
    seed: int
    config: Dict[str, Any]
    persistence: Optional[Dict[str, float]] = None
    baselines: Optional[Dict[str, Any]] = None
    trend: Optional[Dict[str, Any]] = None

    def to_document(self) -> Dict[str, Any]:
        doc = {
            "rmse": self.rmse,
            "mae": self.mae,
            "n": self.n,
            "test_loss": self.test_loss,
            "residuals": self.residuals.tolist(),
            "years": [int(y) for y in self.years],
            "actual": self.actual.tolist(),
            "predicted": self.predicted.tolist(),
            "seed": self.seed,
            "config": self.config,
        }
        for key in ("persistence", "baselines", "trend"):
            value = getattr(self, key)
            if value is not None:
                doc[key] = value
        return doc


def evaluate(actual, predicted, years, test_loss: float, seed: int, config: Dict[str, Any],
             persistence_forecast=None) -> EvalReport:
    """Metrics in original units, residual = actual - predicted."""
    y, yhat = _paired(actual, predicted)
    report = EvalReport(rmse=rmse(y, yhat), mae=mae(y, yhat), n=int(y.size), residuals=y - yhat,
                        years=np.asarray(years, dtype=np.int64), actual=y, predicted=yhat,
                        test_loss=float(test_loss), seed=int(seed), config=config)
    if persistence_forecast is not None:
        report.persistence = {"rmse": rmse(y, persistence_forecast), "mae": mae(y, persistence_forecast)}
    return report


# ----------------------------------------------------------------------
# trend
# ----------------------------------------------------------------------
def decade_label(year: int) -> str:
    return f"{(int(year) // 10) * 10}s"


@dataclass
class TrendReport:
    column: str
    window: int
    years: np.ndarray
    values: np.ndarray
    rolling: np.ndarray
    decade_means: Dict[str, float] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        """One row per year; `decade` holds the mean of that year's decade."""
        return pd.DataFrame({
            "year": self.years.astype(np.int64),
            "value": self.values,
            "rolling": self.rolling,
            "decade": [self.decade_means[decade_label(y)] for y in self.years],
        })

    def summary(self) -> Dict[str, Any]:
        return {"column": self.column, "window": self.window, "decade_means": dict(self.decade_means)}


def trend(t: pd.DataFrame, column: str, rolling_window: int) -> TrendReport:
    """Centered rolling mean (truncated at the edges) and per-decade means."""
    if column not in t.columns:
        raise NumericError(f"Unknown column: {column}")
    if rolling_window < 1:
        raise NumericError(f"rolling window must be >= 1, got {rolling_window}")

    series = t[column].astype(np.float64)
    rolling = series.rolling(window=rolling_window, center=True, min_periods=1).mean()
    years = t[YEAR_COLUMN].to_numpy(dtype=np.int64)
    labels = [decade_label(y) for y in years]
    means = series.groupby(labels, sort=True).mean()
    return TrendReport(column=column, window=int(rolling_window), years=years,
                       values=series.to_numpy(), rolling=rolling.to_numpy(),
                       decade_means={str(k): float(v) for k, v in means.items()})


# ----------------------------------------------------------------------
# correlation
# ----------------------------------------------------------------------
@dataclass
class CorrEntry:
    column: str
    r: Optional[float]
    n: int
    rank: int = 0

    @property
    def defined(self) -> bool:
        return self.r is not None


@dataclass
class CorrReport:
    entries: List[CorrEntry]

    def get(self, column: str) -> CorrEntry:
        for entry in self.entries:
            if entry.column == column:
                return entry
        raise KeyError(column)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "column": [e.column for e in self.entries],
            "r": [repr(e.r) if e.defined else UNDEFINED for e in self.entries],
            "rank": [e.rank for e in self.entries],
        })


def vehicle_correlations(t: pd.DataFrame, predictions, target_years: Sequence[int],
                         columns: Sequence[str] = VEHICLE_TYPE_COLUMNS) -> CorrReport:
    """Pearson r of each vehicle-type column against predicted fatalities.

    Predictions must cover a contiguous span of the table's years. Zero
    variance leaves r undefined; undefined entries rank after all others.
    """
    predictions = np.asarray(predictions, dtype=np.float64).ravel()
    target_years = np.asarray(target_years, dtype=np.int64).ravel()
    if predictions.shape != target_years.shape:
        raise ShapeError(f"{predictions.size} predictions for {target_years.size} years")

    table_years = t[YEAR_COLUMN].to_numpy(dtype=np.int64)
    positions = np.searchsorted(table_years, target_years)
    in_table = (positions < len(table_years)) & (table_years[np.minimum(positions, len(table_years) - 1)] == target_years)
    if not np.all(in_table) or (positions.size > 1 and np.any(np.diff(positions) != 1)):
        raise ShapeError("predictions are not aligned with a contiguous span of table years")

    entries = []
    for col in columns:
        if col not in t.columns:
            raise NumericError(f"Unknown column: {col}")
        values = t[col].to_numpy(dtype=np.float64)[positions]
        try:
            r = pearson(values, predictions)
        except DegenerateInputError:
            logger.warning(f"Correlation for '{col}' is undefined (zero variance)")
            r = None
        entries.append(CorrEntry(column=col, r=r, n=int(values.size)))

    # stable: ties keep column order
    ordered = sorted(entries, key=lambda e: (not e.defined, -(e.r if e.defined else 0.0)))
    for rank, entry in enumerate(ordered, start=1):
        entry.rank = rank
    return CorrReport(entries=ordered)
