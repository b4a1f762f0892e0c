"""
Data handling for the DfT road-safety tables.
Reads the three exported sheets (collisions, casualties, vehicles),
cleanses and imputes them, merges on year, fits and applies per-column
scaling, and frames the yearly series as supervised lookback windows.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from engines.numkernel import child_rng, quantile
from model_constants import DEFAULT_SKIP_ROWS, TABLE_HEADERS, YEAR_COLUMN, TableNames

logger = logging.getLogger(__name__)

SCALERS = ("robust", "minmax")
SPLIT_MODES = ("chrono", "shuffled")
TARGET_MODES = ("level", "change")
# widest raw sheet accepted by the reader
RAW_MAX_COLUMNS = 256
BRACKET_PATTERN = r"\[.*\]"


class DataSchemaError(Exception):
    """Raised when an input table does not match the expected schema"""
    pass


@dataclass(frozen=True)
class RawTable:
    cells: List[List[str]]
    source_name: str


@dataclass(frozen=True)
class ScaleParams:
    """Per-column center and scale; robust uses median/IQR, minmax uses min/range."""
    kind: str
    center: Dict[str, float]
    scale: Dict[str, float]

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "center": dict(self.center), "scale": dict(self.scale)}

    @staticmethod
    def from_dict(d: Mapping) -> "ScaleParams":
        return ScaleParams(kind=str(d.get("kind", "robust")),
                           center={k: float(v) for k, v in d["center"].items()},
                           scale={k: float(v) for k, v in d["scale"].items()})


@dataclass(frozen=True, eq=False)
class WindowedDataset:
    """Supervised samples: window k holds rows k..k+L-1, its target is row k+L.

    In change mode the target is the step from row k+L-1 to row k+L and
    `anchors` holds the row k+L-1 value it is added back onto.
    """
    lookback: int
    windows: np.ndarray
    targets: np.ndarray
    target_years: np.ndarray
    feature_cols: Tuple[str, ...] = field(default_factory=tuple)
    anchors: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def samples(self) -> List[Tuple[np.ndarray, float, int]]:
        return [(self.windows[k], float(self.targets[k]), int(self.target_years[k])) for k in range(len(self))]

    def levels(self, predictions) -> np.ndarray:
        """Model outputs mapped onto the scaled target column."""
        pred = np.asarray(predictions, dtype=np.float64)
        if pred.shape != self.targets.shape:
            raise DataSchemaError(f"predictions of shape {pred.shape} do not match {len(self)} samples")
        return pred if self.anchors is None else pred + self.anchors

    def subset(self, indices: Sequence[int]) -> "WindowedDataset":
        idx = np.asarray(indices, dtype=int)
        return WindowedDataset(lookback=self.lookback, windows=self.windows[idx], targets=self.targets[idx],
                               target_years=self.target_years[idx], feature_cols=self.feature_cols,
                               anchors=None if self.anchors is None else self.anchors[idx])


# ----------------------------------------------------------------------
# ingestion and cleansing
# ----------------------------------------------------------------------
def parse_value(s) -> float:
    """Text to float with thousands separators removed; unparseable text is 0.0."""
    try:
        return float(str(s).replace(",", "").strip())
    except ValueError:
        return 0.0


def read_raw_table(path: Union[str, Path]) -> RawTable:
    """Read an exported sheet as rows of text, trailing empty columns trimmed."""
    path = Path(path)
    if not path.exists():
        raise DataSchemaError(f"Input file not found: {path}")
    try:
        frame = pd.read_csv(path, header=None, names=list(range(RAW_MAX_COLUMNS)), index_col=False, dtype=str,
                            keep_default_na=False, skip_blank_lines=False, encoding="utf-8-sig")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataSchemaError(f"Cannot parse {path}: {e}")

    frame = frame.fillna("")
    used = np.flatnonzero((frame != "").any(axis=0).to_numpy())
    width = int(used[-1]) + 1 if used.size else 0
    cells = frame.iloc[:, :width].values.tolist()
    logger.debug(f"Read {len(cells)} raw rows x {width} columns from {path}")
    return RawTable(cells=cells, source_name=str(path))


def cleanse_table(raw: RawTable, skip_rows: int, headers: Sequence[str]) -> pd.DataFrame:
    """Drop preamble rows, keep and rename the leading columns, strip
    bracketed annotations and convert every cell to float."""
    if len(raw.cells) <= skip_rows:
        raise DataSchemaError(f"{raw.source_name}: only {len(raw.cells)} rows, cannot skip {skip_rows}")

    rows = raw.cells[skip_rows:]
    width = max(len(row) for row in rows)
    if width < len(headers):
        missing = list(headers[width:])
        raise DataSchemaError(f"{raw.source_name}: found {width} columns, expected {len(headers)}; "
                              f"missing columns: {missing}")

    n = len(headers)
    padded = [row[:n] + [""] * (n - len(row[:n])) for row in rows]
    df = pd.DataFrame(padded, columns=list(headers), dtype=object)
    df = df.replace(to_replace=BRACKET_PATTERN, value="", regex=True)
    df = df.apply(lambda col: col.map(parse_value))

    # footnotes and blank lines parse to a zero year
    year_ok = df[YEAR_COLUMN].apply(lambda y: np.isfinite(y) and y > 0 and float(y).is_integer())
    if (~year_ok).any():
        logger.warning(f"{raw.source_name}: dropping {int((~year_ok).sum())} rows without a valid year")
    df = df[year_ok].copy()
    if df.empty:
        raise DataSchemaError(f"{raw.source_name}: no data rows after cleansing")

    df[YEAR_COLUMN] = df[YEAR_COLUMN].astype(np.int64)
    if df[YEAR_COLUMN].duplicated().any():
        logger.warning(f"{raw.source_name}: duplicate years found, keeping first occurrence")
        df = df.drop_duplicates(subset=YEAR_COLUMN, keep="first")
    return df.sort_values(YEAR_COLUMN).reset_index(drop=True)


def impute(df: pd.DataFrame) -> pd.DataFrame:
    """Treat +/-inf as missing and fill every gap with its column median."""
    out = df.replace([np.inf, -np.inf], np.nan)
    for col in out.columns:
        if col == YEAR_COLUMN:
            continue
        present = out[col].dropna()
        if present.empty:
            raise DataSchemaError(f"Column '{col}' has no finite values to impute from")
        if len(present) < len(out):
            out[col] = out[col].fillna(quantile(present.to_numpy(dtype=np.float64), 0.5))
    return out


def merge_on_year(a: pd.DataFrame, b: pd.DataFrame, c: pd.DataFrame) -> pd.DataFrame:
    """Outer join on year, then median-impute rows a source did not cover."""
    seen = set()
    for table in (a, b, c):
        if table[YEAR_COLUMN].duplicated().any():
            raise DataSchemaError("Input table has duplicate years")
        overlap = (set(table.columns) - {YEAR_COLUMN}) & seen
        if overlap:
            raise DataSchemaError(f"Duplicate columns across inputs: {sorted(overlap)}")
        seen.update(set(table.columns) - {YEAR_COLUMN})

    merged = a.merge(b, on=YEAR_COLUMN, how="outer").merge(c, on=YEAR_COLUMN, how="outer")
    merged = merged.sort_values(YEAR_COLUMN).reset_index(drop=True)
    return impute(merged)


def load_merged_table(paths: Mapping[str, Union[str, Path]],
                      skip_rows: Mapping[str, int] = None) -> pd.DataFrame:
    """Read, cleanse and merge the three exported sheets."""
    skip_rows = {**DEFAULT_SKIP_ROWS, **(skip_rows or {})}
    tables = []
    for name in TableNames.ALL:
        raw = read_raw_table(paths[name])
        table = impute(cleanse_table(raw, skip_rows[name], TABLE_HEADERS[name]))
        logger.info(f"Cleansed {name}: {len(table)} rows x {len(table.columns) - 1} columns")
        tables.append(table)
    merged = merge_on_year(*tables)
    logger.info(f"Merged table: {len(merged)} years ({merged[YEAR_COLUMN].min()}-{merged[YEAR_COLUMN].max()}), "
                f"{len(merged.columns) - 1} data columns")
    return merged


# ----------------------------------------------------------------------
# scaling
# ----------------------------------------------------------------------
def _column_values(df: pd.DataFrame, col: str) -> np.ndarray:
    if col not in df.columns:
        raise DataSchemaError(f"Unknown column: {col}")
    values = df[col].to_numpy(dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise DataSchemaError(f"Column '{col}' contains non-finite values")
    return values


def fit_robust_scale(df: pd.DataFrame, cols: Sequence[str]) -> ScaleParams:
    """Median center and IQR scale per column; zero IQR falls back to 1."""
    center, scale = {}, {}
    for col in cols:
        values = _column_values(df, col)
        iqr = quantile(values, 0.75) - quantile(values, 0.25)
        center[col] = quantile(values, 0.5)
        scale[col] = iqr if iqr > 0 else 1.0
    return ScaleParams(kind="robust", center=center, scale=scale)


def fit_minmax_scale(df: pd.DataFrame, cols: Sequence[str]) -> ScaleParams:
    """Map each column's range onto [0, 1]; a zero range falls back to 1."""
    center, scale = {}, {}
    for col in cols:
        values = _column_values(df, col)
        span = float(values.max() - values.min())
        center[col] = float(values.min())
        scale[col] = span if span > 0 else 1.0
    return ScaleParams(kind="minmax", center=center, scale=scale)


def fit_scale(df: pd.DataFrame, cols: Sequence[str], kind: str = "robust") -> ScaleParams:
    if kind == "robust":
        return fit_robust_scale(df, cols)
    if kind == "minmax":
        return fit_minmax_scale(df, cols)
    raise DataSchemaError(f"Unknown scaler: {kind}")


def apply_scale(df: pd.DataFrame, params: ScaleParams) -> pd.DataFrame:
    out = df.copy()
    for col in params.center:
        if col not in out.columns:
            raise DataSchemaError(f"Unknown column: {col}")
        scaled = (out[col].to_numpy(dtype=np.float64) - params.center[col]) / params.scale[col]
        out[col] = np.where(np.isfinite(scaled), scaled, 0.0)
    return out


def invert_scale(df: pd.DataFrame, params: ScaleParams) -> pd.DataFrame:
    out = df.copy()
    for col in params.center:
        if col not in out.columns:
            raise DataSchemaError(f"Unknown column: {col}")
        out[col] = invert_values(out[col].to_numpy(dtype=np.float64), params, col)
    return out


def invert_values(values, params: ScaleParams, col: str) -> np.ndarray:
    """Map scaled values of one column back to original units."""
    if col not in params.center:
        raise DataSchemaError(f"Unknown column: {col}")
    return np.asarray(values, dtype=np.float64) * params.scale[col] + params.center[col]


# ----------------------------------------------------------------------
# supervised framing
# ----------------------------------------------------------------------
def make_windows(df: pd.DataFrame, feature_cols: Sequence[str], target_col: str, lookback: int,
                 target_mode: str = "level") -> WindowedDataset:
    """Sample k: features of rows k..k+L-1, target at row k+L.

    target_mode='change' makes the target the step from row k+L-1 and keeps
    the row k+L-1 value as the sample's anchor.
    """
    n = len(df)
    if lookback < 1:
        raise DataSchemaError(f"lookback must be >= 1, got {lookback}")
    if lookback >= n:
        raise DataSchemaError(f"lookback {lookback} needs more than {n} rows")
    if target_mode not in TARGET_MODES:
        raise DataSchemaError(f"Unknown target mode: {target_mode}")
    for col in list(feature_cols) + [target_col]:
        if col not in df.columns:
            raise DataSchemaError(f"Unknown column: {col}")

    years = df[YEAR_COLUMN].to_numpy(dtype=np.int64)
    gaps = np.flatnonzero(np.diff(years) != 1)
    if gaps.size:
        logger.warning(f"Year sequence has {gaps.size} gaps (first after {years[gaps[0]]}); "
                       f"windows use row adjacency")

    features = df[list(feature_cols)].to_numpy(dtype=np.float64)
    target = df[target_col].to_numpy(dtype=np.float64)
    windows = np.stack([features[k:k + lookback] for k in range(n - lookback)])
    targets = target[lookback:].copy()
    anchors = None
    if target_mode == "change":
        anchors = target[lookback - 1:-1].copy()
        targets = targets - anchors
    return WindowedDataset(lookback=lookback, windows=windows, targets=targets,
                           target_years=years[lookback:].copy(), feature_cols=tuple(feature_cols),
                           anchors=anchors)


def split(d: WindowedDataset, train_fraction: float, mode: str = "chrono",
          seed: int = 0) -> Tuple[WindowedDataset, WindowedDataset]:
    """Train/test partition with floor(fraction * count) training samples.

    Both partitions keep chronological order; shuffling only decides which
    samples land on each side.
    """
    if not 0.0 < train_fraction < 1.0:
        raise DataSchemaError(f"train_fraction must be in (0, 1), got {train_fraction}")
    count = len(d)
    n_train = int(np.floor(train_fraction * count))
    if n_train == 0 or n_train == count:
        raise DataSchemaError(f"train_fraction {train_fraction} on {count} samples leaves an empty partition")

    if mode == "chrono":
        order = np.arange(count)
    elif mode == "shuffled":
        order = child_rng(seed, "split").permutation(count)
    else:
        raise DataSchemaError(f"Unknown split mode: {mode}")
    return d.subset(np.sort(order[:n_train])), d.subset(np.sort(order[n_train:]))
