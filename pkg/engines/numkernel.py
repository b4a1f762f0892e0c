"""
Numeric kernel shared by every pipeline stage.
Activations, matrix-vector algebra, quantiles, correlation and seeded
randomness, all in 64-bit floating point.

Randomness uses numpy's PCG64 bit generator seeded through SeedSequence;
child streams are derived from the run seed by a fixed text label so each
subsystem gets an independent, reproducible stream.
"""
from __future__ import annotations

import zlib
from typing import Optional, Union

import numpy as np
from scipy.special import expit

ArrayLike = Union[float, np.ndarray]

ACTIVATIONS = ("sigmoid", "tanh", "relu")
RNG_ALGORITHM = "PCG64 (numpy SeedSequence, label-derived child streams)"


class NumericError(ValueError):
    """Raised for invalid numeric input"""
    pass


class ShapeError(NumericError):
    """Raised when array dimensions do not agree"""
    pass


class DegenerateInputError(NumericError):
    """Raised when an estimator's input has no variance"""
    pass


def activate(kind: str, x: ArrayLike) -> ArrayLike:
    """Apply sigmoid, tanh or relu elementwise. Scalars in, scalars out."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NumericError("non-finite activation input")

    if kind == "sigmoid":
        out = expit(arr)
    elif kind == "tanh":
        out = np.tanh(arr)
    elif kind == "relu":
        out = np.maximum(arr, 0.0)
    else:
        raise NumericError(f"Unknown activation: {kind}")

    return float(out) if np.ndim(x) == 0 else out


def activation_grad(kind: str, pre: np.ndarray, out: np.ndarray) -> np.ndarray:
    """Derivative of the activation, given its input and its output.

    The relu subgradient at exactly 0 is 0.
    """
    if kind == "sigmoid":
        return out * (1.0 - out)
    if kind == "tanh":
        return 1.0 - out ** 2
    if kind == "relu":
        return (pre > 0.0).astype(np.float64)
    raise NumericError(f"Unknown activation: {kind}")


def mat_vec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Row-major matrix times vector."""
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ShapeError(f"Cannot multiply matrix of shape {m.shape} by vector of shape {v.shape}")
    return m @ v


def quantile(values, q: float) -> float:
    """Quantile by linear interpolation at rank q*(n-1) of the sorted values."""
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise NumericError("quantile of empty input")
    if not 0.0 <= q <= 1.0:
        raise NumericError(f"quantile level must be in [0, 1], got {q}")
    if not np.all(np.isfinite(arr)):
        raise NumericError("quantile input contains non-finite values")
    return float(np.quantile(arr, q, method="linear"))


def pearson(x, y) -> float:
    """Pearson product-moment correlation, clipped to [-1, 1]."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ShapeError(f"Correlation inputs differ in length: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise NumericError("correlation needs at least two points")

    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInputError("degenerate correlation input")

    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))


# ----------------------------------------------------------------------
# seeded randomness
# ----------------------------------------------------------------------
def make_rng(seed: int) -> np.random.Generator:
    """Root generator for a run seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def child_rng(seed: int, label: str) -> np.random.Generator:
    """Independent stream derived from the run seed and a fixed label."""
    key = zlib.crc32(label.encode("utf-8"))
    seq = np.random.SeedSequence(int(seed), spawn_key=(key,))
    return np.random.Generator(np.random.PCG64(seq))


def uniform(rng: np.random.Generator, lo: float, hi: float,
            size: Optional[Union[int, tuple]] = None) -> ArrayLike:
    """Draw from [lo, hi). A zero-width interval returns lo."""
    if lo > hi:
        raise NumericError(f"uniform bounds reversed: lo={lo} > hi={hi}")
    if lo == hi:
        return float(lo) if size is None else np.full(size, float(lo))
    draw = rng.uniform(lo, hi, size=size)
    return float(draw) if size is None else draw
