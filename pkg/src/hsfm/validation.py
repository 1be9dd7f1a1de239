"""Input validation helpers used across the core and the estimators."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


def owned_array(values, dtype) -> np.ndarray:
    """Fresh C-contiguous copy that never aliases the caller's memory,
    safe to freeze or mutate internally."""
    return np.array(values, dtype=dtype, order="C", copy=True)


def check_matrix(x, name: str = "features", *, dim: int | None = None) -> np.ndarray:
    """Coerce to a 2-D float64 array and verify finiteness.

    ``dim`` pins the expected number of columns when known.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"{name}: expected a 2-D array, got ndim={arr.ndim}")
    if dim is not None and arr.shape[1] != dim:
        raise ValidationError(f"{name}: expected {dim} columns, got {arr.shape[1]}")
    if arr.size and not np.isfinite(arr).all():
        raise ValidationError(f"{name}: contains non-finite values")
    return arr


def check_vector(x, name: str = "vector", *, size: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError(f"{name}: expected a 1-D array, got ndim={arr.ndim}")
    if size is not None and arr.shape[0] != size:
        raise ValidationError(f"{name}: expected length {size}, got {arr.shape[0]}")
    if arr.size and not np.isfinite(arr).all():
        raise ValidationError(f"{name}: contains non-finite values")
    return arr


def check_index_vector(
    x,
    name: str = "labels",
    *,
    size: int | None = None,
    bound: int | None = None,
) -> np.ndarray:
    """Coerce to 1-D int64 indices, all within ``[0, bound)`` when given.

    Out-of-range entries are reported with their row index.
    """
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise ValidationError(f"{name}: expected a 1-D array, got ndim={arr.ndim}")
    if arr.size and arr.dtype.kind not in "iu":
        raise ValidationError(f"{name}: expected integer entries, got dtype {arr.dtype}")
    arr = arr.astype(np.int64, copy=False)
    if size is not None and arr.shape[0] != size:
        raise ValidationError(f"{name}: expected length {size}, got {arr.shape[0]}")
    if arr.size:
        bad = np.flatnonzero(arr < 0)
        if bad.size:
            row = int(bad[0])
            raise ValidationError(f"{name}: negative value {int(arr[row])} at row {row}")
        if bound is not None:
            bad = np.flatnonzero(arr >= bound)
            if bad.size:
                row = int(bad[0])
                raise ValidationError(
                    f"{name}: value {int(arr[row])} out of range [0, {bound}) at row {row}"
                )
    return arr


def check_count(value, name: str, *, minimum: int = 0) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
        raise ValidationError(f"{name}: expected an integer, got {value!r}")
    value = int(value)
    if value < minimum:
        raise ValidationError(f"{name}: expected >= {minimum}, got {value}")
    return value


def check_positive(value, name: str) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{name}: expected a number, got {value!r}") from None
    if not np.isfinite(value) or value <= 0:
        raise ValidationError(f"{name}: expected a positive finite number, got {value}")
    return value


def check_nonnegative(value, name: str) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{name}: expected a number, got {value!r}") from None
    if not np.isfinite(value) or value < 0:
        raise ValidationError(f"{name}: expected a non-negative finite number, got {value}")
    return value
