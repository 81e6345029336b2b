from __future__ import annotations

from typing import Any, TypeAlias

import numpy as np
import numpy.typing as npt

FloatArray: TypeAlias = npt.NDArray[np.float64]
IntArray: TypeAlias = npt.NDArray[np.int64]
BoolArray: TypeAlias = npt.NDArray[np.bool_]


def as_points(value: Any, *, name: str = "points") -> FloatArray:
    """Return value as a float64 (N, 3) array

    :param value: Array-like of 3-vectors
    :param name: Name used in error messages
    """
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 1 and arr.shape[0] == 3:
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name}: Must be an (N, 3) array, but got shape {arr.shape}")
    return arr


def as_vector3(value: Any, *, name: str = "vector") -> FloatArray:
    """Return value as a float64 3-vector

    :param value: Array-like with exactly three elements
    :param name: Name used in error messages
    """
    arr = np.asarray(value, dtype=np.float64).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"{name}: Must be a 3-vector, but got shape {arr.shape}")
    return arr


def frozen(arr: npt.NDArray[Any]) -> npt.NDArray[Any]:
    """Mark an array read-only and return it"""
    arr.flags.writeable = False
    return arr
