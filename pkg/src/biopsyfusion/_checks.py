"""Input validation helpers shared by the estimators."""
from __future__ import annotations

import numpy as np

from .volume import Volume3D

__all__ = ["check_points", "check_volume", "check_point_pairs"]


def check_points(X, *, min_points: int = 1, name: str = "X") -> np.ndarray:
    """Return ``X`` as a finite float64 ``(n, 3)`` array with at least ``min_points`` rows."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1 and arr.size == 3:
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name} must have shape (n, 3), got {arr.shape}")
    if arr.shape[0] < min_points:
        raise ValueError(f"{name} needs at least {min_points} points, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite coordinates")
    return arr


def check_point_pairs(X, Y, *, min_points: int = 3) -> tuple[np.ndarray, np.ndarray]:
    X = check_points(X, min_points=min_points, name="fixed points")
    Y = check_points(Y, min_points=min_points, name="moving points")
    if X.shape != Y.shape:
        raise ValueError(f"paired point arrays differ in shape: {X.shape} vs {Y.shape}")
    return X, Y


def check_volume(v, name: str = "volume") -> Volume3D:
    if isinstance(v, Volume3D):
        return v
    if isinstance(v, np.ndarray):
        return Volume3D(v)
    raise TypeError(f"{name} must be a Volume3D or a 3D array, got {type(v).__name__}")
