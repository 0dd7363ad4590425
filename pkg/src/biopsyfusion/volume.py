"""Axis-aligned 3D scalar volumes with physical geometry."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geometry import RigidTransform

__all__ = [
    "Volume3D",
    "OUTSIDE",
    "is_outside",
    "world_to_index",
    "index_to_world",
    "sample_trilinear",
    "resample",
    "index_affine",
    "downsample",
]

#: Marker returned by :func:`sample_trilinear` for points off the grid.
#: Volume intensities are always finite, so NaN is unambiguous.
OUTSIDE = math.nan


def is_outside(value) -> bool | np.ndarray:
    return np.isnan(value)


@dataclass(frozen=True, eq=False)
class Volume3D:
    """Regular grid of float32 intensities.

    ``data[i, j, k]`` is the voxel whose centre lies at
    ``origin + (i, j, k) * spacing`` (mm).
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise ValueError(f"volume data must be 3D, got shape {data.shape}")
        if min(data.shape) < 2:
            raise ValueError(f"every dimension must be >= 2, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("volume intensities must be finite")
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(spacing) != 3 or min(spacing) <= 0 or not all(map(math.isfinite, spacing)):
            raise ValueError(f"spacing must be three positive numbers, got {self.spacing}")
        if len(origin) != 3 or not all(map(math.isfinite, origin)):
            raise ValueError(f"origin must be three finite numbers, got {self.origin}")
        if data is self.data:
            data = data.copy()
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape)

    @property
    def center(self) -> np.ndarray:
        """World position of the grid centre."""
        return index_to_world(self, (np.array(self.dims) - 1) / 2.0)

    @property
    def extent_mm(self) -> np.ndarray:
        return (np.array(self.dims) - 1) * np.array(self.spacing)

    def same_geometry(self, other: "Volume3D") -> bool:
        return (
            self.dims == other.dims
            and self.spacing == other.spacing
            and self.origin == other.origin
        )

    def with_data(self, data) -> "Volume3D":
        return Volume3D(data, self.spacing, self.origin)

    def world_grid(self) -> np.ndarray:
        """World coordinates of every voxel centre, shape ``dims + (3,)``."""
        axes = [o + s * np.arange(n) for o, s, n in zip(self.origin, self.spacing, self.dims)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def world_to_index(v: Volume3D, p) -> np.ndarray:
    return (np.asarray(p, dtype=float) - np.array(v.origin)) / np.array(v.spacing)


def index_to_world(v: Volume3D, idx) -> np.ndarray:
    return np.array(v.origin) + np.asarray(idx, dtype=float) * np.array(v.spacing)


def sample_trilinear(v: Volume3D, p):
    """Trilinear intensity at world point(s) ``p``.

    A single point returns a float, or :data:`OUTSIDE` when its continuous
    index leaves ``[0, dims-1]``. An ``(n, 3)`` array returns an array with
    NaN at outside points.
    """
    p = np.asarray(p, dtype=float)
    idx = np.ascontiguousarray(world_to_index(v, p).reshape(-1, 3))
    values, inside = _kernels.sample_indices(v.data, idx)
    values[~inside] = OUTSIDE
    if p.ndim == 1:
        return float(values[0])
    return values.reshape(p.shape[:-1])


def index_affine(fixed: Volume3D, moving: Volume3D, t: RigidTransform):
    """``(A, b)`` mapping fixed voxel indices to moving voxel indices under ``t``."""
    r = t.rotation_matrix
    sf = np.array(fixed.spacing)
    sm = np.array(moving.spacing)
    # elementwise ratios keep A exactly diagonal-one for identity on shared grids
    a = r * sf[None, :] / sm[:, None]
    b = (r @ np.array(fixed.origin) + t.translation - np.array(moving.origin)) / sm
    return np.ascontiguousarray(a), np.ascontiguousarray(b)


def resample(moving: Volume3D, t: RigidTransform, like: Volume3D) -> tuple[Volume3D, np.ndarray]:
    """Resample ``moving`` onto the grid of ``like``.

    ``t`` maps ``like`` world coordinates into ``moving`` world coordinates.
    Returns the resampled volume (0 where the sample falls outside) and a
    boolean validity mask of shape ``like.dims``.
    """
    a, b = index_affine(like, moving, t)
    values, inside = _kernels.sample_affine_grid(
        moving.data, a, b, np.array(like.dims, dtype=np.int64), np.ones(3, dtype=np.int64)
    )
    out = values.reshape(like.dims).astype(np.float32)
    return like.with_data(out), inside.reshape(like.dims)


def downsample(v: Volume3D) -> Volume3D:
    """Halve resolution by 2x2x2 block averaging (odd trailing slices dropped)."""
    n = [d // 2 for d in v.dims]
    if min(n) < 2:
        raise ValueError(f"volume {v.dims} too small to downsample")
    d = v.data[: 2 * n[0], : 2 * n[1], : 2 * n[2]].astype(np.float64)
    d = d.reshape(n[0], 2, n[1], 2, n[2], 2).mean(axis=(1, 3, 5))
    spacing = tuple(2.0 * s for s in v.spacing)
    origin = tuple(o + 0.5 * s for o, s in zip(v.origin, v.spacing))
    return Volume3D(d.astype(np.float32), spacing, origin)
