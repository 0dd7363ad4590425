"""Fusion accuracy metrics: landmark (calcification) distance and needle angle."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import DegenerateSegment, EmptyInput
from .geometry import RigidTransform, apply_point

__all__ = ["FiducialPair", "FiducialError", "fiducial_error", "trajectory_angle"]


@dataclass(frozen=True, eq=False)
class FiducialPair:
    point_in_fixed: np.ndarray
    point_in_moving: np.ndarray
    id: str = ""

    def __post_init__(self):
        for name in ("point_in_fixed", "point_in_moving"):
            p = np.asarray(getattr(self, name), dtype=float).reshape(3)
            if not np.all(np.isfinite(p)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, p)


class FiducialError(NamedTuple):
    mean: float
    max: float
    per_pair: list


def fiducial_error(pairs, t: RigidTransform) -> FiducialError:
    """Distances ``|moving - t(fixed)|`` (mm) for landmark pairs; ``t`` maps fixed -> moving."""
    pairs = list(pairs)
    if not pairs:
        raise EmptyInput("fiducial_error needs at least one pair")
    f = np.array([p.point_in_fixed for p in pairs])
    m = np.array([p.point_in_moving for p in pairs])
    d = np.linalg.norm(m - apply_point(t, f), axis=1)
    return FiducialError(float(d.mean()), float(d.max()), d.tolist())


def _direction(seg) -> np.ndarray:
    if hasattr(seg, "entry"):
        entry, tip = seg.entry, seg.tip
    else:
        entry, tip = seg
    d = np.asarray(tip, dtype=float) - np.asarray(entry, dtype=float)
    n = np.linalg.norm(d)
    if n == 0.0:
        raise DegenerateSegment("entry and tip coincide")
    return d / n


def trajectory_angle(a, b) -> float:
    """Angle in degrees, in [0, 180], between two oriented entry->tip directions.

    Accepts :class:`~biopsyfusion.biopsy_map.NeedleTrajectory` objects or
    ``(entry, tip)`` pairs.
    """
    u, v = _direction(a), _direction(b)
    # atan2 of cross and dot stays accurate near 0 and 180 degrees where arccos does not
    return float(np.degrees(np.arctan2(np.linalg.norm(np.cross(u, v)), np.clip(u @ v, -1.0, 1.0))))
