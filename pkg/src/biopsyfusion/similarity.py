"""Gray-level similarity measures evaluated over a validity mask.

All measures accept :class:`~biopsyfusion.volume.Volume3D` objects or plain
arrays of identical shape. Accumulation is done in float64 over the masked
voxels in C order, so results are reproducible bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateImage, EmptyOverlap

__all__ = ["SimilarityKind", "ssd", "ncc", "nmi", "evaluate", "METRICS"]

METRICS = ("ssd", "ncc", "nmi")


@dataclass(frozen=True)
class SimilarityKind:
    """Which measure drives registration; ``bins`` only matters for NMI."""

    name: str = "ncc"
    bins: int = 32

    def __post_init__(self):
        name = self.name.lower()
        if name not in METRICS:
            raise ValueError(f"unknown metric {self.name!r}; expected one of {METRICS}")
        if name == "nmi" and not 8 <= self.bins <= 256:
            raise ValueError(f"NMI bins must be in [8, 256], got {self.bins}")
        object.__setattr__(self, "name", name)

    @property
    def higher_is_better(self) -> bool:
        return self.name != "ssd"


def _masked(fixed, moved, mask):
    f = np.asarray(getattr(fixed, "data", fixed))
    m = np.asarray(getattr(moved, "data", moved))
    if f.shape != m.shape:
        raise ValueError(f"shape mismatch: {f.shape} vs {m.shape}")
    if mask is None:
        f, m = f.ravel(), m.ravel()
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != f.shape:
            raise ValueError(f"mask shape {mask.shape} does not match image shape {f.shape}")
        f, m = f[mask], m[mask]
    if f.size == 0:
        raise EmptyOverlap("mask selects no voxels")
    return f.astype(np.float64), m.astype(np.float64)


def ssd(fixed, moved, mask=None) -> float:
    """Mean squared intensity difference over the mask."""
    f, m = _masked(fixed, moved, mask)
    d = f - m
    return float(np.dot(d, d) / d.size)


def ncc(fixed, moved, mask=None) -> float:
    """Pearson correlation of the masked intensities."""
    f, m = _masked(fixed, moved, mask)
    f = f - f.mean()
    m = m - m.mean()
    sff = np.dot(f, f)
    smm = np.dot(m, m)
    if sff <= 0.0 or smm <= 0.0:
        raise DegenerateImage("image is constant over the mask")
    r = np.dot(f, m) / np.sqrt(sff * smm)
    return float(np.clip(r, -1.0, 1.0))


def _bin(x: np.ndarray, bins: int) -> np.ndarray:
    lo, hi = x.min(), x.max()
    if hi <= lo:
        return np.zeros(x.size, dtype=np.int64)
    idx = np.floor((x - lo) * (bins / (hi - lo))).astype(np.int64)
    return np.minimum(idx, bins - 1)


def _entropy(counts: np.ndarray, total: int) -> float:
    p = counts[counts > 0] / total
    return float(-np.sum(p * np.log(p)))


def nmi(fixed, moved, mask=None, bins: int = 32) -> float:
    """Normalized mutual information ``(H(F) + H(M)) / H(F, M)``.

    Histograms use ``bins`` equal-width bins spanning each image's masked
    min-max range.
    """
    if not 2 <= bins <= 256:
        raise ValueError(f"bins must be in [2, 256], got {bins}")
    f, m = _masked(fixed, moved, mask)
    fi = _bin(f, bins)
    mi = _bin(m, bins)
    joint = np.bincount(fi * bins + mi, minlength=bins * bins)
    n = f.size
    h_joint = _entropy(joint, n)
    if h_joint == 0.0:
        raise DegenerateImage("both images are constant over the mask")
    h_f = _entropy(np.bincount(fi, minlength=bins), n)
    h_m = _entropy(np.bincount(mi, minlength=bins), n)
    return (h_f + h_m) / h_joint


def evaluate(kind: SimilarityKind, fixed, moved, mask=None) -> float:
    if kind.name == "ssd":
        return ssd(fixed, moved, mask)
    if kind.name == "ncc":
        return ncc(fixed, moved, mask)
    return nmi(fixed, moved, mask, kind.bins)
