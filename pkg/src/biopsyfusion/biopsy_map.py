"""Needle trajectories, the 12-cell planned-target grid, and per-target scoring.

The prostate bounding box is split into 4 equal columns along x (left
lateral, left parasagittal, right parasagittal, right lateral), 3 equal
levels along z (apex, mid, base) and is left whole along y. A biopsy is
"inside" its planned target when any part of its core intersects the
planned cell.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable

import numpy as np

from .exceptions import DegenerateBox, DegenerateSegment, MissingTransform
from .geometry import RigidTransform, apply_point

__all__ = [
    "Side",
    "Column",
    "Level",
    "TargetLabel",
    "ALL_LABELS",
    "TABLE_ROWS",
    "Box",
    "TargetGrid",
    "NeedleTrajectory",
    "build_target_grid",
    "map_trajectory",
    "segment_cell_length",
    "TargetStats",
    "BiopsyScore",
    "MetricsReport",
    "score_trajectories",
    "evaluate_session",
    "round_half_up",
]


class Side(Enum):
    LEFT = "L"
    RIGHT = "R"


class Column(Enum):
    LATERAL = "L"
    PARASAGITTAL = "P"


class Level(Enum):
    BASE = "B"
    MID = "M"
    APEX = "A"


@dataclass(frozen=True)
class TargetLabel:
    side: Side
    column: Column
    level: Level

    @property
    def code(self) -> str:
        """Side-merged row code such as ``"BL"`` (base lateral)."""
        return self.level.value + self.column.value

    def __str__(self) -> str:
        return f"{self.side.value}-{self.code}"

    @classmethod
    def parse(cls, text: str) -> "TargetLabel":
        """Parse ``"R-BL"`` / ``"RBL"`` style labels."""
        s = text.strip().upper().replace("-", "").replace("_", "")
        if len(s) != 3:
            raise ValueError(f"cannot parse target label {text!r}")
        try:
            return cls(Side(s[0]), Column(s[2]), Level(s[1]))
        except ValueError:
            raise ValueError(f"cannot parse target label {text!r}") from None


# Column order along +x and level order along +z.
_COLUMNS = (
    (Side.LEFT, Column.LATERAL),
    (Side.LEFT, Column.PARASAGITTAL),
    (Side.RIGHT, Column.PARASAGITTAL),
    (Side.RIGHT, Column.LATERAL),
)
_LEVELS = (Level.APEX, Level.MID, Level.BASE)

ALL_LABELS = tuple(TargetLabel(s, c, lv) for lv in _LEVELS for s, c in _COLUMNS)
TABLE_ROWS = ("BL", "BP", "ML", "MP", "AL", "AP")


@dataclass(frozen=True, eq=False)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(3)
        hi = np.asarray(self.hi, dtype=float).reshape(3)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_extents(cls, values) -> "Box":
        """From ``x0, x1, y0, y1, z0, z1``."""
        v = np.asarray(values, dtype=float).reshape(3, 2)
        return cls(v[:, 0], v[:, 1])

    @property
    def size(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def volume(self) -> float:
        return float(np.prod(self.size))

    @property
    def center(self) -> np.ndarray:
        return (self.lo + self.hi) / 2.0

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return np.all((p >= self.lo) & (p <= self.hi), axis=-1)

    def extents(self) -> list[float]:
        return [float(v) for pair in zip(self.lo, self.hi) for v in pair]


@dataclass(frozen=True, eq=False)
class TargetGrid:
    bbox: Box
    cells: dict

    def cell(self, label: TargetLabel) -> Box:
        return self.cells[label]

    def locate(self, points) -> list:
        """Label of the cell holding each point, ``None`` outside the box.

        Cells are half-open except on the box's upper faces, so every point
        of the box belongs to exactly one cell.
        """
        p = np.atleast_2d(np.asarray(points, dtype=float))
        rel = (p - self.bbox.lo) / self.bbox.size
        inside = self.bbox.contains(p)
        ix = np.minimum(np.floor(rel[:, 0] * 4), 3).astype(int)
        iz = np.minimum(np.floor(rel[:, 2] * 3), 2).astype(int)
        out = []
        for ok, a, c in zip(inside, ix, iz):
            out.append(_label_at(a, c) if ok else None)
        return out


def _label_at(ix: int, iz: int) -> TargetLabel:
    side, column = _COLUMNS[ix]
    return TargetLabel(side, column, _LEVELS[iz])


def build_target_grid(bbox) -> TargetGrid:
    """Split ``bbox`` (a :class:`Box` or six extents) into the 12 planned targets."""
    if not isinstance(bbox, Box):
        bbox = Box.from_extents(bbox)
    if np.any(~np.isfinite(bbox.size)) or np.any(bbox.size <= 0):
        raise DegenerateBox(f"bounding box needs positive extent on every axis, got {bbox.size}")
    xs = [bbox.lo[0] + bbox.size[0] * i / 4.0 for i in range(4)] + [bbox.hi[0]]
    zs = [bbox.lo[2] + bbox.size[2] * i / 3.0 for i in range(3)] + [bbox.hi[2]]
    cells = {}
    for iz in range(3):
        for ix in range(4):
            lo = (xs[ix], bbox.lo[1], zs[iz])
            hi = (xs[ix + 1], bbox.hi[1], zs[iz + 1])
            cells[_label_at(ix, iz)] = Box(lo, hi)
    return TargetGrid(bbox, cells)


@dataclass(frozen=True, eq=False)
class NeedleTrajectory:
    """Needle track from ``entry`` to ``tip``; the biopsy core is the distal
    ``core_length`` mm ending at the tip."""

    entry: np.ndarray
    tip: np.ndarray
    core_length: float
    volume_id: str = ""
    planned_target: TargetLabel | None = None

    def __post_init__(self):
        entry = np.asarray(self.entry, dtype=float).reshape(3)
        tip = np.asarray(self.tip, dtype=float).reshape(3)
        object.__setattr__(self, "entry", entry)
        object.__setattr__(self, "tip", tip)
        if isinstance(self.planned_target, str):
            object.__setattr__(self, "planned_target", TargetLabel.parse(self.planned_target))
        length = float(np.linalg.norm(tip - entry))
        if not self.core_length > 0:
            raise ValueError(f"core length must be positive, got {self.core_length}")
        if length < self.core_length * (1 - 1e-12):
            raise ValueError(f"core length {self.core_length} exceeds needle length {length:.6g}")

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.tip - self.entry))

    @property
    def direction(self) -> np.ndarray:
        d = self.tip - self.entry
        return d / np.linalg.norm(d)

    @property
    def core_start(self) -> np.ndarray:
        return self.tip - self.direction * self.core_length

    def to_dict(self) -> dict:
        return {
            "entry": self.entry.tolist(),
            "tip": self.tip.tolist(),
            "core_length": self.core_length,
            "volume_id": self.volume_id,
            "planned_target": None if self.planned_target is None else str(self.planned_target),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NeedleTrajectory":
        return cls(d["entry"], d["tip"], float(d["core_length"]),
                   str(d.get("volume_id", "")), d.get("planned_target"))


def map_trajectory(traj: NeedleTrajectory, t: RigidTransform) -> NeedleTrajectory:
    """Carry a trajectory through ``t`` (its volume frame -> reference frame)."""
    return replace(traj, entry=apply_point(t, traj.entry), tip=apply_point(t, traj.tip))


def segment_cell_length(entry, tip, cell: Box, core_length: float | None = None) -> float:
    """Length (mm) of the needle core lying inside ``cell``.

    When ``core_length`` is given, only the last ``core_length`` mm before
    the tip count; otherwise the whole segment does. Slab clipping against
    the three pairs of faces.
    """
    entry = np.asarray(entry, dtype=float)
    tip = np.asarray(tip, dtype=float)
    d = tip - entry
    length = float(np.linalg.norm(d))
    if length == 0.0:
        raise DegenerateSegment("entry and tip coincide")
    if core_length is not None and core_length < length:
        start = tip - d * (core_length / length)
    else:
        start = entry
    seg = tip - start
    t0, t1 = 0.0, 1.0
    for axis in range(3):
        s, v = start[axis], seg[axis]
        lo, hi = cell.lo[axis], cell.hi[axis]
        if v == 0.0:
            if s < lo or s > hi:
                return 0.0
            continue
        a = (lo - s) / v
        b = (hi - s) / v
        if a > b:
            a, b = b, a
        t0 = max(t0, a)
        t1 = min(t1, b)
        if t1 <= t0:
            return 0.0
    return (t1 - t0) * float(np.linalg.norm(seg))


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass
class TargetStats:
    """Per-target statistics for one side-merged target row."""

    n_toward: int = 0
    n_inside: int = 0
    lengths: list = field(default_factory=list)  # mm in planned cell, inside biopsies
    fractions: list = field(default_factory=list)  # length / core_length, inside biopsies

    @property
    def pct_inside(self) -> float:
        return 100.0 * self.n_inside / self.n_toward if self.n_toward else 0.0

    @property
    def mean_len_inside(self) -> float:
        return math.fsum(self.lengths) / len(self.lengths) if self.lengths else 0.0

    @property
    def pct_len_inside(self) -> float:
        return 100.0 * math.fsum(self.fractions) / len(self.fractions) if self.fractions else 0.0

    def rounded(self) -> tuple[int, int, int, int, int]:
        return (
            self.n_toward,
            self.n_inside,
            round_half_up(self.pct_inside),
            round_half_up(self.mean_len_inside),
            round_half_up(self.pct_len_inside),
        )


@dataclass(frozen=True)
class BiopsyScore:
    volume_id: str
    planned: TargetLabel
    length_in_planned: float
    core_length: float
    cell_lengths: dict

    @property
    def inside(self) -> bool:
        return self.length_in_planned > 0.0


@dataclass
class MetricsReport:
    rows: dict
    total: TargetStats
    excluded: int = 0
    scores: list = field(default_factory=list)

    @property
    def n_included(self) -> int:
        return self.total.n_toward

    def table(self) -> list[tuple]:
        """``(target, n_toward, n_inside, pct_inside, mean_len_mm, pct_len)`` rows, rounded."""
        out = [(code, *self.rows[code].rounded()) for code in TABLE_ROWS]
        out.append(("TOTAL", *self.total.rounded()))
        return out


def _score(traj: NeedleTrajectory, grid: TargetGrid) -> BiopsyScore:
    cell_lengths = {
        str(label): segment_cell_length(traj.entry, traj.tip, box, traj.core_length)
        for label, box in grid.cells.items()
    }
    return BiopsyScore(
        volume_id=traj.volume_id,
        planned=traj.planned_target,
        length_in_planned=cell_lengths[str(traj.planned_target)],
        core_length=traj.core_length,
        cell_lengths=cell_lengths,
    )


def score_trajectories(trajectories: Iterable[NeedleTrajectory], grid: TargetGrid,
                       excluded: int = 0) -> MetricsReport:
    """Aggregate reference-frame trajectories into per-target statistics."""
    rows = {code: TargetStats() for code in TABLE_ROWS}
    total = TargetStats()
    scores = []
    for traj in trajectories:
        if traj.planned_target is None:
            raise ValueError(f"trajectory {traj.volume_id!r} has no planned target")
        sc = _score(traj, grid)
        scores.append(sc)
        for stats in (rows[sc.planned.code], total):
            stats.n_toward += 1
            if sc.inside:
                stats.n_inside += 1
                stats.lengths.append(sc.length_in_planned)
                stats.fractions.append(sc.length_in_planned / sc.core_length)
    return MetricsReport(rows, total, excluded, scores)


def evaluate_session(session, grid: TargetGrid) -> MetricsReport:
    """Score every biopsy of a fusion session in the reference frame.

    Biopsies whose volume has no successful registration are left out and
    counted in ``excluded``.
    """
    mapped = []
    excluded = 0
    for record in session.records:
        try:
            mapped.append(record.reference_trajectory())
        except MissingTransform:
            excluded += 1
    return score_trajectories(mapped, grid, excluded)
