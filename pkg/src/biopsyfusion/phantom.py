"""Synthetic TRUS-like prostate volumes with exact ground truth.

The scene is an ellipsoidal gland with a few smooth echogenic/hypoechoic
nodules, bright calcifications and optionally a needle track, over a darker
background. Scene geometry is drawn from ``PhantomConfig.seed``; each
acquisition multiplies the structure by a fresh speckle field drawn from
its own render seed, since speckle decorrelates between probe placements.
Calcifications and the needle are specular reflectors and carry no speckle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .exceptions import ConfigError
from .geometry import RigidTransform, apply_point, from_rotvec, identity, invert, to_matrix, from_matrix
from .volume import Volume3D

__all__ = [
    "PhantomConfig",
    "GroundTruth",
    "generate",
    "perturb",
    "speckle_field",
    "random_rigid",
    "semi_axes_for_volume",
]


def semi_axes_for_volume(cc: float, ratios=(22.0, 17.0, 25.0)) -> tuple[float, float, float]:
    """Semi-axes (mm) with the given proportions whose ellipsoid holds ``cc`` millilitres."""
    r = np.asarray(ratios, dtype=float)
    scale = (cc * 1000.0 / (4.0 / 3.0 * math.pi * np.prod(r))) ** (1.0 / 3.0)
    return tuple(float(x) for x in r * scale)


@dataclass(frozen=True)
class PhantomConfig:
    dims: tuple[int, int, int] = (128, 128, 128)
    spacing: tuple[float, float, float] = (0.6, 0.6, 0.6)
    # 4/3 pi * 22 * 17 * 25 mm^3 = 39.2 cc
    semi_axes: tuple[float, float, float] = (22.0, 17.0, 25.0)
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    background: float = 30.0
    gland: float = 110.0
    calcification: float = 400.0
    needle_level: float = 300.0
    speckle_sigma: float = 0.3
    smoothing_mm: float = 0.6
    n_calcifications: int = 5
    calcification_radius: tuple[float, float] = (1.0, 2.0)
    n_nodules: int = 6
    nodule_contrast: float = 0.25
    needle: tuple | None = None  # (entry, tip) in mm, reference frame
    needle_radius: float = 0.5
    margin_mm: float = 5.0
    seed: int = 0

    @property
    def origin(self) -> tuple[float, float, float]:
        """Grid centred on the world origin, which lies on the probe axis."""
        return tuple(-(n - 1) * s / 2.0 for n, s in zip(self.dims, self.spacing))

    @property
    def gland_volume_cc(self) -> float:
        return 4.0 / 3.0 * math.pi * float(np.prod(self.semi_axes)) / 1000.0

    def grid_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array(self.origin)
        return lo, lo + (np.array(self.dims) - 1) * np.array(self.spacing)

    def validate(self) -> None:
        if len(self.dims) != 3 or min(self.dims) < 2:
            raise ConfigError(f"dims must be three integers >= 2, got {self.dims}")
        if min(self.spacing) <= 0 or min(self.semi_axes) <= 0:
            raise ConfigError("spacing and semi-axes must be positive")
        if self.speckle_sigma < 0 or self.smoothing_mm < 0:
            raise ConfigError("speckle sigma and smoothing must be non-negative")
        lo, hi = self.grid_bounds()
        c = np.array(self.center)
        a = np.array(self.semi_axes)
        if np.any(c - a < lo + self.margin_mm) or np.any(c + a > hi - self.margin_mm):
            raise ConfigError(
                f"ellipsoid {self.semi_axes} at {self.center} does not fit the grid "
                f"with a {self.margin_mm} mm margin"
            )


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Exact scene geometry.

    ``center``, ``semi_axes``, ``bbox``, ``reference_calcifications`` and
    ``reference_needle`` live in the reference (R0) frame. ``calcifications``
    and ``needle`` are where those structures appear in this acquisition,
    i.e. mapped by ``transform`` (reference -> this volume).
    """

    center: np.ndarray
    semi_axes: np.ndarray
    bbox: tuple[np.ndarray, np.ndarray]
    reference_calcifications: np.ndarray
    calcification_radii: np.ndarray
    nodules: np.ndarray  # rows: x, y, z, sigma_mm, amplitude
    reference_needle: tuple | None = None
    transform: RigidTransform = field(default_factory=identity)

    @property
    def calcifications(self) -> np.ndarray:
        return apply_point(self.transform, self.reference_calcifications)

    @property
    def needle(self) -> tuple | None:
        if self.reference_needle is None:
            return None
        return tuple(apply_point(self.transform, p) for p in self.reference_needle)

    def with_transform(self, t: RigidTransform, needle=None) -> "GroundTruth":
        return replace(self, transform=t, reference_needle=needle)

    def to_dict(self) -> dict:
        out = {
            "center": self.center.tolist(),
            "semi_axes": self.semi_axes.tolist(),
            "bbox": [float(v) for pair in zip(*self.bbox) for v in pair],
            "reference_calcifications": self.reference_calcifications.tolist(),
            "calcification_radii": self.calcification_radii.tolist(),
            "calcifications": self.calcifications.tolist(),
            "nodules": self.nodules.tolist(),
            "transform": to_matrix(self.transform).ravel().tolist(),
            "reference_needle": None,
            "needle": None,
        }
        if self.reference_needle is not None:
            out["reference_needle"] = [np.asarray(p).tolist() for p in self.reference_needle]
            out["needle"] = [np.asarray(p).tolist() for p in self.needle]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        b = np.asarray(d["bbox"], dtype=float)
        needle = d.get("reference_needle")
        return cls(
            center=np.asarray(d["center"], dtype=float),
            semi_axes=np.asarray(d["semi_axes"], dtype=float),
            bbox=(b[0::2].copy(), b[1::2].copy()),
            reference_calcifications=np.asarray(d["reference_calcifications"], dtype=float).reshape(-1, 3),
            calcification_radii=np.asarray(d["calcification_radii"], dtype=float),
            nodules=np.asarray(d["nodules"], dtype=float).reshape(-1, 5),
            reference_needle=None if needle is None else tuple(np.asarray(p, dtype=float) for p in needle),
            transform=from_matrix(d["transform"]),
        )


def _points_in_ellipsoid(rng, n, center, axes, fill):
    """``n`` points uniformly inside the ellipsoid shrunk by ``fill``."""
    pts = []
    while len(pts) < n:
        u = rng.uniform(-1.0, 1.0, 3)
        if u @ u <= 1.0:
            pts.append(center + fill * u * axes)
    return np.array(pts).reshape(-1, 3)


def _scene(cfg: PhantomConfig) -> GroundTruth:
    rng = np.random.default_rng(cfg.seed)
    c = np.array(cfg.center, dtype=float)
    a = np.array(cfg.semi_axes, dtype=float)
    calcs = _points_in_ellipsoid(rng, cfg.n_calcifications, c, a, 0.75)
    radii = rng.uniform(*cfg.calcification_radius, size=cfg.n_calcifications)
    nod_centers = _points_in_ellipsoid(rng, cfg.n_nodules, c, a, 0.8)
    nod_sigma = rng.uniform(2.5, 5.0, size=cfg.n_nodules)
    nod_amp = cfg.nodule_contrast * rng.choice([-1.0, 1.0], size=cfg.n_nodules)
    nodules = np.column_stack([nod_centers, nod_sigma, nod_amp]) if cfg.n_nodules else np.zeros((0, 5))
    needle = None
    if cfg.needle is not None:
        needle = tuple(np.asarray(p, dtype=float).reshape(3) for p in cfg.needle)
    return GroundTruth(
        center=c,
        semi_axes=a,
        bbox=(c - a, c + a),
        reference_calcifications=calcs,
        calcification_radii=radii,
        nodules=nodules,
        reference_needle=needle,
    )


def speckle_field(cfg: PhantomConfig, seed: int) -> np.ndarray:
    """Positive multiplicative speckle with mean 1 and standard deviation ``speckle_sigma``.

    Gaussian white noise from a counter-based generator keyed by ``seed`` is
    smoothed, standardized and pushed through a log-normal map.
    """
    if cfg.speckle_sigma == 0:
        return np.ones(cfg.dims, dtype=np.float32)
    z = np.random.Generator(np.random.Philox(key=seed)).standard_normal(cfg.dims)
    if cfg.smoothing_mm > 0:
        z = gaussian_filter(z, [cfg.smoothing_mm / s for s in cfg.spacing], mode="wrap")
    z = (z - z.mean()) / z.std()
    s = math.sqrt(math.log1p(cfg.speckle_sigma**2))
    return np.exp(s * z - 0.5 * s * s).astype(np.float32)


def _segment_distance(q, p0, p1):
    d = p1 - p0
    t = np.clip((q - p0) @ d / (d @ d), 0.0, 1.0)
    return np.linalg.norm(q - p0 - t[..., None] * d, axis=-1)


def _render(cfg: PhantomConfig, truth: GroundTruth, t: RigidTransform, seed: int) -> Volume3D:
    axes = [o + s * np.arange(n) for o, s, n in zip(cfg.origin, cfg.spacing, cfg.dims)]
    world = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    # voxel centres pulled back into the reference scene
    q = apply_point(invert(t), world)
    del world

    u = (q - truth.center) / truth.semi_axes
    inside = np.einsum("...i,...i->...", u, u) <= 1.0
    img = np.full(cfg.dims, cfg.background, dtype=np.float64)
    qg = q[inside]
    tex = np.ones(len(qg))
    for x, y, z, sig, amp in truth.nodules:
        r2 = np.sum((qg - (x, y, z)) ** 2, axis=1)
        tex += amp * np.exp(-r2 / (2.0 * sig * sig))
    img[inside] = cfg.gland * tex
    img *= speckle_field(cfg, seed)

    for c, r in zip(truth.reference_calcifications, truth.calcification_radii):
        hit = np.sum((q - c) ** 2, axis=-1) <= r * r
        img[hit] = cfg.calcification
    if truth.reference_needle is not None:
        p0, p1 = truth.reference_needle
        img[_segment_distance(q, p0, p1) <= cfg.needle_radius] = cfg.needle_level
    return Volume3D(img.astype(np.float32), cfg.spacing, cfg.origin)


def _check_inside(cfg: PhantomConfig, truth: GroundTruth, t: RigidTransform) -> None:
    r = t.rotation_matrix
    half = np.sqrt((r * truth.semi_axes[None, :]) ** 2 @ np.ones(3))
    c = apply_point(t, truth.center)
    lo, hi = cfg.grid_bounds()
    if np.any(c - half < lo) or np.any(c + half > hi):
        raise ConfigError("transform moves the gland outside the volume grid")


def generate(cfg: PhantomConfig | None = None) -> tuple[Volume3D, GroundTruth]:
    """Render the reference acquisition of the scene described by ``cfg``."""
    cfg = cfg or PhantomConfig()
    cfg.validate()
    truth = _scene(cfg)
    return _render(cfg, truth, identity(), cfg.seed), truth


def perturb(cfg: PhantomConfig, truth: GroundTruth, t: RigidTransform,
            new_seed: int) -> tuple[Volume3D, GroundTruth]:
    """Re-acquire the scene after the rigid motion ``t`` (reference -> new volume).

    Uses ``cfg.needle`` for the needle in place during this acquisition.
    """
    cfg.validate()
    _check_inside(cfg, truth, t)
    needle = None
    if cfg.needle is not None:
        needle = tuple(np.asarray(p, dtype=float).reshape(3) for p in cfg.needle)
    truth2 = truth.with_transform(t, needle)
    return _render(cfg, truth2, t, new_seed), truth2


def random_rigid(rng: np.random.Generator, max_rotation_deg: float, max_translation_mm: float,
                 center=(0.0, 0.0, 0.0)) -> RigidTransform:
    """Rotation about ``center`` of uniform random axis and angle in ``[0, max]``,
    then a translation of random direction and length in ``[0, max]``."""
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, max_rotation_deg)
    direction = rng.standard_normal(3)
    direction /= np.linalg.norm(direction)
    trans = direction * rng.uniform(0.0, max_translation_mm)
    rot = from_rotvec(axis * angle)
    c = np.asarray(center, dtype=float)
    return RigidTransform(rot.quaternion, c - apply_point(rot, c) + trans)
