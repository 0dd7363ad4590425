"""Rigid fusion: intensity-driven (iconic), paired homologous points, point clouds.

Every routine returns the transform mapping the *fixed* (reference, R0)
frame into the *moving* frame, so that ``resample(moving, t, fixed)`` lays
the moving image over the fixed one.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.optimize import minimize
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from . import _kernels
from .exceptions import DegenerateConfiguration, DegenerateImage, EmptyInput, EmptyOverlap
from .geometry import LEFT_LOBE_TURN, RigidTransform, apply_point, compose, identity, rotation_about
from .similarity import SimilarityKind, ncc, nmi, ssd
from .volume import Volume3D, downsample, index_affine

logger = logging.getLogger(__name__)

__all__ = [
    "RegistrationConfig",
    "RegistrationResult",
    "register_iconic",
    "fit_rigid",
    "register_paired_points",
    "register_point_clouds",
    "MIN_CLOUD_POINTS",
]

#: Below this many points a cloud rarely constrains the fit well.
MIN_CLOUD_POINTS = 100


@dataclass(frozen=True)
class RegistrationConfig:
    """Settings for :func:`register_iconic`.

    ``tolerance`` is the simplex size (mm and degrees alike) at which the
    finest level stops; coarser levels use ``tolerance * 2**level``.
    ``success_threshold`` is the minimal NCC of the final alignment,
    whatever metric drove the search. ``smoothing`` is the Gaussian sigma,
    in voxels, applied to both volumes before the pyramid is built; it damps
    speckle that the two acquisitions do not share.
    """

    metric: SimilarityKind = field(default_factory=SimilarityKind)
    pyramid_levels: int = 3
    max_iterations: int = 400
    tolerance: float = 0.1
    initial_step: float = 4.0
    success_threshold: float = 0.5
    min_overlap: float = 0.25
    max_samples: int = 2**17
    smoothing: float = 1.0
    initial_transform: RigidTransform = field(default_factory=identity)
    left_lobe_mode: bool = False

    def __post_init__(self):
        if isinstance(self.metric, str):
            object.__setattr__(self, "metric", SimilarityKind(self.metric))
        if not 1 <= self.pyramid_levels <= 6:
            raise ValueError(f"pyramid_levels must be in [1, 6], got {self.pyramid_levels}")
        if self.tolerance <= 0 or self.initial_step <= 0:
            raise ValueError("tolerance and initial_step must be positive")
        if self.max_iterations < 1 or self.max_samples < 64:
            raise ValueError("max_iterations must be >= 1 and max_samples >= 64")
        if self.smoothing < 0:
            raise ValueError("smoothing must be >= 0")
        if not 0.0 < self.min_overlap <= 1.0:
            raise ValueError("min_overlap must be in (0, 1]")


@dataclass(frozen=True)
class RegistrationResult:
    transform: RigidTransform
    final_score: float
    converged: bool
    succeeded: bool
    elapsed: float
    iterations: int
    evaluations: int = 0
    overlap: float = 1.0
    final_ncc: float = math.nan
    level_scores: tuple = ()
    warnings: tuple = ()

    def __post_init__(self):
        if self.succeeded and not self.converged:
            raise ValueError("a registration cannot succeed without converging")
        if self.elapsed < 0:
            raise ValueError("elapsed must be non-negative")


class _LevelCost:
    """Metric of one pyramid level as a function of the 6 search parameters."""

    def __init__(self, fixed: Volume3D, moving: Volume3D, metric: SimilarityKind,
                 init: RigidTransform, center, max_samples: int):
        self.fixed = fixed
        self.moving = moving
        self.metric = metric
        self.init = init
        self.center = np.asarray(center, dtype=float)
        dims = np.array(fixed.dims)
        s = 1
        while np.prod(-(-dims // s)) > max_samples:
            s += 1
        self.stride = np.full(3, s, dtype=np.int64)
        self.shape = (-(-dims // s)).astype(np.int64)
        self.fvals = fixed.data[::s, ::s, ::s].ravel().astype(np.float64)
        self.n = self.fvals.size
        self.min_inside = max(8, int(0.01 * self.n))
        self.scale = 1.0
        self.evaluations = 0

    def transform(self, params) -> RigidTransform:
        return compose(self.init, rotation_about(params[:3], self.center, params[3:]))

    def sample(self, t: RigidTransform):
        a, b = index_affine(self.fixed, self.moving, t)
        return _kernels.sample_affine_grid(self.moving.data, a, b, self.shape, self.stride)

    def score(self, t: RigidTransform, kind: SimilarityKind | None = None):
        """``(score, overlap fraction)``; score is NaN when undefined."""
        kind = kind or self.metric
        values, inside = self.sample(t)
        n_in = int(np.count_nonzero(inside))
        if n_in < self.min_inside:
            return math.nan, n_in / self.n
        f, m = self.fvals[inside], values[inside]
        try:
            if kind.name == "ncc":
                s = ncc(f, m)
            elif kind.name == "nmi":
                s = nmi(f, m, bins=kind.bins)
            else:
                s = ssd(f, m)
        except DegenerateImage:
            s = math.nan
        return s, n_in / self.n

    def __call__(self, params) -> float:
        self.evaluations += 1
        s, _ = self.score(self.transform(params))
        if math.isnan(s):
            return 1e6
        if self.metric.higher_is_better:
            return -s
        return s / self.scale


def _pyramid(v: Volume3D, levels: int, smoothing: float) -> list[Volume3D]:
    if smoothing > 0:
        v = v.with_data(gaussian_filter(v.data, smoothing, mode="nearest"))
    out = [v]
    for _ in range(levels - 1):
        out.append(downsample(out[-1]))
    return out


def _simplex(x0: np.ndarray, step: float) -> np.ndarray:
    return np.vstack([x0, x0 + step * np.eye(x0.size)])


def register_iconic(fixed: Volume3D, moving: Volume3D,
                    cfg: RegistrationConfig | None = None) -> RegistrationResult:
    """Coarse-to-fine Nelder-Mead search for the rigid transform maximizing similarity.

    The search is over a rotation vector (degrees) about the fixed volume
    centre and a translation (mm), composed after the initial transform.
    Each level runs the simplex once, then restarts it once from the best
    point with half the step. Poor image quality shows up as
    ``succeeded=False``; only an initialization without any overlap raises.
    """
    cfg = cfg or RegistrationConfig()
    start = time.perf_counter()
    init = cfg.initial_transform
    if cfg.left_lobe_mode:
        init = compose(init, LEFT_LOBE_TURN)

    levels = min(cfg.pyramid_levels, _max_levels(fixed, moving))
    fixed_pyr = _pyramid(fixed, levels, cfg.smoothing)
    moving_pyr = _pyramid(moving, levels, cfg.smoothing)
    center = fixed.center
    params = np.zeros(6)
    nit = nfev = 0
    level_scores = []
    converged = False
    cost = None

    for level in reversed(range(levels)):
        cost = _LevelCost(fixed_pyr[level], moving_pyr[level], cfg.metric, init, center, cfg.max_samples)
        s0, overlap0 = cost.score(cost.transform(params))
        if overlap0 == 0.0:
            raise EmptyOverlap("initial transform leaves no overlap between the volumes")
        if not cfg.metric.higher_is_better and s0 > 0 and not math.isnan(s0):
            cost.scale = s0
        step = cfg.initial_step * 2.0 ** (level - (levels - 1))
        xatol = cfg.tolerance * 2.0**level
        best = params
        for restart in range(2):
            res = minimize(
                cost, best, method="Nelder-Mead",
                options={
                    "initial_simplex": _simplex(best, step / (2.0**restart)),
                    "xatol": xatol,
                    "fatol": 1e-4,
                    "maxiter": cfg.max_iterations,
                },
            )
            nit += int(res.nit)
            best = res.x
            converged = bool(res.success)
        params = best
        s1, _ = cost.score(cost.transform(params))
        level_scores.append((level, s0, s1))
        nfev += cost.evaluations

    transform = cost.transform(params)
    final_score, overlap = cost.score(transform)
    if cfg.metric.name == "ncc":
        final_ncc = final_score
    else:
        final_ncc, _ = cost.score(transform, SimilarityKind("ncc"))
    succeeded = (
        converged
        and not math.isnan(final_ncc)
        and final_ncc >= cfg.success_threshold
        and overlap >= cfg.min_overlap
    )
    return RegistrationResult(
        transform=transform,
        final_score=float(final_score),
        converged=converged,
        succeeded=succeeded,
        elapsed=time.perf_counter() - start,
        iterations=nit,
        evaluations=nfev,
        overlap=float(overlap),
        final_ncc=float(final_ncc),
        level_scores=tuple(level_scores),
    )


def _max_levels(*volumes: Volume3D) -> int:
    n = min(min(v.dims) for v in volumes)
    levels = 1
    while n // 2 >= 8 and levels < 6:
        n //= 2
        levels += 1
    return levels


def fit_rigid(fixed_points, moving_points) -> RigidTransform:
    """Closed-form least-squares rigid fit minimizing ``sum |moving - T(fixed)|^2``.

    SVD of the cross-covariance of the centred point sets, with the usual
    determinant correction against reflections.
    """
    f = np.asarray(fixed_points, dtype=float)
    m = np.asarray(moving_points, dtype=float)
    if f.ndim != 2 or f.shape[1] != 3 or f.shape != m.shape:
        raise ValueError(f"expected two (n, 3) arrays of equal shape, got {f.shape} and {m.shape}")
    if f.shape[0] < 3:
        raise DegenerateConfiguration(f"need at least 3 point pairs, got {f.shape[0]}")
    cf = f.mean(axis=0)
    cm = m.mean(axis=0)
    fc = f - cf
    mc = m - cm
    sv = np.linalg.svd(fc, compute_uv=False)
    if sv[0] == 0.0 or sv[1] <= 1e-9 * sv[0]:
        raise DegenerateConfiguration("fixed points are coincident or collinear")
    u, _, vt = np.linalg.svd(fc.T @ mc)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform.from_rotation(Rotation.from_matrix(r), cm - r @ cf)


def register_paired_points(pairs) -> RigidTransform:
    """Rigid fit from ``(fixed_point, moving_point)`` homologous pairs."""
    pairs = list(pairs)
    if len(pairs) < 3:
        raise DegenerateConfiguration(f"need at least 3 point pairs, got {len(pairs)}")
    f = np.array([p[0] for p in pairs], dtype=float)
    m = np.array([p[1] for p in pairs], dtype=float)
    return fit_rigid(f, m)


def register_point_clouds(fixed_cloud, moving_cloud, init: RigidTransform | None = None,
                          max_iters: int = 100, tolerance: float = 1e-6) -> RegistrationResult:
    """Iterative closest point alignment of two unpaired clouds.

    ``final_score`` is the mean distance (mm) from each transformed fixed
    point to its nearest moving point. Clouds under 100 points get a
    ``"sparse-cloud"`` warning in the result.
    """
    start = time.perf_counter()
    f = np.asarray(fixed_cloud, dtype=float).reshape(-1, 3)
    m = np.asarray(moving_cloud, dtype=float).reshape(-1, 3)
    if f.shape[0] == 0 or m.shape[0] == 0:
        raise EmptyInput("point clouds must be non-empty")
    warnings = ()
    if min(f.shape[0], m.shape[0]) < MIN_CLOUD_POINTS:
        warnings = ("sparse-cloud",)
        logger.warning("point cloud has fewer than %d points; alignment may be unreliable",
                       MIN_CLOUD_POINTS)
    tree = cKDTree(m)
    t = init or identity()
    best_t, best_err = t, math.inf
    prev = math.inf
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        dist, idx = tree.query(apply_point(t, f))
        err = float(dist.mean())
        if err < best_err:
            best_t, best_err = t, err
        if err == 0.0 or abs(prev - err) < tolerance:
            converged = True
            break
        prev = err
        try:
            t = fit_rigid(f, m[idx])
        except DegenerateConfiguration:
            break
    # the fit can jitter at rounding level once aligned; report the best iterate
    t = best_t
    return RegistrationResult(
        transform=t,
        final_score=best_err,
        converged=converged,
        succeeded=converged,
        elapsed=time.perf_counter() - start,
        iterations=it,
        evaluations=it,
        warnings=warnings,
    )
