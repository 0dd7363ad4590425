"""Estimator-style wrappers so the fusion methods compose with scikit-learn tooling.

``fit(fixed, moving)`` learns the fixed -> moving rigid transform and stores
it as ``transform_``; ``transform`` then applies what was learned.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._checks import check_point_pairs, check_points, check_volume
from .geometry import apply_point, identity, invert
from .registration import (
    RegistrationConfig,
    fit_rigid,
    register_iconic,
    register_point_clouds,
)
from .similarity import SimilarityKind
from .volume import resample

__all__ = ["IconicRegistration", "PairedPointRegistration", "PointCloudRegistration"]


class IconicRegistration(BaseEstimator):
    """Intensity-driven rigid fusion of a moving volume onto a fixed one.

    Parameters mirror :class:`~biopsyfusion.registration.RegistrationConfig`.

    Attributes
    ----------
    result_ : RegistrationResult
    transform_ : RigidTransform
        Fixed -> moving world transform.
    mask_ : ndarray of bool
        Validity mask of the last :meth:`transform` call.
    """

    def __init__(self, metric="ncc", bins=32, pyramid_levels=3, max_iterations=400,
                 tolerance=0.1, initial_step=4.0, success_threshold=0.5, min_overlap=0.25,
                 max_samples=2**17, smoothing=1.0, initial_transform=None, left_lobe_mode=False):
        self.metric = metric
        self.bins = bins
        self.pyramid_levels = pyramid_levels
        self.max_iterations = max_iterations
        self.tolerance = tolerance
        self.initial_step = initial_step
        self.success_threshold = success_threshold
        self.min_overlap = min_overlap
        self.max_samples = max_samples
        self.smoothing = smoothing
        self.initial_transform = initial_transform
        self.left_lobe_mode = left_lobe_mode

    def _config(self) -> RegistrationConfig:
        return RegistrationConfig(
            metric=SimilarityKind(self.metric, self.bins),
            pyramid_levels=self.pyramid_levels,
            max_iterations=self.max_iterations,
            tolerance=self.tolerance,
            initial_step=self.initial_step,
            success_threshold=self.success_threshold,
            min_overlap=self.min_overlap,
            max_samples=self.max_samples,
            smoothing=self.smoothing,
            initial_transform=self.initial_transform or identity(),
            left_lobe_mode=self.left_lobe_mode,
        )

    def fit(self, fixed, moving):
        fixed = check_volume(fixed, "fixed")
        moving = check_volume(moving, "moving")
        self.result_ = register_iconic(fixed, moving, self._config())
        self.transform_ = self.result_.transform
        self.fixed_ = fixed
        return self

    def transform(self, moving):
        """Resample ``moving`` onto the fixed grid."""
        check_is_fitted(self, "transform_")
        out, self.mask_ = resample(check_volume(moving, "moving"), self.transform_, self.fixed_)
        return out

    def fit_transform(self, fixed, moving):
        return self.fit(fixed, moving).transform(moving)

    def score(self, fixed=None, moving=None):
        """NCC of the fitted alignment (higher is better)."""
        check_is_fitted(self, "result_")
        return self.result_.final_ncc


class PairedPointRegistration(BaseEstimator):
    """Least-squares rigid fit from homologous landmark pairs (3 or more)."""

    def fit(self, X, Y):
        X, Y = check_point_pairs(X, Y)
        self.transform_ = fit_rigid(X, Y)
        res = Y - apply_point(self.transform_, X)
        self.rms_ = float(np.sqrt(np.mean(np.sum(res**2, axis=1))))
        return self

    def transform(self, X):
        check_is_fitted(self, "transform_")
        return apply_point(self.transform_, check_points(X))

    def inverse_transform(self, Y):
        check_is_fitted(self, "transform_")
        return apply_point(invert(self.transform_), check_points(Y))

    def score(self, X, Y):
        """Negative RMS residual (mm)."""
        X, Y = check_point_pairs(X, Y, min_points=1)
        d = Y - self.transform(X)
        return -float(np.sqrt(np.mean(np.sum(d**2, axis=1))))


class PointCloudRegistration(BaseEstimator):
    """Iterative closest point alignment of unpaired clouds."""

    def __init__(self, init=None, max_iter=100, tol=1e-6):
        self.init = init
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, Y):
        X = check_points(X, name="fixed cloud")
        Y = check_points(Y, name="moving cloud")
        self.result_ = register_point_clouds(X, Y, self.init, self.max_iter, self.tol)
        self.transform_ = self.result_.transform
        return self

    def transform(self, X):
        check_is_fitted(self, "transform_")
        return apply_point(self.transform_, check_points(X))

    def inverse_transform(self, Y):
        check_is_fitted(self, "transform_")
        return apply_point(invert(self.transform_), check_points(Y))

    def score(self, X=None, Y=None):
        """Negative mean closest-point distance (mm) of the fit."""
        check_is_fitted(self, "result_")
        return -self.result_.final_score
