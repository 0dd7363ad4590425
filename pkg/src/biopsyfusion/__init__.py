"""Rigid fusion of 3D TRUS volumes into a reference volume and biopsy-distribution scoring."""
from .biopsy_map import (
    Box,
    NeedleTrajectory,
    TargetLabel,
    build_target_grid,
    evaluate_session,
    map_trajectory,
    segment_cell_length,
)
from .estimators import IconicRegistration, PairedPointRegistration, PointCloudRegistration
from .geometry import RigidTransform, apply_point, compose, from_euler, identity, invert, to_matrix
from .registration import (
    RegistrationConfig,
    RegistrationResult,
    register_iconic,
    register_paired_points,
    register_point_clouds,
)
from .similarity import SimilarityKind, ncc, nmi, ssd
from .validation import FiducialPair, fiducial_error, trajectory_angle
from .volume import Volume3D, resample, sample_trilinear

__version__ = "0.1.0"

__all__ = [
    "Box",
    "NeedleTrajectory",
    "TargetLabel",
    "build_target_grid",
    "evaluate_session",
    "map_trajectory",
    "segment_cell_length",
    "IconicRegistration",
    "PairedPointRegistration",
    "PointCloudRegistration",
    "RigidTransform",
    "apply_point",
    "compose",
    "from_euler",
    "identity",
    "invert",
    "to_matrix",
    "RegistrationConfig",
    "RegistrationResult",
    "register_iconic",
    "register_paired_points",
    "register_point_clouds",
    "SimilarityKind",
    "ncc",
    "nmi",
    "ssd",
    "FiducialPair",
    "fiducial_error",
    "trajectory_angle",
    "Volume3D",
    "resample",
    "sample_trilinear",
]
