"""Rigid 6-DOF transform algebra.

World frame: right-handed, millimetres, x from patient left to right,
y from posterior to anterior, z from apex to base. The probe axis of the
end-fire TRUS probe is the world z axis through x = y = 0.

Euler angles follow the intrinsic Z-Y-X convention, in degrees at the API
boundary: ``R = Rz(rz) @ Ry(ry) @ Rx(rx)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

__all__ = [
    "RigidTransform",
    "identity",
    "compose",
    "invert",
    "apply_point",
    "from_euler",
    "from_rotvec",
    "from_matrix",
    "to_matrix",
    "rotation_about",
    "LEFT_LOBE_TURN",
]


def _unit_quaternion(q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(4)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n == 0.0:
        raise ValueError("quaternion must be finite and non-zero")
    q = q / n
    # canonical sign keeps serialized values stable
    if q[0] < 0:
        q = -q
    return q


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation (unit quaternion ``w, x, y, z``) followed by translation in mm.

    ``apply_point(t, p) = R(q) @ p + translation``.
    """

    quaternion: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = _unit_quaternion(self.quaternion)
        t = np.asarray(self.translation, dtype=float).reshape(3).copy()
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        q.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "quaternion", q)
        object.__setattr__(self, "translation", t)

    @classmethod
    def from_rotation(cls, rotation: Rotation, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        x, y, z, w = rotation.as_quat()
        return cls(np.array([w, x, y, z]), translation)

    @property
    def rotation(self) -> Rotation:
        w, x, y, z = self.quaternion
        return Rotation.from_quat([x, y, z, w])

    @property
    def rotation_matrix(self) -> np.ndarray:
        return self.rotation.as_matrix()

    @property
    def rotvec_deg(self) -> np.ndarray:
        return np.degrees(self.rotation.as_rotvec())

    @property
    def angle_deg(self) -> float:
        """Magnitude of the rotation in degrees, in [0, 180]."""
        return float(np.degrees(2.0 * np.arccos(np.clip(abs(self.quaternion[0]), -1.0, 1.0))))

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)

    def __call__(self, points):
        return apply_point(self, points)

    def __repr__(self):
        q = np.array2string(self.quaternion, precision=6)
        t = np.array2string(self.translation, precision=4)
        return f"RigidTransform(quaternion={q}, translation={t})"


def identity() -> RigidTransform:
    return RigidTransform()


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform applying ``b`` first, then ``a``."""
    rot = a.rotation * b.rotation
    trans = a.rotation.apply(b.translation) + a.translation
    return RigidTransform.from_rotation(rot, trans)


def invert(t: RigidTransform) -> RigidTransform:
    inv = t.rotation.inv()
    return RigidTransform.from_rotation(inv, -inv.apply(t.translation))


def apply_point(t: RigidTransform, points) -> np.ndarray:
    """Apply ``t`` to a point or an ``(..., 3)`` array of points."""
    p = np.asarray(points, dtype=float)
    return p @ t.rotation_matrix.T + t.translation


def from_euler(rx=0.0, ry=0.0, rz=0.0, tx=0.0, ty=0.0, tz=0.0) -> RigidTransform:
    """Build a transform from intrinsic Z-Y-X angles (degrees) and a translation (mm)."""
    rot = Rotation.from_euler("ZYX", [rz, ry, rx], degrees=True)
    return RigidTransform.from_rotation(rot, (tx, ty, tz))


def to_euler(t: RigidTransform) -> tuple[float, float, float, float, float, float]:
    """Inverse of :func:`from_euler`, returning ``(rx, ry, rz, tx, ty, tz)``."""
    rz, ry, rx = t.rotation.as_euler("ZYX", degrees=True)
    return (float(rx), float(ry), float(rz), *map(float, t.translation))


def from_rotvec(rotvec_deg, translation=(0.0, 0.0, 0.0)) -> RigidTransform:
    """Rotation vector in degrees (axis times angle), translation in mm."""
    rot = Rotation.from_rotvec(np.radians(np.asarray(rotvec_deg, dtype=float)))
    return RigidTransform.from_rotation(rot, translation)


def rotation_about(rotvec_deg, center, translation=(0.0, 0.0, 0.0)) -> RigidTransform:
    """``x -> R (x - center) + center + translation``."""
    rot = Rotation.from_rotvec(np.radians(np.asarray(rotvec_deg, dtype=float)))
    c = np.asarray(center, dtype=float)
    return RigidTransform.from_rotation(rot, c - rot.apply(c) + np.asarray(translation, dtype=float))


def to_matrix(t: RigidTransform) -> np.ndarray:
    """4x4 homogeneous matrix; last row is exactly ``(0, 0, 0, 1)``."""
    m = np.eye(4)
    m[:3, :3] = t.rotation_matrix
    m[:3, 3] = t.translation
    return m


def from_matrix(m) -> RigidTransform:
    """Decompose a 4x4 (or 16-element row-major) rigid matrix."""
    m = np.asarray(m, dtype=float)
    if m.size != 16:
        raise ValueError(f"expected 16 matrix entries, got {m.size}")
    m = m.reshape(4, 4)
    if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=1e-12):
        raise ValueError("last matrix row must be (0, 0, 0, 1)")
    r = m[:3, :3]
    if not np.allclose(r.T @ r, np.eye(3), atol=1e-6) or np.linalg.det(r) < 0:
        raise ValueError("upper-left 3x3 block is not a proper rotation")
    return RigidTransform.from_rotation(Rotation.from_matrix(r), m[:3, 3])


# The protocol's contralateral-lobe probe turn: 180 degrees about the probe (z) axis.
LEFT_LOBE_TURN = from_euler(rz=180.0)
