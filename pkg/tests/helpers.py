"""Independent reference computations used as test oracles."""
import numpy as np

from biopsyfusion.biopsy_map import ALL_LABELS, NeedleTrajectory, build_target_grid
from biopsyfusion.geometry import RigidTransform, from_euler


def rodrigues(axis, angle_deg):
    """Rotation matrix from the axis-angle formula."""
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    a = np.radians(angle_deg)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(a) * K + (1 - np.cos(a)) * K @ K


def euler_zyx_matrix(rx, ry, rz):
    return rodrigues([0, 0, 1], rz) @ rodrigues([0, 1, 0], ry) @ rodrigues([1, 0, 0], rx)


def homogeneous(r, t):
    m = np.eye(4)
    m[:3, :3] = r
    m[:3, 3] = t
    return m


def random_transform(rng, max_angle=180.0, max_trans=50.0) -> RigidTransform:
    angles = rng.uniform(-max_angle, max_angle, 3)
    angles[1] = np.clip(angles[1], -89.0, 89.0)
    return from_euler(*angles, *rng.uniform(-max_trans, max_trans, 3))


def trilinear_reference(data, idx):
    """Explicit 8-corner weighted sum at one continuous index."""
    x, y, z = idx
    i0, j0, k0 = int(np.floor(x)), int(np.floor(y)), int(np.floor(z))
    total = 0.0
    for di in (0, 1):
        for dj in (0, 1):
            for dk in (0, 1):
                i, j, k = i0 + di, j0 + dj, k0 + dk
                w = (1 - abs(x - i)) * (1 - abs(y - j)) * (1 - abs(z - k))
                if w > 0:
                    total += w * float(data[i, j, k])
    return total


# Clinical series per-row values: n_toward, n_inside, mean length inside (mm), mean % of core inside.
COHORT_TABLE = {
    "BL": (29, 16, 13, 61),
    "BP": (28, 17, 14, 62),
    "ML": (29, 23, 14, 64),
    "MP": (29, 29, 16, 71),
    "AL": (29, 9, 7, 33),
    "AP": (28, 14, 13, 61),
}
COHORT_PCT_INSIDE = {"BL": 55, "BP": 61, "ML": 79, "MP": 100, "AL": 31, "AP": 50}
COHORT_BBOX = (0.0, 40.0, 0.0, 30.0, 0.0, 36.0)


def cohort_trajectories():
    """Needles whose per-row counts, lengths and fractions reproduce the clinical series table.

    Each needle runs along +y (the unsplit axis) through the middle of its
    planned cell. A hit ends ``length`` mm past the y=0 face with a core of
    ``length / fraction`` mm, so exactly ``length`` mm lies in the cell; a
    miss stops short of the box.
    """
    grid = build_target_grid(COHORT_BBOX)
    out = []
    for code, (n_toward, n_inside, length, pct) in COHORT_TABLE.items():
        labels = [lab for lab in ALL_LABELS if lab.code == code]
        core = length / (pct / 100.0)
        for k in range(n_toward):
            label = labels[k % 2]
            c = grid.cell(label).center
            tip_y = float(length) if k < n_inside else -1.0
            tip = np.array([c[0], tip_y, c[2]])
            entry = tip - np.array([0.0, core + 10.0, 0.0])
            out.append(NeedleTrajectory(entry, tip, core, f"{code}-{k}", label))
    return out
