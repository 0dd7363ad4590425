import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biopsyfusion.geometry import (
    RigidTransform,
    apply_point,
    compose,
    from_euler,
    from_matrix,
    identity,
    invert,
    rotation_about,
    to_euler,
    to_matrix,
)

from helpers import euler_zyx_matrix, homogeneous, random_transform, rodrigues

angles = st.floats(-180, 180, allow_nan=False)
tilts = st.floats(-89, 89, allow_nan=False)
shifts = st.floats(-100, 100, allow_nan=False)
transforms = st.builds(from_euler, angles, tilts, angles, shifts, shifts, shifts)
points = st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=3)


def assert_same_action(a, b, rng, tol=1e-9):
    p = rng.uniform(-100, 100, (50, 3))
    np.testing.assert_allclose(apply_point(a, p), apply_point(b, p), atol=tol, rtol=0)


def test_compose_with_inverse_is_identity(rng):
    t = random_transform(rng)
    assert_same_action(compose(t, invert(t)), identity(), rng)
    assert_same_action(compose(invert(t), t), identity(), rng)


def test_compose_identity(rng):
    t = random_transform(rng)
    assert_same_action(compose(identity(), t), t, rng)
    assert_same_action(compose(t, identity()), t, rng)


def test_compose_matches_matrix_product(rng):
    for _ in range(20):
        a, b = random_transform(rng), random_transform(rng)
        ma = homogeneous(a.rotation_matrix, a.translation)
        mb = homogeneous(b.rotation_matrix, b.translation)
        np.testing.assert_allclose(to_matrix(compose(a, b)), ma @ mb, atol=1e-9)
        assert_same_action(a @ b, compose(a, b), rng)


def test_invert_cases(rng):
    assert_same_action(invert(identity()), identity(), rng)
    t = invert(from_euler(tx=1, ty=2, tz=3))
    np.testing.assert_allclose(t.translation, [-1, -2, -3], atol=1e-15)
    np.testing.assert_allclose(t.rotation_matrix, np.eye(3), atol=1e-15)
    for _ in range(20):
        t = random_transform(rng)
        np.testing.assert_allclose(to_matrix(invert(t)), np.linalg.inv(to_matrix(t)), atol=1e-9)


def test_apply_point_cases(rng):
    np.testing.assert_allclose(apply_point(from_euler(rz=90), [1, 0, 0]), [0, 1, 0], atol=1e-12)
    p = rng.normal(size=3)
    np.testing.assert_array_equal(apply_point(identity(), p), p)
    for _ in range(20):
        t = random_transform(rng)
        q = rng.uniform(-50, 50, 3)
        expected = (to_matrix(t) @ np.append(q, 1.0))[:3]
        np.testing.assert_allclose(apply_point(t, q), expected, atol=1e-9)


def test_from_euler_identity_and_probe_turn():
    t = from_euler(0, 0, 0, 0, 0, 0)
    np.testing.assert_array_equal(to_matrix(t), np.eye(4))
    np.testing.assert_allclose(apply_point(from_euler(0, 0, 180, 0, 0, 0), [1, 0, 0]), [-1, 0, 0], atol=1e-12)


def test_from_euler_matches_axis_angle_oracle(rng):
    for _ in range(20):
        rx, ry, rz = rng.uniform(-180, 180, 3)
        tr = rng.uniform(-30, 30, 3)
        t = from_euler(rx, ry, rz, *tr)
        p = rng.uniform(-50, 50, (100, 3))
        expected = p @ euler_zyx_matrix(rx, ry, rz).T + tr
        np.testing.assert_allclose(apply_point(t, p), expected, atol=1e-9)


def test_euler_matrix_round_trip(rng):
    for _ in range(20):
        t = random_transform(rng)
        back = from_matrix(to_matrix(t).ravel())
        assert_same_action(back, t, rng)
        assert_same_action(from_euler(*to_euler(t)), t, rng)


def test_matrix_last_row_exact(rng):
    m = to_matrix(random_transform(rng))
    assert m[3].tolist() == [0.0, 0.0, 0.0, 1.0]


def test_from_matrix_rejects_non_rigid():
    m = np.eye(4)
    m[0, 0] = 2.0
    with pytest.raises(ValueError):
        from_matrix(m)
    m = np.eye(4)
    m[0, 0] = -1.0  # reflection
    with pytest.raises(ValueError):
        from_matrix(m)


def test_rotation_about_fixes_center():
    c = np.array([3.0, -4.0, 5.0])
    t = rotation_about([0, 0, 30], c)
    np.testing.assert_allclose(apply_point(t, c), c, atol=1e-12)
    np.testing.assert_allclose(t.rotation_matrix, rodrigues([0, 0, 1], 30), atol=1e-12)


@given(transforms, transforms, transforms)
@settings(max_examples=50, deadline=None)
def test_associativity(a, b, c):
    p = np.array([[1.0, 2.0, 3.0], [-40.0, 7.0, 60.0]])
    left = apply_point(compose(compose(a, b), c), p)
    right = apply_point(compose(a, compose(b, c)), p)
    np.testing.assert_allclose(left, right, atol=1e-9)


@given(transforms, transforms)
@settings(max_examples=50, deadline=None)
def test_compose_action_and_matrix(a, b):
    p = np.array([[10.0, -20.0, 30.0]])
    np.testing.assert_allclose(apply_point(compose(a, b), p), apply_point(a, apply_point(b, p)), atol=1e-9)
    np.testing.assert_allclose(to_matrix(compose(a, b)), to_matrix(a) @ to_matrix(b), atol=1e-9)


@given(transforms)
@settings(max_examples=50, deadline=None)
def test_invariants_after_operations(t):
    for x in (t, invert(t), compose(t, t), compose(t, invert(t))):
        assert abs(np.linalg.norm(x.quaternion) - 1.0) < 1e-9
        r = x.rotation_matrix
        np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-9)
        assert abs(np.linalg.det(r) - 1.0) < 1e-9


@given(transforms, st.lists(points, min_size=2, max_size=10))
@settings(max_examples=50, deadline=None)
def test_isometry(t, pts):
    p = np.array(pts)
    q = apply_point(t, p)
    dp = np.linalg.norm(p[:, None] - p[None], axis=-1)
    dq = np.linalg.norm(q[:, None] - q[None], axis=-1)
    np.testing.assert_allclose(dq, dp, atol=1e-9)


def test_constructor_normalizes_and_validates():
    t = RigidTransform([2.0, 0, 0, 0], [1, 2, 3])
    np.testing.assert_array_equal(t.quaternion, [1, 0, 0, 0])
    with pytest.raises(ValueError):
        RigidTransform([0, 0, 0, 0])
    with pytest.raises(ValueError):
        RigidTransform([1, 0, 0, 0], [np.nan, 0, 0])
