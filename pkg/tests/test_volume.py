import numpy as np
import pytest

from biopsyfusion.geometry import from_euler, identity, invert
from biopsyfusion.volume import (
    OUTSIDE,
    Volume3D,
    downsample,
    index_to_world,
    is_outside,
    resample,
    sample_trilinear,
    world_to_index,
)

from helpers import trilinear_reference


def smooth_volume(n=32, spacing=1.0):
    o = -(n - 1) * spacing / 2
    v = Volume3D(np.zeros((n, n, n)), (spacing,) * 3, (o,) * 3)
    x = v.world_grid()
    r2 = np.sum((x / np.array([8.0, 6.0, 7.0])) ** 2, axis=-1)
    data = 100 * np.exp(-r2 / 2) + 20 * np.sin(x[..., 0] / 5.0) + 50
    return v.with_data(data)


def test_index_world_cases(rng):
    v = Volume3D(np.zeros((4, 5, 6)), (0.5, 1.0, 1.0), (1.0, 2.0, 3.0))
    np.testing.assert_array_equal(world_to_index(v, v.origin), [0, 0, 0])
    np.testing.assert_allclose(index_to_world(v, [1, 0, 0]), [1.5, 2.0, 3.0])
    idx = rng.uniform(-10, 10, (1000, 3))
    np.testing.assert_allclose(world_to_index(v, index_to_world(v, idx)), idx, atol=1e-9)


def test_volume_invariants():
    with pytest.raises(ValueError):
        Volume3D(np.zeros((1, 4, 4)))
    with pytest.raises(ValueError):
        Volume3D(np.zeros((4, 4, 4)), spacing=(1, 0, 1))
    with pytest.raises(ValueError):
        Volume3D(np.full((4, 4, 4), np.inf))
    src = np.zeros((3, 3, 3))
    v = Volume3D(src)
    src[0, 0, 0] = 5
    assert v.data[0, 0, 0] == 0
    assert v.data.dtype == np.float32
    with pytest.raises(ValueError):
        v.data[0, 0, 0] = 1


def test_sample_constant_and_centers(rng):
    v = Volume3D(np.full((5, 6, 7), 3.25), (0.7, 1.1, 0.9), (-1.0, 2.0, 0.5))
    p = index_to_world(v, rng.uniform(0, 4, (20, 3)))
    np.testing.assert_allclose(sample_trilinear(v, p), 3.25, rtol=1e-6)
    w = Volume3D(rng.normal(size=(5, 6, 7)), (0.7, 1.1, 0.9), (-1.0, 2.0, 0.5))
    for idx in [(0, 0, 0), (4, 5, 6), (2, 3, 1)]:
        assert sample_trilinear(w, index_to_world(w, idx)) == w.data[idx]


def test_sample_linear_ramp_midpoint():
    i = np.arange(6, dtype=float)
    v = Volume3D(np.broadcast_to(i[:, None, None], (6, 4, 4)))
    assert sample_trilinear(v, [2.5, 1.0, 1.0]) == pytest.approx(2.5)


def test_sample_outside():
    v = Volume3D(np.ones((4, 4, 4)))
    assert is_outside(sample_trilinear(v, [-0.01, 0, 0]))
    assert is_outside(sample_trilinear(v, [3.0, 3.0, 3.001]))
    assert sample_trilinear(v, [3.0, 3.0, 3.0]) == 1.0
    assert np.isnan(OUTSIDE)


def test_sample_matches_reference_oracle(rng):
    data = rng.normal(size=(7, 8, 9))
    v = Volume3D(data, (1.0, 1.0, 1.0))
    idx = rng.uniform(0, [6, 7, 8], (200, 3))
    got = sample_trilinear(v, idx)
    want = [trilinear_reference(v.data, p) for p in idx]
    np.testing.assert_allclose(got, want, atol=1e-9)


def test_sample_continuity(rng):
    v = smooth_volume()
    p = rng.uniform(-10, 10, (200, 3))
    d = rng.normal(size=(200, 3))
    d = 1e-6 * d / np.linalg.norm(d, axis=1, keepdims=True)
    # gradient of the analytic field is below 30 units/mm; float32 storage adds ~1e-5
    diff = np.abs(sample_trilinear(v, p + d) - sample_trilinear(v, p))
    assert np.all(diff < 1e-3 * 30)


def test_resample_identity_bit_exact():
    v = smooth_volume(16, 0.6)
    out, mask = resample(v, identity(), v)
    assert mask.all()
    np.testing.assert_array_equal(out.data, v.data)
    assert out.same_geometry(v)


def test_resample_one_voxel_shift():
    v = smooth_volume(20, 0.5)
    out, mask = resample(v, from_euler(tx=0.5), v)
    np.testing.assert_allclose(out.data[:-1], v.data[1:], rtol=1e-5, atol=1e-4)
    assert not mask[-1].any() and mask[:-1].all()


def test_resample_round_trip_error_small(rng):
    v = smooth_volume(40, 1.0)
    t = from_euler(3, -2, 4, 1.2, -0.7, 0.9)
    fwd, _ = resample(v, t, v)
    back, mask = resample(fwd, invert(t), v)
    # a 5 voxel border absorbs the zero fill of the forward pass
    inner = mask & np.pad(np.ones((30, 30, 30), bool), 5)
    err = np.abs(back.data - v.data)[inner].mean()
    assert err < 0.02 * np.ptp(v.data)


def test_mask_shrinks_with_translation():
    v = smooth_volume(24, 1.0)
    fractions = [resample(v, from_euler(tx=s, ty=s / 2), v)[1].mean() for s in (0, 2, 4, 8)]
    assert fractions[0] == 1.0
    assert all(a > b for a, b in zip(fractions, fractions[1:]))


def test_downsample_geometry():
    v = Volume3D(np.arange(6 * 4 * 5, dtype=float).reshape(6, 4, 5), (1.0, 2.0, 0.5), (0, 0, 0))
    d = downsample(v)
    assert d.dims == (3, 2, 2)
    assert d.spacing == (2.0, 4.0, 1.0)
    assert d.origin == (0.5, 1.0, 0.25)
    assert d.data[0, 0, 0] == pytest.approx(v.data[:2, :2, :2].mean())
    # block centre is preserved in world coordinates
    np.testing.assert_allclose(index_to_world(d, [1, 1, 1]), index_to_world(v, [2.5, 2.5, 2.5]))
