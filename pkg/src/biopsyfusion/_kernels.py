"""Compiled trilinear sampling loops.

Both kernels take continuous voxel indices into ``vol`` (shape ``nx, ny, nz``)
and report whether each sample falls inside ``[0, n-1]`` on every axis.
Indices within ``_EDGE`` of the boundary are snapped onto it so that exact
grid-aligned transforms do not lose their border voxels to rounding.
"""
import numpy as np
from numba import njit

_EDGE = 1e-9


@njit(cache=True, inline="always")
def _trilinear(vol, x, y, z):
    nx, ny, nz = vol.shape
    if x < -_EDGE or y < -_EDGE or z < -_EDGE:
        return 0.0, False
    if x > nx - 1 + _EDGE or y > ny - 1 + _EDGE or z > nz - 1 + _EDGE:
        return 0.0, False
    x = min(max(x, 0.0), nx - 1.0)
    y = min(max(y, 0.0), ny - 1.0)
    z = min(max(z, 0.0), nz - 1.0)
    i = min(int(x), nx - 2)
    j = min(int(y), ny - 2)
    k = min(int(z), nz - 2)
    fx = x - i
    fy = y - j
    fz = z - k
    gx = 1.0 - fx
    gy = 1.0 - fy
    gz = 1.0 - fz
    c00 = vol[i, j, k] * gx + vol[i + 1, j, k] * fx
    c10 = vol[i, j + 1, k] * gx + vol[i + 1, j + 1, k] * fx
    c01 = vol[i, j, k + 1] * gx + vol[i + 1, j, k + 1] * fx
    c11 = vol[i, j + 1, k + 1] * gx + vol[i + 1, j + 1, k + 1] * fx
    c0 = c00 * gy + c10 * fy
    c1 = c01 * gy + c11 * fy
    return c0 * gz + c1 * fz, True


@njit(cache=True)
def sample_indices(vol, idx):
    """Sample at an ``(n, 3)`` array of continuous indices."""
    n = idx.shape[0]
    out = np.zeros(n)
    inside = np.zeros(n, dtype=np.bool_)
    for p in range(n):
        v, ok = _trilinear(vol, idx[p, 0], idx[p, 1], idx[p, 2])
        out[p] = v
        inside[p] = ok
    return out, inside


@njit(cache=True)
def sample_affine_grid(vol, A, b, shape, stride):
    """Sample ``vol`` at ``A @ (stride * (i, j, k)) + b`` for every grid index.

    Output is flattened in C order of ``(i, j, k)``.
    """
    sx, sy, sz = shape[0], shape[1], shape[2]
    out = np.zeros(sx * sy * sz)
    inside = np.zeros(sx * sy * sz, dtype=np.bool_)
    p = 0
    for a in range(sx):
        u = a * stride[0]
        for c in range(sy):
            v = c * stride[1]
            bx = A[0, 0] * u + A[0, 1] * v + b[0]
            by = A[1, 0] * u + A[1, 1] * v + b[1]
            bz = A[2, 0] * u + A[2, 1] * v + b[2]
            for d in range(sz):
                w = d * stride[2]
                val, ok = _trilinear(vol, bx + A[0, 2] * w, by + A[1, 2] * w, bz + A[2, 2] * w)
                out[p] = val
                inside[p] = ok
                p += 1
    return out, inside
