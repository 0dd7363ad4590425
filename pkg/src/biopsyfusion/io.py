"""BVOL1 volume files and JSON encodings of transforms and results.

BVOL1 layout: five ASCII header lines terminated by ``\\n``::

    BVOL1
    dims X Y Z
    spacing SX SY SZ
    origin OX OY OZ
    dtype f32le

followed directly by ``4*X*Y*Z`` bytes of little-endian float32, x fastest,
z slowest.
"""
from __future__ import annotations

import json
import math
import os
from pathlib import Path

import numpy as np

from .exceptions import DimensionMismatch, FormatError
from .geometry import RigidTransform, from_matrix, to_matrix
from .registration import RegistrationResult
from .volume import Volume3D

__all__ = [
    "read_volume",
    "write_volume",
    "transform_to_list",
    "transform_from_list",
    "result_to_dict",
    "result_from_dict",
    "write_json",
    "read_json",
]

MAGIC = "BVOL1"
_HEADER_LINES = 5


def _fmt(x: float) -> str:
    return repr(float(x))


def write_volume(v: Volume3D, path) -> None:
    header = (
        f"{MAGIC}\n"
        f"dims {v.dims[0]} {v.dims[1]} {v.dims[2]}\n"
        f"spacing {' '.join(map(_fmt, v.spacing))}\n"
        f"origin {' '.join(map(_fmt, v.origin))}\n"
        "dtype f32le\n"
    )
    payload = np.asarray(v.data, dtype="<f4").ravel(order="F").tobytes()
    tmp = Path(f"{path}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(payload)
    os.replace(tmp, path)


def _parse_floats(line: str, key: str, offset: int, n: int = 3) -> list[float]:
    parts = line.split()
    if len(parts) != n + 1 or parts[0] != key:
        raise FormatError(f"expected '{key}' followed by {n} numbers, got {line!r}", offset)
    try:
        values = [float(p) for p in parts[1:]]
    except ValueError:
        raise FormatError(f"non-numeric value in {line!r}", offset) from None
    if not all(math.isfinite(x) for x in values):
        raise FormatError(f"non-finite value in {line!r}", offset)
    return values


def read_volume(path) -> Volume3D:
    raw = Path(path).read_bytes()
    lines = []
    pos = 0
    offsets = []
    for _ in range(_HEADER_LINES):
        end = raw.find(b"\n", pos)
        if end < 0:
            raise FormatError("truncated header", pos)
        try:
            lines.append(raw[pos:end].decode("ascii"))
        except UnicodeDecodeError:
            raise FormatError("header is not ASCII", pos) from None
        offsets.append(pos)
        pos = end + 1
    if lines[0] != MAGIC:
        raise FormatError(f"bad magic {lines[0][:16]!r}, expected {MAGIC!r}", 0)

    parts = lines[1].split()
    if len(parts) != 4 or parts[0] != "dims":
        raise FormatError(f"expected 'dims X Y Z', got {lines[1]!r}", offsets[1])
    try:
        dims = tuple(int(p) for p in parts[1:])
    except ValueError:
        raise FormatError(f"dims must be integers, got {lines[1]!r}", offsets[1]) from None
    if min(dims) < 2:
        raise DimensionMismatch(f"every dimension must be >= 2, got {dims}", offsets[1])

    spacing = _parse_floats(lines[2], "spacing", offsets[2])
    origin = _parse_floats(lines[3], "origin", offsets[3])
    if min(spacing) <= 0:
        raise FormatError(f"spacing must be positive, got {spacing}", offsets[2])
    if lines[4].split() != ["dtype", "f32le"]:
        raise FormatError(f"unsupported dtype line {lines[4]!r}", offsets[4])

    expected = 4 * dims[0] * dims[1] * dims[2]
    actual = len(raw) - pos
    if actual != expected:
        raise FormatError(f"payload holds {actual} bytes, expected {expected}", pos)
    data = np.frombuffer(raw, dtype="<f4", offset=pos).reshape(dims, order="F")
    if not np.all(np.isfinite(data)):
        raise FormatError("payload contains non-finite intensities", pos)
    return Volume3D(data.astype(np.float32), tuple(spacing), tuple(origin))


def transform_to_list(t: RigidTransform) -> list[float]:
    """16 row-major matrix entries."""
    return [float(x) for x in to_matrix(t).ravel()]


def transform_from_list(values) -> RigidTransform:
    return from_matrix(values)


def result_to_dict(r: RegistrationResult) -> dict:
    return {
        "matrix": transform_to_list(r.transform),
        "score": r.final_score,
        "ncc": r.final_ncc,
        "converged": r.converged,
        "succeeded": r.succeeded,
        "overlap": r.overlap,
        "elapsed_s": r.elapsed,
        "iterations": r.iterations,
        "evaluations": r.evaluations,
        "warnings": list(r.warnings),
    }


def result_from_dict(d: dict) -> RegistrationResult:
    return RegistrationResult(
        transform=transform_from_list(d["matrix"]),
        final_score=float(d["score"]),
        converged=bool(d["converged"]),
        succeeded=bool(d["succeeded"]),
        elapsed=float(d.get("elapsed_s", 0.0)),
        iterations=int(d.get("iterations", 0)),
        evaluations=int(d.get("evaluations", 0)),
        overlap=float(d.get("overlap", 1.0)),
        final_ncc=float(d.get("ncc", math.nan)),
        warnings=tuple(d.get("warnings", ())),
    )


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, allow_nan=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())
