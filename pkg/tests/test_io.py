import math

import numpy as np
import pytest

from biopsyfusion.exceptions import DimensionMismatch, FormatError
from biopsyfusion.geometry import from_euler, to_matrix
from biopsyfusion.io import (
    read_json,
    read_volume,
    result_from_dict,
    result_to_dict,
    transform_from_list,
    transform_to_list,
    write_json,
    write_volume,
)
from biopsyfusion.registration import RegistrationResult
from biopsyfusion.volume import Volume3D

HEADER = b"BVOL1\ndims 3 2 2\nspacing 1.0 1.0 1.0\norigin 0.0 0.0 0.0\ndtype f32le\n"


def test_round_trip_bit_exact(tmp_path, rng):
    v = Volume3D(rng.normal(size=(16, 16, 16)).astype(np.float32), (0.3, 0.7, 1.1), (-1.5, 2.25, 1e-3))
    p = tmp_path / "v.bvol"
    write_volume(v, p)
    back = read_volume(p)
    assert back.data.tobytes() == v.data.tobytes()
    assert back.spacing == v.spacing and back.origin == v.origin
    assert not (tmp_path / "v.bvol.tmp").exists()


def test_layout_is_x_fastest(tmp_path):
    data = np.arange(12, dtype=np.float32).reshape(3, 2, 2)
    p = tmp_path / "v.bvol"
    write_volume(Volume3D(data, (1, 1, 1), (0, 0, 0)), p)
    raw = p.read_bytes()
    assert raw.startswith(b"BVOL1\ndims 3 2 2\n")
    payload = np.frombuffer(raw[-48:], dtype="<f4")
    # x fastest: data[0,0,0], data[1,0,0], data[2,0,0], data[0,1,0], ...
    np.testing.assert_array_equal(payload[:4], [data[0, 0, 0], data[1, 0, 0], data[2, 0, 0], data[0, 1, 0]])


def test_hand_written_file(tmp_path):
    p = tmp_path / "h.bvol"
    p.write_bytes(HEADER + np.arange(12, dtype="<f4").tobytes())
    v = read_volume(p)
    assert v.dims == (3, 2, 2)
    assert v.data[1, 0, 0] == 1.0 and v.data[0, 1, 0] == 3.0 and v.data[0, 0, 1] == 6.0


def test_truncated_payload(tmp_path):
    p = tmp_path / "t.bvol"
    p.write_bytes(HEADER + bytes(40))
    with pytest.raises(FormatError) as err:
        read_volume(p)
    msg = str(err.value)
    assert "40" in msg and "48" in msg
    assert err.value.offset == len(HEADER)


def test_zero_dimension(tmp_path):
    p = tmp_path / "z.bvol"
    p.write_bytes(b"BVOL1\ndims 0 4 4\nspacing 1 1 1\norigin 0 0 0\ndtype f32le\n")
    with pytest.raises(DimensionMismatch):
        read_volume(p)


@pytest.mark.parametrize("blob", [
    b"BVOL2\n",
    b"BVOL1\ndims 3 2\n",
    b"BVOL1\ndims 3 2 2\nspacing 1 1 x\norigin 0 0 0\ndtype f32le\n",
    b"BVOL1\ndims 3 2 2\nspacing 1 1 1\norigin 0 0 0\ndtype f64le\n",
    b"BVOL1\ndims 3 2 2\nspacing 1 -1 1\norigin 0 0 0\ndtype f32le\n",
    b"",
])
def test_malformed_headers(tmp_path, blob):
    p = tmp_path / "bad.bvol"
    p.write_bytes(blob + bytes(48))
    with pytest.raises(FormatError):
        read_volume(p)


def test_offset_in_message(tmp_path):
    p = tmp_path / "bad.bvol"
    head = b"BVOL1\ndims 3 2 2\nspacing 1 1 1\norigin 0 0 0\n"
    p.write_bytes(head + b"dtype f64le\n" + bytes(48))
    with pytest.raises(FormatError, match=f"byte offset {len(head)}"):
        read_volume(p)


def test_transform_list_round_trip(rng):
    t = from_euler(*rng.uniform(-90, 90, 6))
    values = transform_to_list(t)
    assert len(values) == 16 and values[12:] == [0.0, 0.0, 0.0, 1.0]
    np.testing.assert_allclose(to_matrix(transform_from_list(values)), to_matrix(t), atol=1e-12)


def test_result_json_round_trip(tmp_path):
    r = RegistrationResult(from_euler(1, 2, 3, 4, 5, 6), 0.91, True, True, 1.25, 42,
                           evaluations=300, overlap=0.8, final_ncc=0.91, warnings=("x",))
    p = tmp_path / "r.json"
    write_json(result_to_dict(r), p)
    back = result_from_dict(read_json(p))
    assert (back.final_score, back.converged, back.succeeded, back.iterations) == (0.91, True, True, 42)
    assert back.elapsed == 1.25 and back.warnings == ("x",)
    np.testing.assert_allclose(to_matrix(back.transform), to_matrix(r.transform), atol=1e-12)


def test_nan_score_survives_json(tmp_path):
    r = RegistrationResult(from_euler(), math.nan, False, False, 0.0, 0)
    p = tmp_path / "r.json"
    write_json(result_to_dict(r), p)
    assert math.isnan(result_from_dict(read_json(p)).final_score)
