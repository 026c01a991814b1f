import gzip
import struct

import numpy as np
import pytest

from cortexforge.errors import FileFormatError
from cortexforge.nifti import read_nifti, write_nifti
from cortexforge.volume import GridGeometry, LabelVolume, ScalarVolume


@pytest.fixture
def scalar_vol(rng):
    affine = np.eye(4)
    affine[:3, 3] = (-12.0, 3.5, 7.0)
    geo = GridGeometry((9, 11, 13), (1.0, 1.0, 1.0), affine)
    return ScalarVolume(geo, rng.normal(size=(9, 11, 13)))


def test_scalar_round_trip(tmp_path, scalar_vol):
    path = tmp_path / "v.nii"
    write_nifti(path, scalar_vol)
    back = read_nifti(path)
    assert back.geometry.dims == scalar_vol.geometry.dims
    assert np.allclose(back.geometry.origin_affine, scalar_vol.geometry.origin_affine, atol=1e-6)
    assert np.array_equal(back.data, scalar_vol.data.astype(np.float32).astype(np.float64))


def test_label_round_trip_uint8_and_int16(tmp_path):
    geo = GridGeometry.isotropic((5, 5, 5))
    small = LabelVolume(geo, np.arange(125, dtype=np.int32).reshape(5, 5, 5) % 4)
    write_nifti(tmp_path / "small.nii", small)
    assert np.array_equal(read_nifti(tmp_path / "small.nii", as_labels=True).data, small.data)

    big = LabelVolume(geo, (np.arange(125, dtype=np.int32) * 13 % 1000).reshape(5, 5, 5))
    write_nifti(tmp_path / "big.nii", big)
    assert np.array_equal(read_nifti(tmp_path / "big.nii", as_labels=True).data, big.data)


def test_gzip_round_trip_and_deterministic_bytes(tmp_path, scalar_vol):
    a = tmp_path / "a.nii.gz"
    b = tmp_path / "b.nii.gz"
    write_nifti(a, scalar_vol)
    write_nifti(b, scalar_vol)
    assert a.read_bytes() == b.read_bytes()
    assert np.array_equal(read_nifti(a).data, scalar_vol.data.astype(np.float32))


def test_data_is_x_fastest_on_disk(tmp_path):
    geo = GridGeometry.isotropic((3, 2, 2))
    vol = ScalarVolume(geo, np.arange(12, dtype=np.float64).reshape(3, 2, 2))
    path = tmp_path / "order.nii"
    write_nifti(path, vol)
    raw = np.frombuffer(path.read_bytes()[352:], dtype="<f4")
    assert np.array_equal(raw, vol.data.ravel(order="F").astype(np.float32))


def test_reject_without_sform_or_qform(tmp_path, scalar_vol):
    path = tmp_path / "v.nii"
    write_nifti(path, scalar_vol)
    blob = bytearray(path.read_bytes())
    struct.pack_into("<2h", blob, 252, 0, 0)  # clear qform_code, sform_code
    bad = tmp_path / "bad.nii"
    bad.write_bytes(bytes(blob))
    with pytest.raises(FileFormatError, match="neither sform nor qform"):
        read_nifti(bad)


def test_qform_fallback(tmp_path, scalar_vol):
    path = tmp_path / "v.nii"
    write_nifti(path, scalar_vol)
    blob = bytearray(path.read_bytes())
    struct.pack_into("<2h", blob, 252, 1, 0)  # qform only
    # identity quaternion with the same offset
    struct.pack_into("<6f", blob, 256, 0.0, 0.0, 0.0, -12.0, 3.5, 7.0)
    qf = tmp_path / "qf.nii"
    qf.write_bytes(bytes(blob))
    back = read_nifti(qf)
    assert np.allclose(back.geometry.origin_affine, scalar_vol.geometry.origin_affine, atol=1e-6)


def test_corrupt_header_rejected(tmp_path):
    bad = tmp_path / "corrupt.nii"
    bad.write_bytes(b"\x00" * 400)
    with pytest.raises(FileFormatError):
        read_nifti(bad)
    short = tmp_path / "short.nii"
    short.write_bytes(b"\x01\x02")
    with pytest.raises(FileFormatError):
        read_nifti(short)


def test_4d_rejected(tmp_path, scalar_vol):
    path = tmp_path / "v.nii"
    write_nifti(path, scalar_vol)
    blob = bytearray(path.read_bytes())
    struct.pack_into("<8h", blob, 40, 4, 9, 11, 13, 2, 1, 1, 1)
    bad = tmp_path / "4d.nii"
    bad.write_bytes(bytes(blob))
    with pytest.raises(FileFormatError, match="4D"):
        read_nifti(bad)


def test_missing_file(tmp_path):
    with pytest.raises(FileFormatError):
        read_nifti(tmp_path / "nope.nii")


def test_scl_slope_applied(tmp_path, scalar_vol):
    path = tmp_path / "v.nii"
    write_nifti(path, scalar_vol)
    blob = bytearray(path.read_bytes())
    struct.pack_into("<2f", blob, 112, 2.0, 1.0)
    scaled = tmp_path / "scaled.nii"
    scaled.write_bytes(bytes(blob))
    back = read_nifti(scaled)
    assert np.allclose(back.data, scalar_vol.data.astype(np.float32) * 2.0 + 1.0)
