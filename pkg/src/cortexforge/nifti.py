"""Minimal NIfTI-1 single-file (.nii / .nii.gz) reader and writer.

Supports exactly what the volume wire format requires: 3D grids, datatypes
uint8 / int16 / float32 (float64 additionally accepted on read), pixdim
spacing, and the sform affine (qform used as fallback; files carrying neither
are rejected). Written files always carry an sform and magic ``n+1``.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .errors import FileFormatError
from .volume import GridGeometry, LabelVolume, ScalarVolume, Volume

_HDR_SIZE = 348
_VOX_OFFSET = 352.0

_DT_UINT8 = 2
_DT_INT16 = 4
_DT_INT32 = 8
_DT_FLOAT32 = 16
_DT_FLOAT64 = 64

_DTYPES = {
    _DT_UINT8: np.dtype(np.uint8),
    _DT_INT16: np.dtype(np.int16),
    _DT_INT32: np.dtype(np.int32),
    _DT_FLOAT32: np.dtype(np.float32),
    _DT_FLOAT64: np.dtype(np.float64),
}


def _read_bytes(path: Path) -> bytes:
    blob = path.read_bytes()
    if blob[:2] == b"\x1f\x8b":
        blob = gzip.decompress(blob)
    return blob


def _quaternion_affine(hdr: dict) -> np.ndarray:
    b, c, d = hdr["quatern_b"], hdr["quatern_c"], hdr["quatern_d"]
    a2 = 1.0 - (b * b + c * c + d * d)
    a = np.sqrt(max(a2, 0.0))
    rot = np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * b * c - 2 * a * d, 2 * b * d + 2 * a * c],
            [2 * b * c + 2 * a * d, a * a + c * c - b * b - d * d, 2 * c * d - 2 * a * b],
            [2 * b * d - 2 * a * c, 2 * c * d + 2 * a * b, a * a + d * d - b * b - c * c],
        ]
    )
    qfac = -1.0 if hdr["pixdim"][0] < 0 else 1.0
    scale = np.array([hdr["pixdim"][1], hdr["pixdim"][2], qfac * hdr["pixdim"][3]])
    affine = np.eye(4)
    affine[:3, :3] = rot * scale
    affine[:3, 3] = (hdr["qoffset_x"], hdr["qoffset_y"], hdr["qoffset_z"])
    return affine


def _parse_header(blob: bytes) -> dict:
    if len(blob) < _HDR_SIZE:
        raise FileFormatError("file too short to hold a NIfTI-1 header")
    endian = "<"
    (sizeof_hdr,) = struct.unpack_from("<i", blob, 0)
    if sizeof_hdr != _HDR_SIZE:
        endian = ">"
        (sizeof_hdr,) = struct.unpack_from(">i", blob, 0)
        if sizeof_hdr != _HDR_SIZE:
            raise FileFormatError("bad sizeof_hdr; not a NIfTI-1 file")
    magic = blob[344:348]
    if magic not in (b"n+1\x00",):
        raise FileFormatError(f"unsupported magic {magic!r}; only single-file n+1 is handled")

    dim = struct.unpack_from(f"{endian}8h", blob, 40)
    datatype, bitpix = struct.unpack_from(f"{endian}2h", blob, 70)
    pixdim = struct.unpack_from(f"{endian}8f", blob, 76)
    (vox_offset,) = struct.unpack_from(f"{endian}f", blob, 108)
    scl_slope, scl_inter = struct.unpack_from(f"{endian}2f", blob, 112)
    qform_code, sform_code = struct.unpack_from(f"{endian}2h", blob, 252)
    quatern = struct.unpack_from(f"{endian}6f", blob, 256)
    srow_x = struct.unpack_from(f"{endian}4f", blob, 280)
    srow_y = struct.unpack_from(f"{endian}4f", blob, 296)
    srow_z = struct.unpack_from(f"{endian}4f", blob, 312)

    return {
        "endian": endian,
        "dim": dim,
        "datatype": datatype,
        "bitpix": bitpix,
        "pixdim": pixdim,
        "vox_offset": vox_offset,
        "scl_slope": scl_slope,
        "scl_inter": scl_inter,
        "qform_code": qform_code,
        "sform_code": sform_code,
        "quatern_b": quatern[0],
        "quatern_c": quatern[1],
        "quatern_d": quatern[2],
        "qoffset_x": quatern[3],
        "qoffset_y": quatern[4],
        "qoffset_z": quatern[5],
        "srow": np.array([srow_x, srow_y, srow_z]),
    }


def read_nifti(path, as_labels: bool = False) -> Volume:
    """Read a single-file .nii or .nii.gz volume.

    With ``as_labels=True`` an integer-typed file is returned as a
    LabelVolume; scalars are returned as float64 ScalarVolumes with
    slope/intercept scaling applied.
    """
    path = Path(path)
    try:
        blob = _read_bytes(path)
    except OSError as exc:
        raise FileFormatError(f"cannot read {path}: {exc}") from exc
    hdr = _parse_header(blob)

    ndim = hdr["dim"][0]
    if not 1 <= ndim <= 7:
        raise FileFormatError(f"invalid dim[0]={ndim}")
    shape = [max(1, hdr["dim"][i]) for i in range(1, ndim + 1)]
    if any(s != 1 for s in shape[3:]):
        raise FileFormatError("4D/multi-frame volumes are not supported")
    shape = (shape + [1, 1, 1])[:3]

    if hdr["datatype"] not in _DTYPES:
        raise FileFormatError(f"unsupported datatype code {hdr['datatype']}")
    dtype = _DTYPES[hdr["datatype"]].newbyteorder(hdr["endian"])

    if hdr["sform_code"] > 0:
        affine = np.eye(4)
        affine[:3, :] = hdr["srow"]
    elif hdr["qform_code"] > 0:
        affine = _quaternion_affine(hdr)
    else:
        raise FileFormatError("file has neither sform nor qform; orientation unknown")

    spacing = tuple(abs(float(hdr["pixdim"][i])) for i in (1, 2, 3))
    if any(s <= 0 for s in spacing):
        spacing = tuple(float(np.linalg.norm(affine[:3, i])) for i in range(3))

    offset = int(hdr["vox_offset"])
    count = int(np.prod(shape))
    raw = np.frombuffer(blob, dtype=dtype, count=count, offset=offset)
    data = raw.reshape(shape, order="F")

    geometry = GridGeometry(tuple(shape), spacing, affine)
    if as_labels:
        if not np.issubdtype(data.dtype, np.integer):
            raise FileFormatError("label volume requested but file holds floating point data")
        return LabelVolume(geometry, data.astype(np.int32))

    values = data.astype(np.float64)
    slope, inter = hdr["scl_slope"], hdr["scl_inter"]
    if slope not in (0.0, 1.0) or inter != 0.0:
        values = values * (slope if slope != 0.0 else 1.0) + inter
    return ScalarVolume(geometry, values)


def write_nifti(path, vol: Volume) -> None:
    """Write a volume as single-file NIfTI-1 with an sform affine.

    Scalars are stored as float32, labels as int16 (uint8 when they fit).
    ``.gz`` suffixed paths are gzip-compressed with a fixed mtime so repeated
    writes are byte-identical.
    """
    path = Path(path)
    if isinstance(vol, LabelVolume):
        if vol.data.max(initial=0) < 256:
            payload = vol.data.astype(np.uint8)
            datatype, bitpix = _DT_UINT8, 8
        else:
            payload = vol.data.astype(np.int16)
            datatype, bitpix = _DT_INT16, 16
    else:
        payload = vol.data.astype(np.float32)
        datatype, bitpix = _DT_FLOAT32, 32

    geometry = vol.geometry
    hdr = bytearray(_HDR_SIZE)
    struct.pack_into("<i", hdr, 0, _HDR_SIZE)
    dim = (3, *geometry.dims, 1, 1, 1, 1)
    struct.pack_into("<8h", hdr, 40, *dim)
    struct.pack_into("<2h", hdr, 70, datatype, bitpix)
    pixdim = (1.0, *geometry.spacing, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<8f", hdr, 76, *pixdim)
    struct.pack_into("<f", hdr, 108, _VOX_OFFSET)
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)  # scl_slope, scl_inter
    struct.pack_into("<2h", hdr, 252, 0, 1)  # qform_code=0, sform_code=1
    affine = geometry.origin_affine
    struct.pack_into("<4f", hdr, 280, *affine[0, :])
    struct.pack_into("<4f", hdr, 296, *affine[1, :])
    struct.pack_into("<4f", hdr, 312, *affine[2, :])
    hdr[344:348] = b"n+1\x00"

    body = bytes(hdr) + b"\x00" * 4 + payload.ravel(order="F").tobytes()
    if path.suffix == ".gz":
        import io

        buf = io.BytesIO()
        with gzip.GzipFile(fileobj=buf, mode="wb", mtime=0) as fh:
            fh.write(body)
        path.write_bytes(buf.getvalue())
    else:
        path.write_bytes(body)
