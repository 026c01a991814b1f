"""Triangle mesh file I/O: ASCII OBJ and binary little-endian PLY.

Vertices are written in world mm at double precision so geometry round-trips
exactly. PLY files may carry additional per-vertex scalar properties
(thickness, depth, curvature).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FileFormatError
from .mesh import TriangleMesh

_PLY_DTYPES = {
    "float": "<f4",
    "float32": "<f4",
    "double": "<f8",
    "float64": "<f8",
    "uchar": "<u1",
    "uint8": "<u1",
    "char": "<i1",
    "int8": "<i1",
    "short": "<i2",
    "int16": "<i2",
    "ushort": "<u2",
    "uint16": "<u2",
    "int": "<i4",
    "int32": "<i4",
    "uint": "<u4",
    "uint32": "<u4",
}


def write_obj(path, mesh: TriangleMesh) -> None:
    lines = ["# cortexforge mesh\n"]
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
    for t in mesh.triangles:
        lines.append(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")
    Path(path).write_text("".join(lines))


def read_obj(path) -> TriangleMesh:
    vertices = []
    faces = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FileFormatError(f"cannot read {path}: {exc}") from exc
    for line_no, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0] in ("#", "vn", "vt", "o", "g", "s", "usemtl", "mtllib"):
            continue
        if parts[0] == "v":
            if len(parts) < 4:
                raise FileFormatError(f"{path}:{line_no}: malformed vertex line")
            vertices.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) for p in parts[1:]]
            if len(idx) != 3:
                raise FileFormatError(f"{path}:{line_no}: only triangle faces are supported")
            faces.append([i - 1 if i > 0 else len(vertices) + i for i in idx])
        else:
            raise FileFormatError(f"{path}:{line_no}: unsupported OBJ element {parts[0]!r}")
    if not vertices or not faces:
        raise FileFormatError(f"{path}: OBJ contains no triangles")
    return TriangleMesh(np.asarray(vertices), np.asarray(faces))


def write_ply(path, mesh: TriangleMesh, scalars: dict[str, np.ndarray] | None = None) -> None:
    scalars = scalars or {}
    for name, values in scalars.items():
        if len(values) != mesh.n_vertices:
            raise FileFormatError(f"scalar {name!r} length does not match vertex count")

    header = ["ply", "format binary_little_endian 1.0", f"element vertex {mesh.n_vertices}"]
    header += ["property double x", "property double y", "property double z"]
    header += [f"property double {name}" for name in scalars]
    header += [
        f"element face {mesh.n_triangles}",
        "property list uchar int vertex_indices",
        "end_header",
    ]

    fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")] + [(n, "<f8") for n in scalars]
    vertex_rec = np.zeros(mesh.n_vertices, dtype=fields)
    vertex_rec["x"] = mesh.vertices[:, 0]
    vertex_rec["y"] = mesh.vertices[:, 1]
    vertex_rec["z"] = mesh.vertices[:, 2]
    for name, values in scalars.items():
        vertex_rec[name] = values

    face_rec = np.zeros(mesh.n_triangles, dtype=[("n", "<u1"), ("idx", "<i4", (3,))])
    face_rec["n"] = 3
    face_rec["idx"] = mesh.triangles.astype(np.int32)

    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(vertex_rec.tobytes())
        fh.write(face_rec.tobytes())


def read_ply(path):
    """Read a binary little-endian PLY; returns (mesh, scalars dict)."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise FileFormatError(f"cannot read {path}: {exc}") from exc
    end = blob.find(b"end_header\n")
    if not blob.startswith(b"ply") or end < 0:
        raise FileFormatError(f"{path}: not a PLY file")
    header = blob[:end].decode("ascii", errors="replace").splitlines()
    body = blob[end + len(b"end_header\n"):]

    fmt = next((l.split()[1] for l in header if l.startswith("format")), None)
    if fmt != "binary_little_endian":
        raise FileFormatError(f"{path}: only binary little-endian PLY is supported")

    n_vertex = n_face = 0
    vertex_props: list[tuple[str, str]] = []
    face_list_dtype = None
    current = None
    for line in header[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "element":
            current = parts[1]
            if current == "vertex":
                n_vertex = int(parts[2])
            elif current == "face":
                n_face = int(parts[2])
            else:
                raise FileFormatError(f"{path}: unsupported element {current!r}")
        elif parts[0] == "property":
            if current == "vertex":
                if parts[1] == "list":
                    raise FileFormatError(f"{path}: list properties on vertices unsupported")
                if parts[1] not in _PLY_DTYPES:
                    raise FileFormatError(f"{path}: unsupported property type {parts[1]!r}")
                vertex_props.append((parts[2], _PLY_DTYPES[parts[1]]))
            elif current == "face":
                if parts[1] != "list":
                    raise FileFormatError(f"{path}: face element must be an index list")
                face_list_dtype = (_PLY_DTYPES[parts[2]], _PLY_DTYPES[parts[3]])

    names = [n for n, _ in vertex_props]
    if not {"x", "y", "z"} <= set(names):
        raise FileFormatError(f"{path}: vertex element lacks x/y/z")
    if face_list_dtype is None:
        raise FileFormatError(f"{path}: face element missing")

    vdtype = np.dtype([(n, d) for n, d in vertex_props])
    vertex_rec = np.frombuffer(body, dtype=vdtype, count=n_vertex)
    offset = vdtype.itemsize * n_vertex

    count_dt = np.dtype(face_list_dtype[0])
    index_dt = np.dtype(face_list_dtype[1])
    fdtype = np.dtype([("n", count_dt), ("idx", index_dt, (3,))])
    face_rec = np.frombuffer(body, dtype=fdtype, count=n_face, offset=offset)
    if n_face and not np.all(face_rec["n"] == 3):
        raise FileFormatError(f"{path}: only triangle faces are supported")

    vertices = np.stack(
        [vertex_rec["x"], vertex_rec["y"], vertex_rec["z"]], axis=1
    ).astype(np.float64)
    mesh = TriangleMesh(vertices, face_rec["idx"].astype(np.int64))
    scalars = {
        n: np.asarray(vertex_rec[n], dtype=np.float64)
        for n in names
        if n not in ("x", "y", "z")
    }
    return mesh, scalars


def read_mesh(path) -> TriangleMesh:
    """Read OBJ or PLY based on the file suffix."""
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        return read_obj(path)
    if suffix == ".ply":
        return read_ply(path)[0]
    raise FileFormatError(f"unsupported mesh format {suffix!r} (use .obj or .ply)")


def write_mesh(path, mesh: TriangleMesh, scalars=None) -> None:
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        if scalars:
            raise FileFormatError("OBJ cannot carry vertex scalars; use PLY")
        write_obj(path, mesh)
    elif suffix == ".ply":
        write_ply(path, mesh, scalars)
    else:
        raise FileFormatError(f"unsupported mesh format {suffix!r} (use .obj or .ply)")
