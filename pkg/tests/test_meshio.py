import numpy as np
import pytest

from cortexforge.errors import FileFormatError
from cortexforge.meshio import read_mesh, read_obj, read_ply, write_mesh, write_obj, write_ply
from cortexforge.phantoms import icosphere


def test_obj_round_trip(tmp_path, unit_sphere_mesh):
    path = tmp_path / "m.obj"
    write_obj(path, unit_sphere_mesh)
    back = read_obj(path)
    assert np.array_equal(back.vertices, unit_sphere_mesh.vertices)
    assert np.array_equal(back.triangles, unit_sphere_mesh.triangles)


def test_ply_round_trip_with_scalars(tmp_path, unit_sphere_mesh, rng):
    path = tmp_path / "m.ply"
    scalars = {"thickness_mm": rng.normal(size=unit_sphere_mesh.n_vertices)}
    write_ply(path, unit_sphere_mesh, scalars)
    back, back_scalars = read_ply(path)
    assert np.array_equal(back.vertices, unit_sphere_mesh.vertices)
    assert np.array_equal(back.triangles, unit_sphere_mesh.triangles)
    assert np.array_equal(back_scalars["thickness_mm"], scalars["thickness_mm"])


def test_read_mesh_dispatch(tmp_path):
    mesh = icosphere(3.0, 1)
    write_mesh(tmp_path / "a.obj", mesh)
    write_mesh(tmp_path / "a.ply", mesh)
    assert read_mesh(tmp_path / "a.obj").n_triangles == mesh.n_triangles
    assert read_mesh(tmp_path / "a.ply").n_triangles == mesh.n_triangles
    with pytest.raises(FileFormatError):
        write_mesh(tmp_path / "a.stl", mesh)


def test_obj_rejects_quads(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    with pytest.raises(FileFormatError, match="triangle"):
        read_obj(path)


def test_ply_rejects_ascii_format(tmp_path):
    path = tmp_path / "ascii.ply"
    path.write_text("ply\nformat ascii 1.0\nelement vertex 0\nelement face 0\n"
                    "property list uchar int vertex_indices\nend_header\n")
    with pytest.raises(FileFormatError, match="little-endian"):
        read_ply(path)


def test_scalars_must_match_vertex_count(tmp_path, unit_sphere_mesh):
    with pytest.raises(FileFormatError):
        write_ply(tmp_path / "m.ply", unit_sphere_mesh, {"bad": np.zeros(3)})


def test_obj_scalars_rejected(tmp_path, unit_sphere_mesh):
    with pytest.raises(FileFormatError):
        write_mesh(tmp_path / "m.obj", unit_sphere_mesh, {"x": np.zeros(unit_sphere_mesh.n_vertices)})
