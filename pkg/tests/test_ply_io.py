import numpy as np
import pytest

from conftest import random_cloud
from splatqa.errors import PlyIOError, PlyParseError, PlySchemaError
from splatqa.ply_io import REQUIRED_PROPERTIES, read_ply, write_ply
from splatqa.splats import ATTR_COUNT, GaussianCloud


def _ascii_file(tmp_path, n_vertices, rows, props=None, fmt="ascii"):
    props = props or REQUIRED_PROPERTIES
    lines = ["ply", f"format {fmt} 1.0", f"element vertex {n_vertices}"]
    lines += [f"property float {p}" for p in props]
    lines.append("end_header")
    lines += rows
    path = tmp_path / "model.ply"
    path.write_text("\n".join(lines) + "\n")
    return path


def test_zero_vertex_file(tmp_path):
    path = _ascii_file(tmp_path, 0, [])
    cloud = read_ply(path)
    assert cloud.count == 0
    assert cloud.data.shape == (0, ATTR_COUNT)


def test_identity_quaternion_vertex(tmp_path):
    values = ["0"] * ATTR_COUNT
    # file order: x y z, f_dc x3, f_rest x45, opacity, scale x3, rot_0..3
    values[3 + 45 + 3 + 1 + 3] = "1"  # rot_0
    path = _ascii_file(tmp_path, 1, [" ".join(values)])
    cloud = read_ply(path)
    assert cloud.count == 1
    splat = cloud.splat(0)
    assert np.all(splat.centroid == 0)
    assert np.all(splat.sh == 0)
    assert splat.opacity_raw == 0
    assert tuple(splat.rotation_raw) == (1.0, 0.0, 0.0, 0.0)


def test_binary_roundtrip_bit_exact(tmp_path):
    cloud = random_cloud(500, seed=1)
    p1, p2 = tmp_path / "a.ply", tmp_path / "b.ply"
    write_ply(cloud, p1)
    again = read_ply(p1)
    assert np.array_equal(again.data, cloud.data)
    write_ply(again, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_roundtrip_preserves_extras(tmp_path):
    cloud = random_cloud(20, seed=2)
    extras = [("nx", np.zeros(20, dtype=np.float32)),
              ("ny", np.arange(20, dtype=np.float32)),
              ("nz", np.ones(20, dtype=np.float32))]
    cloud = GaussianCloud(data=cloud.data, extras=extras)
    path = tmp_path / "n.ply"
    write_ply(cloud, path)
    again = read_ply(path)
    names = [n for n, _ in again.extras]
    assert names == ["nx", "ny", "nz"]
    assert np.array_equal(again.extras[1][1], extras[1][1])


def test_ascii_binary_cross_encoding_equal(tmp_path):
    cloud = random_cloud(300, seed=4)
    pa, pb = tmp_path / "a.ply", tmp_path / "b.ply"
    write_ply(cloud, pa, encoding="ascii")
    write_ply(cloud, pb, encoding="binary-LE")
    ca, cb = read_ply(pa), read_ply(pb)
    assert np.array_equal(ca.data, cb.data)
    assert np.array_equal(ca.data, cloud.data)


def test_empty_cloud_writes_valid_ply(tmp_path):
    cloud = GaussianCloud(data=np.empty((0, ATTR_COUNT), dtype=np.float32))
    path = tmp_path / "empty.ply"
    write_ply(cloud, path)
    text = path.read_bytes().decode("ascii", errors="replace")
    assert "element vertex 0" in text
    assert read_ply(path).count == 0


def test_missing_property_schema_error(tmp_path):
    props = [p for p in REQUIRED_PROPERTIES if p != "opacity"]
    path = _ascii_file(tmp_path, 0, [], props=props)
    with pytest.raises(PlySchemaError, match="opacity"):
        read_ply(path)


def test_malformed_header_names_line(tmp_path):
    path = tmp_path / "bad.ply"
    path.write_text("ply\nformat ascii 1.0\nelement vertex 1\nwat is this\nend_header\n")
    with pytest.raises(PlyParseError, match=":4"):
        read_ply(path)


def test_big_endian_rejected(tmp_path):
    path = tmp_path / "be.ply"
    path.write_text("ply\nformat binary_big_endian 1.0\nelement vertex 0\nend_header\n")
    with pytest.raises(PlyParseError, match="binary_big_endian"):
        read_ply(path)


def test_truncated_binary_reports_offset(tmp_path):
    cloud = random_cloud(10, seed=5)
    path = tmp_path / "t.ply"
    write_ply(cloud, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-17])
    with pytest.raises(PlyIOError, match="byte offset"):
        read_ply(path)


def test_list_property_rejected(tmp_path):
    path = tmp_path / "l.ply"
    path.write_text("ply\nformat ascii 1.0\nelement vertex 0\n"
                    "property list uchar int vertex_indices\nend_header\n")
    with pytest.raises(PlyParseError, match="list"):
        read_ply(path)


def test_double_typed_required_property_rejected(tmp_path):
    lines = ["ply", "format ascii 1.0", "element vertex 0"]
    for p in REQUIRED_PROPERTIES:
        kind = "double" if p == "x" else "float"
        lines.append(f"property {kind} {p}")
    lines.append("end_header")
    path = tmp_path / "d.ply"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(PlySchemaError, match="x"):
        read_ply(path)


def test_property_remap_is_bijective():
    from splatqa.ply_io import _COLUMN_OF

    assert sorted(_COLUMN_OF.values()) == list(range(ATTR_COUNT))
    assert len(_COLUMN_OF) == len(REQUIRED_PROPERTIES)
