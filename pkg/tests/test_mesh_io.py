import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from recon_eval.errors import (BadMagic, IndexOutOfRange, MalformedHeader, MeshFormatError,
                               MissingPositions, NonTriangleMode, ObjParseError,
                               TruncatedChunk, UnknownFormat, UnsupportedEncoding,
                               UnsupportedVersion)
from recon_eval.mesh import MeshFormat, TriangleMesh, fan_triangulate
from recon_eval.mesh_io import (detect_format, load_mesh, parse_glb, parse_obj, parse_ply,
                                write_glb, write_obj, write_ply)
from recon_eval.shapes import box, icosphere

from conftest import FIXTURES


def test_obj_minimal():
    m = load_mesh(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    assert m.n_vertices == 3
    assert m.faces.tolist() == [[0, 1, 2]]


def test_obj_quad_is_fanned():
    m = load_mesh(b"v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    assert m.faces.tolist() == [[0, 1, 2], [0, 2, 3]]


def test_obj_slash_forms_negative_indices_and_skipped_records():
    text = b"""# comment
mtllib x.mtl
o thing
v 0 0 0
v 1 0 0
v 0 1 0
vt 0 0
vn 0 0 2
usemtl red
s off
f -3/1/1 -2/1/1 -1/1/1
"""
    m = load_mesh(text)
    assert m.faces.tolist() == [[0, 1, 2]]
    assert np.allclose(m.normals, [[0, 0, 1]] * 3)


def test_obj_index_out_of_range():
    with pytest.raises(IndexOutOfRange):
        parse_obj(b"v 0 0 0\nf 1 2 3\n")


def test_unknown_format():
    with pytest.raises(UnknownFormat):
        load_mesh(b"xyz\x00\x01 not a mesh at all")
    with pytest.raises(UnknownFormat):
        load_mesh(b"xyz abc\nqqq 1 2\n")
    with pytest.raises(UnknownFormat):
        load_mesh(b"")


def test_obj_hint_reports_grammar_errors():
    with pytest.raises(ObjParseError):
        load_mesh(b"v 0 0 0\nbogus 1\n", MeshFormat.OBJ)


def test_detect_format():
    assert detect_format(write_glb(box())) is MeshFormat.GLB
    assert detect_format(write_ply(box(), binary=True)) is MeshFormat.PLY_BINARY_LE
    assert detect_format(write_ply(box(), binary=False)) is MeshFormat.PLY_ASCII
    assert detect_format(write_obj(box())) is MeshFormat.OBJ


def test_detection_ignores_filename(tmp_path):
    p = tmp_path / "actually_ply.obj"
    p.write_bytes(write_ply(box()))
    from recon_eval.mesh_io import read_mesh

    assert read_mesh(p).n_faces == 12


# -- PLY --------------------------------------------------------------------

ASCII_TRI = b"""ply
format ascii 1.0
comment hand written
element vertex 3
property float x
property float y
property float z
property uchar red
property uchar green
property uchar blue
element face 1
property list uchar int vertex_indices
end_header
0 0 0 255 0 0
1 0 0 0 255 0
0 1 0 0 0 255
3 0 1 2
"""


def test_ply_ascii_minimal():
    m = parse_ply(ASCII_TRI)
    assert m.vertices.tolist() == [[0, 0, 0], [1, 0, 0], [0, 1, 0]]
    assert m.faces.tolist() == [[0, 1, 2]]
    assert m.colors.tolist() == [[1, 0, 0], [0, 1, 0], [0, 0, 1]]


def test_ply_big_endian_rejected():
    data = ASCII_TRI.replace(b"format ascii 1.0", b"format binary_big_endian 1.0")
    with pytest.raises(UnsupportedEncoding):
        parse_ply(data)


@pytest.mark.parametrize("bad", [
    b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n",  # no end_header
    b"ply\nformat ascii 2.0 extra\nend_header\n",
    b"ply\nformat ascii 1.0\nproperty float x\nend_header\n",
    b"ply\nformat ascii 1.0\nelement vertex -1\nend_header\n",
    b"ply\nformat ascii 1.0\nelement vertex 1\nproperty quux x\nend_header\n0\n",
    b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n0\n",  # no y/z
])
def test_ply_malformed_header(bad):
    with pytest.raises(MalformedHeader):
        parse_ply(bad)


def test_ply_face_index_out_of_range():
    data = ASCII_TRI.replace(b"3 0 1 2", b"3 0 1 7")
    with pytest.raises(IndexOutOfRange):
        parse_ply(data)


def test_ply_polygon_fan():
    data = b"""ply
format ascii 1.0
element vertex 5
property double x
property double y
property double z
element face 1
property list uchar uint vertex_index
end_header
0 0 0
1 0 0
2 1 0
1 2 0
0 1 0
5 0 1 2 3 4
"""
    m = parse_ply(data)
    assert m.faces.tolist() == [[0, 1, 2], [0, 2, 3], [0, 3, 4]]


def test_ply_reference_writer_fixture():
    """Binary PLY written by an independent library (plyfile)."""
    from fixtures.make_fixtures import PLY_FACES, PLY_VERTICES

    m = parse_ply((FIXTURES / "reference_binary.ply").read_bytes())
    assert np.array_equal(m.vertices, PLY_VERTICES.astype(np.float64))
    expected = [tri for f in PLY_FACES for tri in fan_triangulate(f)]
    assert m.faces.tolist() == [list(t) for t in expected]


def test_write_ply_colors_round_trip():
    m = box().with_colors(np.tile([[1.0, 0.0, 0.0]], (8, 1)))
    for binary in (True, False):
        back = parse_ply(write_ply(m, binary=binary))
        assert np.array_equal(back.colors, m.colors)


def test_write_ply_normals():
    s = icosphere(1)
    m = TriangleMesh(s.vertices, s.faces, normals=s.vertices)
    back = parse_ply(write_ply(m))
    assert np.allclose(back.normals, m.normals)


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@st.composite
def meshes(draw):
    n = draw(st.integers(1, 30))
    v = draw(st.lists(st.tuples(finite, finite, finite), min_size=n, max_size=n))
    f = draw(st.lists(st.tuples(*[st.integers(0, n - 1)] * 3), max_size=40))
    if draw(st.booleans()):
        v = np.asarray(v, np.float32)  # exercises the float (not double) encoding
    return TriangleMesh(np.asarray(v, float), np.asarray(f, int).reshape(-1, 3))


@settings(max_examples=60, deadline=None)
@given(meshes(), st.booleans())
def test_ply_round_trip_bit_exact(mesh, binary):
    back = parse_ply(write_ply(mesh, binary=binary))
    assert back.vertices.tobytes() == mesh.vertices.tobytes()
    assert np.array_equal(back.faces, mesh.faces)


@settings(max_examples=30, deadline=None)
@given(meshes())
def test_glb_writer_round_trip(mesh):
    back = parse_glb(write_glb(mesh))
    assert np.array_equal(back.vertices, mesh.vertices.astype(np.float32).astype(float))
    assert np.array_equal(back.faces, mesh.faces)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 12))
def test_fan_triangulation_count(n):
    tris = fan_triangulate(list(range(n)))
    assert len(tris) == n - 2
    assert all(t[0] == 0 for t in tris)


# -- GLB --------------------------------------------------------------------

def test_glb_reference_fixture():
    """Single triangle exported with pygltflib."""
    from fixtures.make_fixtures import TRIANGLE

    m = load_mesh((FIXTURES / "triangle.glb").read_bytes())
    assert np.array_equal(m.vertices, TRIANGLE.astype(float))
    assert m.faces.tolist() == [[0, 1, 2]]


def test_glb_node_translation_is_baked():
    from fixtures.make_fixtures import TRANSLATED_NODE, TRIANGLE

    m = parse_glb((FIXTURES / "triangle_translated.glb").read_bytes())
    assert np.array_equal(m.vertices, TRIANGLE.astype(float) + TRANSLATED_NODE)


def _glb(doc, binary=b""):
    js = json.dumps(doc).encode()
    js += b" " * (-len(js) % 4)
    binary += b"\0" * (-len(binary) % 4)
    body = struct.pack("<II", len(js), 0x4E4F534A) + js
    if binary:
        body += struct.pack("<II", len(binary), 0x004E4942) + binary
    return struct.pack("<III", 0x46546C67, 2, 12 + len(body)) + body


def _tri_doc(**prim):
    return {
        "asset": {"version": "2.0"},
        "meshes": [{"primitives": [{"attributes": {"POSITION": 0}, **prim}]}],
        "nodes": [{"mesh": 0}],
        "scenes": [{"nodes": [0]}],
        "accessors": [{"bufferView": 0, "componentType": 5126, "count": 3, "type": "VEC3"}],
        "bufferViews": [{"buffer": 0, "byteLength": 36}],
        "buffers": [{"byteLength": 36}],
    }


TRI_BYTES = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], "<f4").tobytes()


def test_glb_non_indexed_primitive():
    m = parse_glb(_glb(_tri_doc(), TRI_BYTES))
    assert m.faces.tolist() == [[0, 1, 2]]


def test_glb_bad_magic():
    data = bytearray(write_glb(box()))
    data[:4] = b"gltf"
    with pytest.raises(BadMagic):
        parse_glb(bytes(data))


def test_glb_version_1():
    data = bytearray(write_glb(box()))
    data[4:8] = struct.pack("<I", 1)
    with pytest.raises(UnsupportedVersion):
        parse_glb(bytes(data))


def test_glb_truncated():
    with pytest.raises(TruncatedChunk):
        parse_glb(write_glb(box())[:-8])


def test_glb_missing_positions():
    doc = _tri_doc()
    doc["meshes"][0]["primitives"][0]["attributes"] = {"NORMAL": 0}
    with pytest.raises(MissingPositions):
        parse_glb(_glb(doc, TRI_BYTES))


def test_glb_non_triangle_mode():
    with pytest.raises(NonTriangleMode):
        parse_glb(_glb(_tri_doc(mode=1), TRI_BYTES))


def test_glb_matrix_and_hierarchy():
    doc = _tri_doc()
    scale2 = [2, 0, 0, 0, 0, 2, 0, 0, 0, 0, 2, 0, 0, 0, 0, 1]
    doc["nodes"] = [{"children": [1], "matrix": scale2},
                    {"mesh": 0, "translation": [1, 0, 0],
                     "rotation": [0, 0, 0.7071067811865476, 0.7071067811865476]}]
    m = parse_glb(_glb(doc, TRI_BYTES))
    # rotate 90 deg about z, translate +x, then scale by 2
    expected = np.array([[2, 0, 0], [2, 2, 0], [0, 0, 0]], float)
    assert np.allclose(m.vertices, expected, atol=1e-12)


def test_glb_interleaved_stride():
    pos = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], "<f4")
    inter = np.zeros((3, 6), "<f4")
    inter[:, :3] = pos
    inter[:, 3:] = [0, 0, 1]
    doc = _tri_doc()
    doc["meshes"][0]["primitives"][0]["attributes"]["NORMAL"] = 1
    doc["accessors"].append({"bufferView": 0, "byteOffset": 12, "componentType": 5126,
                             "count": 3, "type": "VEC3"})
    doc["bufferViews"] = [{"buffer": 0, "byteLength": 72, "byteStride": 24}]
    m = parse_glb(_glb(doc, inter.tobytes()))
    assert np.array_equal(m.vertices, pos.astype(float))
    assert np.array_equal(m.normals, [[0, 0, 1]] * 3)


def test_glb_multiple_primitives_concatenate():
    doc = _tri_doc()
    doc["meshes"][0]["primitives"].append({"attributes": {"POSITION": 0}})
    doc["nodes"].append({"mesh": 0, "translation": [0, 0, 5]})
    doc["scenes"][0]["nodes"].append(1)
    m = parse_glb(_glb(doc, TRI_BYTES))
    assert m.n_vertices == 12
    assert m.faces.max() == 11
    assert m.vertices[9:, 2].tolist() == [5, 5, 5]


# -- fuzzing ----------------------------------------------------------------

def _valid(mesh):
    assert np.all(np.isfinite(mesh.vertices))
    if mesh.n_faces:
        assert mesh.faces.min() >= 0 and mesh.faces.max() < mesh.n_vertices


@pytest.mark.parametrize("blob", [
    write_glb(icosphere(1)),
    write_ply(icosphere(1), binary=True),
    write_ply(icosphere(1), binary=False),
    write_obj(icosphere(1)),
], ids=["glb", "ply_bin", "ply_ascii", "obj"])
def test_truncation_never_yields_invalid_mesh(blob):
    rng = np.random.default_rng(11)
    cuts = sorted(set(rng.integers(1, len(blob), 250).tolist()))
    for cut in cuts:
        try:
            mesh = load_mesh(blob[:cut])
        except MeshFormatError:
            continue
        _valid(mesh)
