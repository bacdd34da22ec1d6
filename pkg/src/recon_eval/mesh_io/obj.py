"""Wavefront OBJ reader. Only ``v``, ``vn`` and ``f`` records are used."""

import numpy as np

from ..errors import IndexOutOfRange, ObjParseError
from ..mesh import TriangleMesh, fan_triangulate

# Records that are valid OBJ but carry nothing the metrics need.
SKIPPED = frozenset({
    "vt", "vp", "o", "g", "s", "usemtl", "mtllib", "l", "p", "cstype", "deg",
    "bmat", "step", "curv", "curv2", "surf", "parm", "trim", "hole", "scrv",
    "sp", "end", "con", "mg", "bevel", "c_interp", "d_interp", "lod",
    "shadow_obj", "trace_obj", "ctech", "stech", "maplib", "usemap",
})


def _resolve(token: str, count: int, lineno: int) -> int:
    try:
        i = int(token)
    except ValueError:
        raise ObjParseError(f"line {lineno}: bad index {token!r}") from None
    if i > 0:
        i -= 1
    elif i < 0:
        i += count
    else:
        raise IndexOutOfRange(f"line {lineno}: OBJ indices are 1-based")
    if not 0 <= i < count:
        raise IndexOutOfRange(f"line {lineno}: index {token} out of range")
    return i


def looks_like_obj(text: str) -> bool:
    """True if at least one line starts with a known OBJ keyword."""
    for line in text.splitlines():
        parts = line.split(None, 1)
        if parts and (parts[0] in ("v", "vn", "f") or parts[0] in SKIPPED):
            return True
    return False


def parse_obj(data) -> TriangleMesh:
    if isinstance(data, (bytes, bytearray, memoryview)):
        try:
            text = bytes(data).decode("utf-8")
        except UnicodeDecodeError as e:
            raise ObjParseError(f"not UTF-8 text: {e}") from None
    else:
        text = data

    verts, normals, faces = [], [], []
    vertex_normal = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        # line continuation is rare enough to ignore
        key, *rest = line.split()
        if key == "v":
            if len(rest) < 3:
                raise ObjParseError(f"line {lineno}: vertex needs 3 coordinates")
            try:
                verts.append([float(x) for x in rest[:3]])
            except ValueError:
                raise ObjParseError(f"line {lineno}: bad vertex {line!r}") from None
        elif key == "vn":
            if len(rest) < 3:
                raise ObjParseError(f"line {lineno}: normal needs 3 components")
            try:
                normals.append([float(x) for x in rest[:3]])
            except ValueError:
                raise ObjParseError(f"line {lineno}: bad normal {line!r}") from None
        elif key == "f":
            if len(rest) < 3:
                raise ObjParseError(f"line {lineno}: face needs at least 3 vertices")
            poly = []
            for tok in rest:
                fields = tok.split("/")
                vi = _resolve(fields[0], len(verts), lineno)
                if len(fields) == 3 and fields[2]:
                    ni = _resolve(fields[2], len(normals), lineno)
                    vertex_normal[vi] = ni
                poly.append(vi)
            faces.extend(fan_triangulate(poly))
        elif key in SKIPPED:
            continue
        else:
            raise ObjParseError(f"line {lineno}: unknown record {key!r}")

    v = np.array(verts, dtype=np.float64).reshape(-1, 3)
    if not np.all(np.isfinite(v)):
        raise ObjParseError("non-finite vertex coordinate")
    n = None
    # per-vertex normals only when every vertex got one and all are usable
    if normals and len(vertex_normal) == len(v):
        cand = np.array(normals, dtype=np.float64)[
            [vertex_normal[i] for i in range(len(v))]]
        length = np.linalg.norm(cand, axis=1)
        if np.all(np.isfinite(length)) and np.all(length > 0):
            n = cand / length[:, None]
    return TriangleMesh(v, np.array(faces, dtype=np.int64).reshape(-1, 3), n)


def write_obj(mesh: TriangleMesh) -> bytes:
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces.tolist()]
    return ("\n".join(lines) + "\n").encode("ascii")
