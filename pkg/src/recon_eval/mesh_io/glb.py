"""Binary glTF 2.0 (GLB) geometry reader.

Collects every TRIANGLES primitive reachable from the default scene and
bakes node transforms into the positions. Materials, textures, skins and
animation are ignored.
"""

import json
import struct

import numpy as np

from ..errors import (BadMagic, GlbParseError, MeshFormatError, MissingPositions,
                      NonTriangleMode, TruncatedChunk, UnsupportedVersion)
from ..mesh import TriangleMesh

GLB_MAGIC = 0x46546C67  # b"glTF"
CHUNK_JSON = 0x4E4F534A
CHUNK_BIN = 0x004E4942
MODE_TRIANGLES = 4

COMPONENT_DTYPES = {
    5120: "i1", 5121: "u1", 5122: "<i2", 5123: "<u2", 5125: "<u4", 5126: "<f4",
}
TYPE_SIZES = {"SCALAR": 1, "VEC2": 2, "VEC3": 3, "VEC4": 4, "MAT2": 4, "MAT3": 9, "MAT4": 16}


def _read_chunks(data: bytes):
    if len(data) < 12:
        raise TruncatedChunk("GLB header needs 12 bytes")
    magic, version, length = struct.unpack_from("<III", data, 0)
    if magic != GLB_MAGIC:
        raise BadMagic(f"bad GLB magic 0x{magic:08X}")
    if version != 2:
        raise UnsupportedVersion(f"GLB version {version} (only 2 is supported)")
    if length > len(data):
        raise TruncatedChunk(f"header declares {length} bytes, got {len(data)}")
    if length < 20:
        raise TruncatedChunk("GLB has no JSON chunk")

    chunks = []
    pos = 12
    while pos < length:
        if pos + 8 > length:
            raise TruncatedChunk("chunk header truncated")
        size, ctype = struct.unpack_from("<II", data, pos)
        pos += 8
        if pos + size > length:
            raise TruncatedChunk("chunk payload truncated")
        chunks.append((ctype, data[pos:pos + size]))
        pos += size
    if not chunks or chunks[0][0] != CHUNK_JSON:
        raise GlbParseError("first chunk must be JSON")
    try:
        doc = json.loads(chunks[0][1].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise GlbParseError(f"invalid JSON chunk: {e}") from None
    if not isinstance(doc, dict):
        raise GlbParseError("JSON chunk is not an object")
    binary = chunks[1][1] if len(chunks) > 1 and chunks[1][0] == CHUNK_BIN else b""
    return doc, binary


def _get(lst, i, what):
    if not isinstance(lst, list) or not isinstance(i, int) or not 0 <= i < len(lst):
        raise GlbParseError(f"{what} index {i!r} out of range")
    item = lst[i]
    if not isinstance(item, dict):
        raise GlbParseError(f"{what} {i} is not an object")
    return item


def _read_accessor(doc, binary, index):
    acc = _get(doc.get("accessors"), index, "accessor")
    try:
        dtype = np.dtype(COMPONENT_DTYPES[acc["componentType"]])
        width = TYPE_SIZES[acc["type"]]
        count = int(acc["count"])
    except (KeyError, TypeError, ValueError):
        raise GlbParseError(f"accessor {index} is malformed") from None
    if count < 0:
        raise GlbParseError(f"accessor {index} has negative count")
    if "bufferView" not in acc:
        # sparse-only / zero-filled accessors
        return np.zeros((count, width), dtype=dtype)
    view = _get(doc.get("bufferViews"), acc["bufferView"], "bufferView")
    if view.get("buffer", 0) != 0:
        raise GlbParseError("only the embedded GLB buffer is supported")
    try:
        start = int(view.get("byteOffset", 0)) + int(acc.get("byteOffset", 0))
        view_len = int(view["byteLength"])
        view_end = int(view.get("byteOffset", 0)) + view_len
        elem = dtype.itemsize * width
        stride = int(view.get("byteStride", 0)) or elem
    except (KeyError, TypeError, ValueError):
        raise GlbParseError("bufferView is malformed") from None
    if count == 0:
        return np.zeros((0, width), dtype=dtype)
    end = start + stride * (count - 1) + elem
    if start < 0 or stride < elem or end > view_end or end > len(binary):
        raise TruncatedChunk(f"accessor {index} runs past the BIN chunk")
    if stride == elem:
        return np.frombuffer(binary, dtype=dtype, count=count * width,
                             offset=start).reshape(count, width)
    raw = np.frombuffer(binary, dtype=np.uint8, count=end - start, offset=start)
    rows = np.lib.stride_tricks.as_strided(raw, shape=(count, elem), strides=(stride, 1))
    return np.ascontiguousarray(rows).view(dtype).reshape(count, width)


def _node_matrix(node) -> np.ndarray:
    try:
        if "matrix" in node:
            m = np.array(node["matrix"], dtype=np.float64)
            if m.shape != (16,):
                raise GlbParseError("node matrix must have 16 entries")
            return m.reshape(4, 4).T  # column-major storage
        t = np.array(node.get("translation", [0, 0, 0]), dtype=np.float64)
        x, y, z, w = np.array(node.get("rotation", [0, 0, 0, 1]), dtype=np.float64)
        s = np.array(node.get("scale", [1, 1, 1]), dtype=np.float64)
    except (TypeError, ValueError):
        raise GlbParseError("malformed node transform") from None
    r = np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])
    m = np.eye(4)
    m[:3, :3] = r * s[None, :]
    m[:3, 3] = t
    return m


def _walk(doc):
    """Yield (mesh index, world matrix) for every mesh instance in the scene."""
    nodes = doc.get("nodes") or []
    scenes = doc.get("scenes")
    if scenes:
        scene = _get(scenes, doc.get("scene", 0), "scene")
        roots = scene.get("nodes", [])
    else:
        children = {c for n in nodes if isinstance(n, dict) for c in n.get("children", [])}
        roots = [i for i in range(len(nodes)) if i not in children]
    if not nodes and doc.get("meshes"):
        for i in range(len(doc["meshes"])):
            yield i, np.eye(4)
        return

    stack = [(r, np.eye(4), 0) for r in reversed(roots)]
    while stack:
        idx, parent, depth = stack.pop()
        if depth > len(nodes):
            raise GlbParseError("node hierarchy contains a cycle")
        node = _get(nodes, idx, "node")
        world = parent @ _node_matrix(node)
        if "mesh" in node:
            yield node["mesh"], world
        for c in reversed(node.get("children", [])):
            stack.append((c, world, depth + 1))


def parse_glb(data: bytes) -> TriangleMesh:
    data = bytes(data)
    doc, binary = _read_chunks(data)
    try:
        return _collect(doc, binary)
    except MeshFormatError:
        raise
    except (TypeError, KeyError, AttributeError, ValueError) as e:
        raise GlbParseError(f"malformed glTF document: {e}") from None


def _collect(doc, binary) -> TriangleMesh:
    meshes = doc.get("meshes")

    all_v, all_n, all_f = [], [], []
    offset = 0
    have_normals = True
    for mesh_idx, world in _walk(doc):
        mesh = _get(meshes, mesh_idx, "mesh")
        for prim in mesh.get("primitives", []):
            if not isinstance(prim, dict):
                raise GlbParseError("primitive is not an object")
            if prim.get("mode", MODE_TRIANGLES) != MODE_TRIANGLES:
                raise NonTriangleMode(f"primitive mode {prim.get('mode')} is not TRIANGLES")
            attrs = prim.get("attributes", {})
            if "POSITION" not in attrs:
                raise MissingPositions("primitive has no POSITION attribute")
            pos = _read_accessor(doc, binary, attrs["POSITION"]).astype(np.float64)
            if pos.shape[1] != 3:
                raise GlbParseError("POSITION must be VEC3")
            if "indices" in prim:
                idx = _read_accessor(doc, binary, prim["indices"]).astype(np.int64).ravel()
            else:
                idx = np.arange(len(pos), dtype=np.int64)
            if len(idx) % 3:
                raise GlbParseError("index count is not a multiple of 3")
            if idx.size and (idx.min() < 0 or idx.max() >= len(pos)):
                raise GlbParseError("primitive index out of range")

            hom = np.c_[pos, np.ones(len(pos))]
            all_v.append((hom @ world.T)[:, :3])
            if "NORMAL" in attrs and have_normals:
                n = _read_accessor(doc, binary, attrs["NORMAL"]).astype(np.float64)
                if n.shape != pos.shape:
                    raise GlbParseError("NORMAL accessor does not match POSITION")
                try:
                    # inverse-transpose applied to row vectors
                    all_n.append(n @ np.linalg.inv(world[:3, :3]))
                except np.linalg.LinAlgError:
                    have_normals = False
            else:
                have_normals = False
            all_f.append(idx.reshape(-1, 3) + offset)
            offset += len(pos)

    if not all_v:
        raise MissingPositions("GLB contains no mesh primitives")
    v = np.concatenate(all_v)
    if not np.all(np.isfinite(v)):
        raise GlbParseError("non-finite vertex position")
    normals = None
    if have_normals:
        n = np.concatenate(all_n)
        length = np.linalg.norm(n, axis=1)
        if np.all(np.isfinite(length)) and np.all(length > 0):
            normals = n / length[:, None]
    return TriangleMesh(v, np.concatenate(all_f), normals)


def write_glb(mesh: TriangleMesh) -> bytes:
    """Minimal single-primitive GLB writer (float32 positions, uint32 indices)."""
    pos = mesh.vertices.astype("<f4")
    idx = mesh.faces.astype("<u4").ravel()
    pos_bytes = pos.tobytes()
    idx_bytes = idx.tobytes()
    binary = pos_bytes + idx_bytes
    binary += b"\0" * (-len(binary) % 4)
    lo = pos.min(axis=0).tolist() if len(pos) else [0, 0, 0]
    hi = pos.max(axis=0).tolist() if len(pos) else [0, 0, 0]
    doc = {
        "asset": {"version": "2.0", "generator": "recon_eval"},
        "scene": 0,
        "scenes": [{"nodes": [0]}],
        "nodes": [{"mesh": 0}],
        "meshes": [{"primitives": [{"attributes": {"POSITION": 0}, "indices": 1,
                                    "mode": MODE_TRIANGLES}]}],
        "buffers": [{"byteLength": len(binary)}],
        "bufferViews": [
            {"buffer": 0, "byteOffset": 0, "byteLength": len(pos_bytes)},
            {"buffer": 0, "byteOffset": len(pos_bytes), "byteLength": len(idx_bytes)},
        ],
        "accessors": [
            {"bufferView": 0, "componentType": 5126, "count": len(pos), "type": "VEC3",
             "min": lo, "max": hi},
            {"bufferView": 1, "componentType": 5125, "count": len(idx), "type": "SCALAR"},
        ],
    }
    js = json.dumps(doc, separators=(",", ":")).encode("utf-8")
    js += b" " * (-len(js) % 4)
    total = 12 + 8 + len(js) + 8 + len(binary)
    return (struct.pack("<III", GLB_MAGIC, 2, total)
            + struct.pack("<II", len(js), CHUNK_JSON) + js
            + struct.pack("<II", len(binary), CHUNK_BIN) + binary)
