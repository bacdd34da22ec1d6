"""PLY reader/writer (ascii and binary_little_endian)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import IndexOutOfRange, MalformedHeader, PlyParseError, UnsupportedEncoding
from ..mesh import TriangleMesh

PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


@dataclass
class _Property:
    name: str
    dtype: str
    count_dtype: str | None = None  # set for list properties

    @property
    def is_list(self):
        return self.count_dtype is not None


@dataclass
class _Element:
    name: str
    count: int
    properties: list = field(default_factory=list)


def _parse_header(data: bytes):
    if not data.startswith(b"ply"):
        raise MalformedHeader("missing 'ply' magic")
    end = data.find(b"end_header")
    if end < 0:
        raise MalformedHeader("missing end_header")
    nl = data.find(b"\n", end)
    if nl < 0:
        raise MalformedHeader("end_header not terminated by newline")
    try:
        header = data[:end].decode("ascii")
    except UnicodeDecodeError:
        raise MalformedHeader("header is not ASCII") from None
    lines = header.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MalformedHeader("first line must be 'ply'")

    fmt = None
    elements = []
    for line in lines[1:]:
        parts = line.split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "format":
            if len(parts) != 3:
                raise MalformedHeader(f"bad format line {line!r}")
            fmt = parts[1]
        elif parts[0] == "element":
            if len(parts) != 3:
                raise MalformedHeader(f"bad element line {line!r}")
            try:
                count = int(parts[2])
            except ValueError:
                raise MalformedHeader(f"bad element count {line!r}") from None
            if count < 0:
                raise MalformedHeader(f"negative element count {line!r}")
            elements.append(_Element(parts[1], count))
        elif parts[0] == "property":
            if not elements:
                raise MalformedHeader("property before any element")
            if len(parts) == 5 and parts[1] == "list":
                if parts[2] not in PLY_TYPES or parts[3] not in PLY_TYPES:
                    raise MalformedHeader(f"bad list types {line!r}")
                prop = _Property(parts[4], PLY_TYPES[parts[3]], PLY_TYPES[parts[2]])
            elif len(parts) == 3 and parts[1] in PLY_TYPES:
                prop = _Property(parts[2], PLY_TYPES[parts[1]])
            else:
                raise MalformedHeader(f"bad property line {line!r}")
            elements[-1].properties.append(prop)
        else:
            raise MalformedHeader(f"unknown header line {line!r}")

    if fmt == "binary_big_endian":
        raise UnsupportedEncoding("big-endian PLY is not supported")
    if fmt not in ("ascii", "binary_little_endian"):
        raise MalformedHeader(f"unknown format {fmt!r}")
    return fmt, elements, nl + 1


def _read_ascii(body: bytes, elements):
    try:
        tokens = body.decode("ascii").split()
    except UnicodeDecodeError:
        raise PlyParseError("ascii body contains non-ASCII bytes") from None
    pos = 0
    out = {}
    for el in elements:
        if not any(p.is_list for p in el.properties):
            n = el.count * len(el.properties)
            if pos + n > len(tokens):
                raise PlyParseError(f"truncated element {el.name!r}")
            try:
                arr = np.array(tokens[pos:pos + n], dtype=np.float64)
            except ValueError:
                raise PlyParseError(f"bad number in element {el.name!r}") from None
            pos += n
            arr = arr.reshape(el.count, len(el.properties))
            out[el.name] = {p.name: arr[:, i] for i, p in enumerate(el.properties)}
            continue
        cols = {p.name: [] for p in el.properties}
        try:
            for _ in range(el.count):
                for p in el.properties:
                    if p.is_list:
                        k = int(tokens[pos])
                        if k < 0:
                            raise PlyParseError("negative list length")
                        if pos + 1 + k > len(tokens):
                            raise IndexError
                        cols[p.name].append([int(t) for t in tokens[pos + 1:pos + 1 + k]])
                        pos += 1 + k
                    else:
                        cols[p.name].append(float(tokens[pos]))
                        pos += 1
        except IndexError:
            raise PlyParseError(f"truncated element {el.name!r}") from None
        except ValueError:
            raise PlyParseError(f"bad number in element {el.name!r}") from None
        out[el.name] = cols
    return out


def _read_binary(body: bytes, elements):
    pos = 0
    out = {}
    for el in elements:
        props = el.properties
        if not any(p.is_list for p in props):
            dt = np.dtype([(f"p{i}", "<" + p.dtype) for i, p in enumerate(props)])
            nbytes = dt.itemsize * el.count
            if pos + nbytes > len(body):
                raise PlyParseError(f"truncated element {el.name!r}")
            arr = np.frombuffer(body, dtype=dt, count=el.count, offset=pos)
            pos += nbytes
            out[el.name] = {p.name: arr[f"p{i}"] for i, p in enumerate(props)}
            continue

        if len(props) == 1 and el.count > 0:
            # common case: every face has the same vertex count
            p = props[0]
            ct = np.dtype("<" + p.count_dtype)
            if pos + ct.itemsize > len(body):
                raise PlyParseError(f"truncated element {el.name!r}")
            k = int(np.frombuffer(body, ct, 1, pos)[0])
            if k > 0:
                dt = np.dtype([("n", ct), ("idx", "<" + p.dtype, (k,))])
                nbytes = dt.itemsize * el.count
                if pos + nbytes <= len(body):
                    arr = np.frombuffer(body, dt, el.count, pos)
                    if np.all(arr["n"] == k):
                        pos += nbytes
                        out[el.name] = {p.name: arr["idx"]}
                        continue

        cols = {p.name: [] for p in props}
        for _ in range(el.count):
            for p in props:
                if p.is_list:
                    ct = np.dtype("<" + p.count_dtype)
                    if pos + ct.itemsize > len(body):
                        raise PlyParseError(f"truncated element {el.name!r}")
                    k = int(np.frombuffer(body, ct, 1, pos)[0])
                    pos += ct.itemsize
                    if k < 0:
                        raise PlyParseError("negative list length")
                    it = np.dtype("<" + p.dtype)
                    if pos + it.itemsize * k > len(body):
                        raise PlyParseError(f"truncated element {el.name!r}")
                    cols[p.name].append(np.frombuffer(body, it, k, pos).tolist())
                    pos += it.itemsize * k
                else:
                    st = np.dtype("<" + p.dtype)
                    if pos + st.itemsize > len(body):
                        raise PlyParseError(f"truncated element {el.name!r}")
                    cols[p.name].append(np.frombuffer(body, st, 1, pos)[0])
                    pos += st.itemsize
        out[el.name] = cols
    return out


def _faces_from(lists, n_vertices):
    if isinstance(lists, np.ndarray):
        polys = lists.astype(np.int64)
        if polys.shape[1] < 3:
            raise PlyParseError("face with fewer than 3 vertices")
        k = polys.shape[1]
        tris = np.concatenate(
            [np.stack([polys[:, 0], polys[:, i], polys[:, i + 1]], axis=1)
             for i in range(1, k - 1)], axis=0) if len(polys) else np.zeros((0, 3), np.int64)
        if k > 3 and len(polys):
            # keep fan order per face: face-major, then triangle
            tris = tris.reshape(k - 2, len(polys), 3).transpose(1, 0, 2).reshape(-1, 3)
    else:
        out = []
        for poly in lists:
            if len(poly) < 3:
                raise PlyParseError("face with fewer than 3 vertices")
            out.extend((poly[0], poly[i], poly[i + 1]) for i in range(1, len(poly) - 1))
        tris = np.array(out, dtype=np.int64).reshape(-1, 3)
    if tris.size and (tris.min() < 0 or tris.max() >= n_vertices):
        raise IndexOutOfRange("face index out of range")
    return tris


def parse_ply(data: bytes) -> TriangleMesh:
    data = bytes(data)
    fmt, elements, start = _parse_header(data)
    body = data[start:]
    cols = _read_ascii(body, elements) if fmt == "ascii" else _read_binary(body, elements)

    vert_el = next((e for e in elements if e.name == "vertex"), None)
    if vert_el is None:
        raise MalformedHeader("no vertex element")
    vcols = cols["vertex"]
    if not all(k in vcols for k in "xyz"):
        raise MalformedHeader("vertex element lacks x/y/z")
    v = np.stack([np.asarray(vcols[k], dtype=np.float64) for k in "xyz"], axis=1)
    v = v.reshape(-1, 3)
    if not np.all(np.isfinite(v)):
        raise PlyParseError("non-finite vertex coordinate")

    colors = None
    if all(k in vcols for k in ("red", "green", "blue")):
        prop_types = {p.name: p.dtype for p in vert_el.properties}
        c = np.stack([np.asarray(vcols[k], dtype=np.float64)
                      for k in ("red", "green", "blue")], axis=1).reshape(-1, 3)
        if prop_types["red"] == "u1":
            c = c / 255.0
        elif prop_types["red"] == "u2":
            c = c / 65535.0
        if not np.all(np.isfinite(c)):
            raise PlyParseError("non-finite color")
        colors = np.clip(c, 0.0, 1.0)

    normals = None
    if all(k in vcols for k in ("nx", "ny", "nz")):
        n = np.stack([np.asarray(vcols[k], dtype=np.float64)
                      for k in ("nx", "ny", "nz")], axis=1).reshape(-1, 3)
        length = np.linalg.norm(n, axis=1)
        if len(n) and np.all(np.isfinite(length)) and np.all(length > 0):
            normals = n / length[:, None]

    faces = np.zeros((0, 3), np.int64)
    if "face" in cols:
        fcols = cols["face"]
        key = next((k for k in ("vertex_indices", "vertex_index") if k in fcols), None)
        if key is None:
            raise MalformedHeader("face element lacks vertex_indices")
        faces = _faces_from(fcols[key], len(v))
    return TriangleMesh(v, faces, normals, colors)


def _fits_float32(a: np.ndarray) -> bool:
    return bool(np.all(a.astype(np.float32).astype(np.float64) == a))


def write_ply(mesh: TriangleMesh, binary: bool = True) -> bytes:
    """Serialize ``mesh``.

    Positions are stored as ``float`` when every coordinate is exactly
    representable in float32 and as ``double`` otherwise, so parsing the
    output reproduces the positions bit for bit.
    """
    v = mesh.vertices
    real = "float" if _fits_float32(v) else "double"
    real_dt = "<f4" if real == "float" else "<f8"
    header = [
        "ply",
        "format " + ("binary_little_endian" if binary else "ascii") + " 1.0",
        "comment written by recon_eval",
        f"element vertex {len(v)}",
        f"property {real} x", f"property {real} y", f"property {real} z",
    ]
    fields = [("x", real_dt), ("y", real_dt), ("z", real_dt)]
    if mesh.normals is not None:
        header += [f"property {real} nx", f"property {real} ny", f"property {real} nz"]
        fields += [("nx", real_dt), ("ny", real_dt), ("nz", real_dt)]
    if mesh.colors is not None:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    header += [f"element face {mesh.n_faces}",
               "property list uchar int vertex_indices", "end_header"]
    head = ("\n".join(header) + "\n").encode("ascii")

    rows = np.zeros(len(v), dtype=fields)
    for i, k in enumerate("xyz"):
        rows[k] = v[:, i]
    if mesh.normals is not None:
        for i, k in enumerate(("nx", "ny", "nz")):
            rows[k] = mesh.normals[:, i]
    if mesh.colors is not None:
        c8 = np.round(mesh.colors * 255.0).astype(np.uint8)
        for i, k in enumerate(("red", "green", "blue")):
            rows[k] = c8[:, i]

    if binary:
        frows = np.zeros(mesh.n_faces, dtype=[("n", "u1"), ("idx", "<i4", (3,))])
        frows["n"] = 3
        frows["idx"] = mesh.faces
        return head + rows.tobytes() + frows.tobytes()

    lines = []
    names = [f[0] for f in fields]
    for row in rows.tolist():
        parts = []
        for name, val in zip(names, row):
            if name in ("red", "green", "blue"):
                parts.append(str(int(val)))
            else:
                # repr is the shortest string that round-trips
                parts.append(repr(float(np.float32(val))) if real == "float" else repr(val))
        lines.append(" ".join(parts))
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.faces.tolist()]
    return head + ("\n".join(lines) + "\n").encode("ascii") if lines else head
