"""Mesh readers and writers for OBJ, PLY and GLB."""

from pathlib import Path
from typing import Optional

from ..errors import UnknownFormat
from ..mesh import MeshFormat, TriangleMesh
from .glb import GLB_MAGIC, parse_glb, write_glb
from .obj import looks_like_obj, parse_obj, write_obj
from .ply import parse_ply, write_ply

__all__ = [
    "detect_format", "load_mesh", "read_mesh", "save_mesh",
    "parse_glb", "parse_obj", "parse_ply",
    "write_glb", "write_obj", "write_ply",
]


def detect_format(data: bytes) -> MeshFormat:
    """Identify the container from its leading bytes.

    Raises:
        UnknownFormat: no magic matches and the bytes are not OBJ text.
    """
    data = bytes(data)
    if len(data) >= 4 and int.from_bytes(data[:4], "little") == GLB_MAGIC:
        return MeshFormat.GLB
    if data.startswith(b"ply"):
        head = data[:1024]
        if b"binary_little_endian" in head or b"binary_big_endian" in head:
            return MeshFormat.PLY_BINARY_LE
        return MeshFormat.PLY_ASCII
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise UnknownFormat("bytes match no known mesh format") from None
    if not looks_like_obj(text):
        raise UnknownFormat("bytes match no known mesh format")
    return MeshFormat.OBJ


def load_mesh(data: bytes, hint: Optional[MeshFormat] = None) -> TriangleMesh:
    """Parse mesh bytes, dispatching on ``hint`` or on the magic bytes."""
    if not data:
        raise UnknownFormat("empty input")
    fmt = hint or detect_format(data)
    if fmt is MeshFormat.GLB:
        return parse_glb(data)
    if fmt in (MeshFormat.PLY_ASCII, MeshFormat.PLY_BINARY_LE):
        return parse_ply(data)
    return parse_obj(data)


def read_mesh(path) -> TriangleMesh:
    return load_mesh(Path(path).read_bytes())


def save_mesh(mesh: TriangleMesh, path, binary: bool = True) -> None:
    """Write ``mesh`` in the format implied by the path suffix."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".ply":
        data = write_ply(mesh, binary=binary)
    elif suffix == ".obj":
        data = write_obj(mesh)
    elif suffix == ".glb":
        data = write_glb(mesh)
    else:
        raise ValueError(f"unsupported output suffix {suffix!r}")
    path.write_bytes(data)
