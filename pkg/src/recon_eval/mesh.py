"""Canonical in-memory triangle mesh."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .errors import IndexOutOfRange, InvalidMesh

NORMAL_TOL = 1e-4


class MeshFormat(Enum):
    OBJ = "obj"
    PLY_ASCII = "ply_ascii"
    PLY_BINARY_LE = "ply_binary_le"
    GLB = "glb"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Indexed triangle mesh.

    Arrays are copied on construction and made read-only, so a mesh can be
    shared between threads. ``faces`` may be empty.

    Attributes:
        vertices: (V, 3) float64 positions.
        faces: (F, 3) int64 vertex indices.
        normals: optional (V, 3) unit vectors.
        colors: optional (V, 3) RGB in [0, 1].
    """

    vertices: np.ndarray
    faces: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), np.int64))
    normals: Optional[np.ndarray] = None
    colors: Optional[np.ndarray] = None

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(v)):
            raise InvalidMesh("vertex coordinates must be finite")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise IndexOutOfRange(
                f"face index out of range for {len(v)} vertices")
        object.__setattr__(self, "vertices", _frozen(v))
        object.__setattr__(self, "faces", _frozen(f))

        if self.normals is not None:
            n = np.array(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(n) != len(v):
                raise InvalidMesh("normal count must equal vertex count")
            if not np.all(np.isfinite(n)):
                raise InvalidMesh("normals must be finite")
            if len(n) and np.max(np.abs(np.linalg.norm(n, axis=1) - 1.0)) > NORMAL_TOL:
                raise InvalidMesh("normals must be unit length")
            object.__setattr__(self, "normals", _frozen(n))
        if self.colors is not None:
            c = np.array(self.colors, dtype=np.float64).reshape(-1, 3)
            if len(c) != len(v):
                raise InvalidMesh("color count must equal vertex count")
            if not np.all(np.isfinite(c)) or (len(c) and (c.min() < 0 or c.max() > 1)):
                raise InvalidMesh("colors must lie in [0, 1]")
            object.__setattr__(self, "colors", _frozen(c))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def triangles(self) -> np.ndarray:
        """(F, 3, 3) corner positions per face."""
        return self.vertices[self.faces]

    def face_areas(self) -> np.ndarray:
        tri = self.triangles
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def with_vertices(self, vertices) -> "TriangleMesh":
        """Copy with new positions; normals and colors are kept."""
        return TriangleMesh(vertices, self.faces, self.normals, self.colors)

    def with_colors(self, colors) -> "TriangleMesh":
        return TriangleMesh(self.vertices, self.faces, self.normals, colors)

    def __repr__(self):
        return f"TriangleMesh(n_vertices={self.n_vertices}, n_faces={self.n_faces})"


def fan_triangulate(polygon) -> list:
    """Split an n-gon into n - 2 triangles sharing its first vertex."""
    first = polygon[0]
    return [(first, polygon[i], polygon[i + 1]) for i in range(1, len(polygon) - 1)]
