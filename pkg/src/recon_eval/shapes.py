"""Closed-form test solids (outward-facing, counter-clockwise winding)."""

import numpy as np

from .mesh import TriangleMesh


def box(lo=(-0.5, -0.5, -0.5), hi=(0.5, 0.5, 0.5)) -> TriangleMesh:
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], float)
    v = lo + corners * (hi - lo)
    # vertex index = 4x + 2y + z
    faces = [
        (0, 1, 3), (0, 3, 2),  # x = lo
        (4, 6, 7), (4, 7, 5),  # x = hi
        (0, 4, 5), (0, 5, 1),  # y = lo
        (2, 3, 7), (2, 7, 6),  # y = hi
        (0, 2, 6), (0, 6, 4),  # z = lo
        (1, 5, 7), (1, 7, 3),  # z = hi
    ]
    return TriangleMesh(v, np.array(faces))


def icosphere(subdivisions: int = 3, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
             (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
             (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    verts = [np.array(p, float) / np.linalg.norm(p) for p in verts]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    for _ in range(subdivisions):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    v = np.array(verts) * radius + np.asarray(center, float)
    return TriangleMesh(v, np.array(faces))


def quad(half: float, depth: float) -> TriangleMesh:
    """Square of side ``2 * half`` in the plane x = ``depth``."""
    h = half
    v = [(depth, -h, -h), (depth, h, -h), (depth, h, h), (depth, -h, h)]
    return TriangleMesh(np.array(v, float), np.array([(0, 1, 2), (0, 2, 3)]))
