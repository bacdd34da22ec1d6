"""Shared geometric kernel: normalization, surface sampling, nearest
neighbours and point containment."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateExtent, EmptyCloud, NoSurface
from .mesh import TriangleMesh

DEGENERATE_AREA_FRACTION = 1e-12
N_RAYS = 3


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Deterministic generator for ``seed``; ``stream`` selects an
    independent sub-stream so callers never share generator state."""
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(s) for s in stream]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))


@dataclass(frozen=True)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    @classmethod
    def of(cls, points) -> "Aabb":
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if not len(pts):
            raise EmptyCloud("bounding box of an empty point set")
        return cls(pts.min(axis=0), pts.max(axis=0))

    @property
    def extent(self) -> np.ndarray:
        return self.max - self.min

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min + self.max)

    def union(self, other: "Aabb") -> "Aabb":
        return Aabb(np.minimum(self.min, other.min), np.maximum(self.max, other.max))

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return np.all((p >= self.min) & (p <= self.max), axis=1)


@dataclass(frozen=True)
class SimilarityTransform:
    """``x -> scale * x + translation`` with ``scale > 0``."""

    scale: float
    translation: np.ndarray

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "translation",
                           np.asarray(self.translation, dtype=np.float64).reshape(3))

    def apply(self, points) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) * self.scale + self.translation

    def inverse(self) -> "SimilarityTransform":
        return SimilarityTransform(1.0 / self.scale, -self.translation / self.scale)


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray

    def __post_init__(self):
        p = np.array(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(p)):
            raise ValueError("point coordinates must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    def __len__(self):
        return len(self.points)


def as_points(cloud) -> np.ndarray:
    if isinstance(cloud, PointCloud):
        return cloud.points
    return np.asarray(cloud, dtype=np.float64).reshape(-1, 3)


def normalize_mesh(mesh: TriangleMesh) -> Tuple[TriangleMesh, SimilarityTransform]:
    """Center the bounding box at the origin and scale its longest edge to 1.

    The longest axis is mapped to exactly [-0.5, 0.5].

    Returns:
        The normalized mesh and the transform from original coordinates.

    Raises:
        DegenerateExtent: every bounding-box extent is zero.
    """
    if mesh.n_vertices == 0:
        raise DegenerateExtent("mesh has no vertices")
    v = mesh.vertices
    lo, hi = v.min(axis=0), v.max(axis=0)
    extent = hi - lo
    longest = float(extent.max())
    if longest == 0.0:
        raise DegenerateExtent("all bounding-box extents are zero")
    offset = extent / (2.0 * longest)
    out = (v - lo) / longest - offset
    transform = SimilarityTransform(1.0 / longest, -lo / longest - offset)
    return mesh.with_vertices(out), transform


def sample_surface(mesh: TriangleMesh, n: int, rng: np.random.Generator,
                   return_faces: bool = False):
    """Draw ``n`` points uniformly over the surface area of ``mesh``.

    Triangles whose area is below 1e-12 of the total get zero weight.

    Args:
        mesh: source surface.
        n: number of points.
        rng: generator owned by the caller.
        return_faces: also return the face index of every sample.

    Raises:
        NoSurface: the mesh has no triangle with positive area.
    """
    if n < 0:
        raise ValueError("sample count must be non-negative")
    areas = mesh.face_areas() if mesh.n_faces else np.zeros(0)
    total = float(areas.sum())
    if not total > 0:
        raise NoSurface("mesh has zero surface area")
    weights = np.where(areas < DEGENERATE_AREA_FRACTION * total, 0.0, areas)
    cum = np.cumsum(weights)
    pick = rng.random(n) * cum[-1]
    face = np.minimum(np.searchsorted(cum, pick, side="right"), len(cum) - 1)

    uv = rng.random((n, 2))
    flip = uv.sum(axis=1) > 1.0
    uv[flip] = 1.0 - uv[flip]
    tri = mesh.triangles[face]
    pts = tri[:, 0] + uv[:, :1] * (tri[:, 1] - tri[:, 0]) + uv[:, 1:] * (tri[:, 2] - tri[:, 0])
    cloud = PointCloud(pts)
    return (cloud, face) if return_faces else cloud


class KdIndex:
    """Balanced k-d tree (median splits) over a point cloud.

    Distances are recomputed from the returned neighbour so they match a
    plain ``sqrt(dx² + dy² + dz²)`` evaluation exactly.
    """

    def __init__(self, cloud):
        pts = as_points(cloud)
        if not len(pts):
            raise EmptyCloud("cannot index an empty point cloud")
        self.points = pts
        self._tree = cKDTree(pts, balanced_tree=True, compact_nodes=True)

    def __len__(self):
        return len(self.points)

    def query(self, queries) -> Tuple[np.ndarray, np.ndarray]:
        """Nearest indexed point for every row of ``queries``.

        Returns:
            (indices, squared distances)
        """
        q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        if not len(q):
            return np.zeros(0, np.int64), np.zeros(0)
        _, idx = self._tree.query(q, k=1)
        diff = self.points[idx] - q
        return idx.astype(np.int64), np.sum(diff * diff, axis=1)


def nearest(index: KdIndex, query) -> Tuple[int, float]:
    idx, sq = index.query(np.asarray(query, dtype=np.float64).reshape(1, 3))
    return int(idx[0]), float(np.sqrt(sq[0]))


class RayIndex:
    """Triangle soup prepared for batched ray-parity containment queries.

    For each ray direction the triangles are projected onto the plane
    orthogonal to it and binned into a uniform 2D grid, so a query point
    only runs the ray/triangle test against triangles in its own cell.
    """

    def __init__(self, mesh: TriangleMesh):
        if mesh.n_faces == 0:
            raise NoSurface("containment needs at least one triangle")
        self.triangles = mesh.triangles
        self.bounds = Aabb.of(mesh.vertices)

    def _grid(self, direction):
        # orthonormal frame (e1, e2, direction)
        helper = np.eye(3)[np.argmin(np.abs(direction))]
        e1 = np.cross(direction, helper)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(direction, e1)
        frame = np.stack([e1, e2])
        proj = self.triangles @ frame.T  # (F, 3, 2)
        lo = proj.min(axis=(0, 1))
        hi = proj.max(axis=(0, 1))
        n_side = int(np.clip(np.sqrt(len(proj)) * 1.5, 1, 1024))
        cell = np.maximum((hi - lo) / n_side, 1e-300)

        tlo = np.clip(((proj.min(axis=1) - lo) / cell).astype(np.int64), 0, n_side - 1)
        thi = np.clip(((proj.max(axis=1) - lo) / cell).astype(np.int64), 0, n_side - 1)
        spans = (thi - tlo + 1)
        per_tri = spans[:, 0] * spans[:, 1]
        tri_id = np.repeat(np.arange(len(proj)), per_tri)
        local = np.arange(per_tri.sum()) - np.repeat(np.cumsum(per_tri) - per_tri, per_tri)
        w = spans[tri_id, 1]
        cx = tlo[tri_id, 0] + local // w
        cy = tlo[tri_id, 1] + local % w
        cell_id = cx * n_side + cy
        order = np.argsort(cell_id, kind="stable")
        starts = np.searchsorted(cell_id[order], np.arange(n_side * n_side + 1))
        return frame, lo, cell, n_side, tri_id[order], starts, _ray_setup(self.triangles, direction)

    def _crossings(self, points, direction, grid) -> np.ndarray:
        frame, lo, cell, n_side, cell_tris, starts, setup = grid
        q = points @ frame.T
        c = np.floor((q - lo) / cell).astype(np.int64)
        ok = np.all((c >= 0) & (c < n_side), axis=1)
        counts = np.zeros(len(points), np.int64)
        if not ok.any():
            return counts
        pid = np.nonzero(ok)[0]
        cid = c[pid, 0] * n_side + c[pid, 1]
        n_cand = starts[cid + 1] - starts[cid]
        pair_p = np.repeat(pid, n_cand)
        first = np.repeat(starts[cid], n_cand)
        pos = np.arange(n_cand.sum()) - np.repeat(np.cumsum(n_cand) - n_cand, n_cand)
        pair_t = cell_tris[first + pos]
        hit = _moller_trumbore(points[pair_p], direction, self.triangles[pair_t],
                               setup=tuple(a[pair_t] for a in setup))
        np.add.at(counts, pair_p[hit], 1)
        return counts

    def contains(self, points, rng: np.random.Generator = None, directions=None,
                 chunk: int = 65536) -> np.ndarray:
        """Majority vote of ray-crossing parity over three ray directions.

        Directions are drawn from ``rng`` unless given explicitly; one set
        of directions serves the whole batch.
        """
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        dirs = random_directions(rng) if directions is None else np.asarray(directions, float)
        inside = np.zeros(len(pts), bool)
        cand = np.nonzero(self.bounds.contains(pts))[0]
        if not len(cand):
            return inside
        grids = [self._grid(d) for d in dirs]
        for s in range(0, len(cand), chunk):
            idx = cand[s:s + chunk]
            votes = sum((self._crossings(pts[idx], d, g) & 1) for d, g in zip(dirs, grids))
            inside[idx] = votes * 2 > N_RAYS
        return inside


def random_directions(rng: np.random.Generator, n: int = N_RAYS) -> np.ndarray:
    d = rng.normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _ray_setup(tris, direction, eps=1e-12):
    """Per-triangle terms of the ray test that depend only on the direction."""
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    pvec = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    valid = np.abs(det) > eps * np.maximum(
        np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1), 1e-300)
    inv = np.where(valid, 1.0 / np.where(valid, det, 1.0), 0.0)
    return e1, e2, pvec, inv, valid


def _moller_trumbore(origins, direction, tris, eps=1e-12, setup=None) -> np.ndarray:
    """Rows where the ray ``origin + t * direction`` (t > 0) hits the triangle."""
    e1, e2, pvec, inv, valid = _ray_setup(tris, direction, eps) if setup is None else setup
    tvec = origins - tris[:, 0]
    u = np.einsum("ij,ij->i", tvec, pvec) * inv
    qvec = np.cross(tvec, e1)
    v = (qvec @ direction) * inv
    t = np.einsum("ij,ij->i", e2, qvec) * inv
    return valid & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)


def point_in_mesh(index: RayIndex, p, rng: np.random.Generator) -> bool:
    return bool(index.contains(np.asarray(p, dtype=np.float64).reshape(1, 3), rng)[0])


def points_in_mesh(index: RayIndex, points, rng: np.random.Generator) -> np.ndarray:
    return index.contains(points, rng)
