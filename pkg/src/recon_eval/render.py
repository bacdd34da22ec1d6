"""Deterministic software rasterizer for headless view generation."""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .errors import DegenerateExtent, RenderConfigError
from .mesh import TriangleMesh

SUBPIXEL = 256.0  # screen positions snap to 1/256 px so edge tests are exact


@dataclass(frozen=True)
class Camera:
    position: Tuple[float, float, float]
    target: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    up: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    vertical_fov: float = math.radians(45.0)
    near: float = 0.01
    far: float = 100.0

    def __post_init__(self):
        for name in ("position", "target", "up"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        f = np.subtract(self.target, self.position)
        if not np.linalg.norm(f) > 0:
            raise RenderConfigError("camera position equals target")
        if np.linalg.norm(np.cross(f / np.linalg.norm(f), self.up)) < 1e-9:
            raise RenderConfigError("up vector is parallel to the view direction")
        if not 0 < self.vertical_fov < math.pi:
            raise RenderConfigError("vertical_fov must be in (0, pi)")
        if not 0 < self.near < self.far:
            raise RenderConfigError("need 0 < near < far")

    def basis(self):
        """(right, true up, forward) unit vectors in world space."""
        f = np.subtract(self.target, self.position)
        f /= np.linalg.norm(f)
        r = np.cross(f, self.up)
        r /= np.linalg.norm(r)
        return r, np.cross(r, f), f


@dataclass(frozen=True)
class RenderConfig:
    width: int = 512
    height: int = 512
    background: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    light_direction: Tuple[float, float, float] = (0.267261, 0.534522, 0.801784)
    ambient: float = 0.3
    diffuse: float = 0.7

    def __post_init__(self):
        if int(self.width) < 1 or int(self.height) < 1:
            raise RenderConfigError("image size must be at least 1x1")
        bg = tuple(float(x) for x in self.background)
        if len(bg) != 3 or not all(0.0 <= x <= 1.0 for x in bg):
            raise RenderConfigError("background must be RGB in [0, 1]")
        light = np.asarray(self.light_direction, float)
        if light.shape != (3,) or not np.linalg.norm(light) > 0:
            raise RenderConfigError("light_direction must be a non-zero 3-vector")
        if not (0 <= self.ambient <= 1 and 0 <= self.diffuse <= 1):
            raise RenderConfigError("ambient and diffuse must lie in [0, 1]")
        if self.ambient + self.diffuse > 1 + 1e-12:
            raise RenderConfigError("ambient + diffuse must not exceed 1")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "background", bg)
        object.__setattr__(self, "light_direction",
                           tuple((light / np.linalg.norm(light)).tolist()))


@dataclass(frozen=True, eq=False)
class Image:
    """Row-major float RGB raster with values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.array(self.pixels, dtype=np.float64)
        if p.ndim != 3 or p.shape[2] != 3:
            raise ValueError("image must have shape (height, width, 3)")
        if p.size and (not np.all(np.isfinite(p)) or p.min() < 0 or p.max() > 1):
            raise ValueError("pixel values must lie in [0, 1]")
        p.setflags(write=False)
        object.__setattr__(self, "pixels", p)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @classmethod
    def filled(cls, width, height, rgb) -> "Image":
        return cls(np.broadcast_to(np.asarray(rgb, float), (height, width, 3)))


def orbit_poses(n_azimuth: int, elevations: Sequence[float], distance: float,
                vertical_fov: float = math.radians(45.0)) -> List[Camera]:
    """Cameras on a sphere of radius ``distance`` looking at the origin.

    Azimuth ``2*pi*k/n_azimuth`` is measured from +x towards +y; up is +z,
    or +x when looking straight along the z axis.
    """
    if n_azimuth < 1:
        raise RenderConfigError("n_azimuth must be >= 1")
    if not distance > 0:
        raise RenderConfigError("distance must be positive")
    cams = []
    for el in elevations:
        ce, se = math.cos(el), math.sin(el)
        for k in range(n_azimuth):
            az = 2.0 * math.pi * k / n_azimuth
            pos = (distance * ce * math.cos(az), distance * ce * math.sin(az), distance * se)
            up = (1.0, 0.0, 0.0) if abs(ce) < 1e-9 else (0.0, 0.0, 1.0)
            cams.append(Camera(pos, (0.0, 0.0, 0.0), up, vertical_fov,
                               near=distance * 1e-3, far=distance * 10.0))
    return cams


def fit_distance(mesh: TriangleMesh, vertical_fov: float, margin: float = 1.2) -> float:
    """Camera distance at which the bounding sphere (centered on the AABB
    center) fills the vertical field of view, times ``margin``."""
    if margin < 1:
        raise RenderConfigError("margin must be >= 1")
    if mesh.n_vertices == 0:
        raise DegenerateExtent("mesh has no vertices")
    v = mesh.vertices
    center = 0.5 * (v.min(axis=0) + v.max(axis=0))
    r = float(np.max(np.linalg.norm(v - center, axis=1)))
    if r == 0:
        raise DegenerateExtent("mesh has zero extent")
    return margin * r / math.tan(vertical_fov / 2.0)


def _project(vertices, camera: Camera, width, height):
    r, u, f = camera.basis()
    rel = vertices - np.asarray(camera.position)
    x, y, z = rel @ r, rel @ u, rel @ f
    t = math.tan(camera.vertical_fov / 2.0)
    aspect = width / height
    with np.errstate(divide="ignore", invalid="ignore"):
        ndc_x = x / (z * t * aspect)
        ndc_y = y / (z * t)
    sx = (ndc_x + 1.0) * 0.5 * width
    sy = (1.0 - ndc_y) * 0.5 * height
    sx = np.round(sx * SUBPIXEL) / SUBPIXEL
    sy = np.round(sy * SUBPIXEL) / SUBPIXEL
    return sx, sy, z


def _accepts_zero(dx, dy) -> bool:
    # top edge (horizontal, interior below) or left edge
    return dy < 0 or (dy == 0 and dx > 0)


def render(mesh: TriangleMesh, camera: Camera, config: RenderConfig = RenderConfig()) -> Image:
    """Z-buffered flat-shaded render of ``mesh``.

    Back faces are not culled; each face is lit from the side facing the
    camera. Triangles with a vertex in front of the near plane are dropped.
    """
    w, h = config.width, config.height
    color = np.empty((h, w), np.float64)
    depth = np.full((h, w), np.inf)
    filled = np.zeros((h, w), bool)
    if mesh.n_faces == 0:
        return Image.filled(w, h, config.background)

    sx, sy, z = _project(mesh.vertices, camera, w, h)
    r, u, f = camera.basis()
    lx, ly, lz = config.light_direction
    light = lx * r + ly * u - lz * f  # camera space +z points back at the viewer

    tri = mesh.triangles
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    length = np.linalg.norm(normals, axis=1)
    normals = normals / np.where(length > 0, length, 1.0)[:, None]
    to_cam = np.asarray(camera.position) - tri.mean(axis=1)
    facing = np.einsum("ij,ij->i", normals, to_cam)
    normals[facing < 0] *= -1.0
    shade = config.ambient + config.diffuse * np.maximum(0.0, normals @ light)
    shade = np.clip(shade, 0.0, config.ambient + config.diffuse)

    for i, (a, b, c) in enumerate(mesh.faces.tolist()):
        za, zb, zc = z[a], z[b], z[c]
        if min(za, zb, zc) < camera.near or max(za, zb, zc) > camera.far:
            continue
        x0, y0, x1, y1, x2, y2 = sx[a], sy[a], sx[b], sy[b], sx[c], sy[c]
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area == 0 or not np.isfinite(area):
            continue
        if area < 0:
            x1, y1, x2, y2, zb, zc = x2, y2, x1, y1, zc, zb
            area = -area
        px0 = max(int(math.floor(min(x0, x1, x2) - 0.5)), 0)
        px1 = min(int(math.ceil(max(x0, x1, x2) - 0.5)), w - 1)
        py0 = max(int(math.floor(min(y0, y1, y2) - 0.5)), 0)
        py1 = min(int(math.ceil(max(y0, y1, y2) - 0.5)), h - 1)
        if px0 > px1 or py0 > py1:
            continue
        cx = np.arange(px0, px1 + 1) + 0.5
        cy = (np.arange(py0, py1 + 1) + 0.5)[:, None]

        inside = np.ones((len(cy), len(cx)), bool)
        bary = []
        for (ax, ay), (bx, by) in (((x1, y1), (x2, y2)), ((x2, y2), (x0, y0)),
                                   ((x0, y0), (x1, y1))):
            dx, dy = bx - ax, by - ay
            e = dx * (cy - ay) - dy * (cx - ax)
            inside &= (e > 0) | ((e == 0) & _accepts_zero(dx, dy))
            bary.append(e)
        if not inside.any():
            continue
        # perspective-correct depth: 1/z is affine in screen space
        inv_z = (bary[0] / za + bary[1] / zb + bary[2] / zc) / area
        frag_z = 1.0 / inv_z
        sub = depth[py0:py1 + 1, px0:px1 + 1]
        win = inside & (frag_z < sub) & (frag_z >= camera.near) & (frag_z <= camera.far)
        sub[win] = frag_z[win]
        color[py0:py1 + 1, px0:px1 + 1][win] = shade[i]
        filled[py0:py1 + 1, px0:px1 + 1] |= win

    out = np.empty((h, w, 3))
    out[:] = np.asarray(config.background)
    out[filled] = color[filled][:, None]
    return Image(out)


def _png_chunk(kind: bytes, payload: bytes) -> bytes:
    return (struct.pack(">I", len(payload)) + kind + payload
            + struct.pack(">I", zlib.crc32(kind + payload) & 0xFFFFFFFF))


def quantize(img: Image) -> np.ndarray:
    return np.round(img.pixels * 255.0).astype(np.uint8)


def encode_png(img: Image) -> bytes:
    """8-bit RGB PNG; channel value ``round(v * 255)``."""
    q = quantize(img)
    h, w = q.shape[:2]
    raw = np.concatenate([np.zeros((h, 1), np.uint8), q.reshape(h, w * 3)], axis=1)
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return (b"\x89PNG\r\n\x1a\n" + _png_chunk(b"IHDR", ihdr)
            + _png_chunk(b"IDAT", zlib.compress(raw.tobytes(), 9))
            + _png_chunk(b"IEND", b""))


def write_views(images: Sequence[Image], out_dir, stem: str) -> List[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, img in enumerate(images):
        p = out_dir / f"{stem}_view{k}.png"
        p.write_bytes(encode_png(img))
        paths.append(p)
    return paths
