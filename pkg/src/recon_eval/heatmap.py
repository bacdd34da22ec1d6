"""Per-vertex error colouring, blue (low) to red (high)."""

import math

import numpy as np

from .geometry import KdIndex, make_rng, sample_surface
from .mesh import TriangleMesh

BLUE = np.array([0.0, 0.0, 1.0])
RED = np.array([1.0, 0.0, 0.0])
STREAM_HEATMAP = 4


def sampling_noise_floor(area: float, n_samples: int, n_queries: int) -> float:
    """Distance below which a nearest-sample distance is explained by the
    sampling density alone.

    For a Poisson sample of density ``rho`` on a surface, P(d > r) is about
    exp(-pi r^2 rho); the bound keeps the chance that any of ``n_queries``
    exceeds it under 1e-3. The 1.25 factor covers cube-like corners, where
    only three quarters of the disk around a vertex lies on the surface.
    """
    rho = n_samples / area
    return 1.25 * math.sqrt(math.log(1000.0 * max(n_queries, 2)) / (math.pi * rho))


def vertex_errors(recon: TriangleMesh, gt: TriangleMesh, gt_samples: int = 50_000,
                  seed: int = 0) -> np.ndarray:
    """Distance from each recon vertex to a dense sample of the GT surface."""
    cloud = sample_surface(gt, gt_samples, make_rng(seed, STREAM_HEATMAP))
    return np.sqrt(KdIndex(cloud).query(recon.vertices)[1])


def error_colors(d: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Map distances to the blue-red ramp, normalized to this object's range.

    A range that is empty, or whose maximum lies below ``floor``, maps every
    vertex to blue.
    """
    d = np.asarray(d, dtype=np.float64)
    if not len(d):
        return np.zeros((0, 3))
    lo, hi = d.min(), d.max()
    if hi == lo or hi <= floor:
        t = np.zeros_like(d)
    else:
        t = np.clip((d - lo) / (hi - lo), 0.0, 1.0)
    return (1.0 - t)[:, None] * BLUE + t[:, None] * RED


def colorize_error(recon: TriangleMesh, gt: TriangleMesh, gt_samples: int = 50_000,
                   seed: int = 0) -> TriangleMesh:
    """Return ``recon`` with per-vertex colors encoding distance to ``gt``.

    Both meshes are expected to be aligned already (see ``align_pair``).
    """
    d = vertex_errors(recon, gt, gt_samples, seed)
    floor = sampling_noise_floor(float(gt.face_areas().sum()), gt_samples, recon.n_vertices)
    return recon.with_colors(error_colors(d, floor))
