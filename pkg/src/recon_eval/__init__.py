"""Evaluation toolkit for single-view 3D reconstruction.

Renders matched views of ground-truth and reconstructed meshes, computes
PSNR/SSIM/LPIPS on the renders and IoU/Chamfer/Hausdorff on the geometry,
and aggregates per-model summary tables.
"""

from .geometry import (Aabb, KdIndex, PointCloud, RayIndex, SimilarityTransform, make_rng,
                       nearest, normalize_mesh, point_in_mesh, points_in_mesh, sample_surface)
from .heatmap import colorize_error
from .mesh import MeshFormat, TriangleMesh
from .mesh_io import load_mesh, parse_glb, parse_ply, read_mesh, write_ply
from .metrics_2d import SsimParams, lpips, psnr, ssim
from .metrics_3d import (Metric3dConfig, align_pair, chamfer_distance, evaluate_geometry,
                         hausdorff_distance, volumetric_iou)
from .render import Camera, Image, RenderConfig, encode_png, fit_distance, orbit_poses, render

__version__ = "0.1.0"
