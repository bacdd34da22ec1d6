import io
import math

import numpy as np
import pytest
from PIL import Image as PILImage

from recon_eval.errors import DegenerateExtent, RenderConfigError
from recon_eval.mesh import TriangleMesh
from recon_eval.render import (Camera, Image, RenderConfig, encode_png, fit_distance,
                               orbit_poses, render)
from recon_eval.shapes import box, icosphere, quad

from oracles import cube_face_silhouette_pixels

FOV = math.radians(45)


def test_orbit_four_azimuths():
    cams = orbit_poses(4, [0.0], 3.0)
    expected = [(3, 0, 0), (0, 3, 0), (-3, 0, 0), (0, -3, 0)]
    for cam, e in zip(cams, expected):
        assert np.allclose(cam.position, e, atol=1e-12)
        assert cam.target == (0, 0, 0)
        assert cam.up == (0, 0, 1)


def test_orbit_distance_invariant():
    for cam in orbit_poses(7, [0.3, -0.9, 1.2], 2.5):
        assert abs(np.linalg.norm(np.subtract(cam.position, cam.target)) - 2.5) <= 1e-9


def test_orbit_pole_fallback():
    (cam,) = orbit_poses(1, [math.pi / 2], 3.0)
    assert np.allclose(cam.position, (0, 0, 3), atol=1e-12)
    assert cam.up == (1, 0, 0)


def test_orbit_rejects_bad_args():
    with pytest.raises(RenderConfigError):
        orbit_poses(0, [0], 1)
    with pytest.raises(RenderConfigError):
        orbit_poses(1, [0], 0)


def test_fit_distance_closed_forms():
    sphere = icosphere(3, radius=0.5)
    assert fit_distance(sphere, math.pi / 2, 1.0) == pytest.approx(0.5, abs=1e-12)
    assert fit_distance(sphere, math.pi / 2, 1.5) == pytest.approx(0.75, abs=1e-12)
    assert fit_distance(sphere, math.pi / 4, 1.0) == pytest.approx(1.2071, abs=1e-4)


def test_fit_distance_degenerate():
    with pytest.raises(DegenerateExtent):
        fit_distance(TriangleMesh([[1, 1, 1]]), FOV)


def test_camera_validation():
    with pytest.raises(RenderConfigError):
        Camera((0, 0, 0), (0, 0, 0))
    with pytest.raises(RenderConfigError):
        Camera((0, 0, 5), (0, 0, 0), up=(0, 0, 1))
    with pytest.raises(RenderConfigError):
        RenderConfig(ambient=0.6, diffuse=0.6)
    with pytest.raises(RenderConfigError):
        RenderConfig(width=0)


def test_empty_mesh_is_background():
    cfg = RenderConfig(16, 12, background=(0.2, 0.4, 0.6))
    img = render(TriangleMesh(np.zeros((0, 3))), Camera((3, 0, 0)), cfg)
    assert img.pixels.shape == (12, 16, 3)
    assert np.all(img.pixels == [0.2, 0.4, 0.6])


def test_z_buffer_nearer_square_wins():
    """Two coaxial squares, the nearer one smaller and tilted so it shades
    differently: center pixels must show the nearer square."""
    cfg = RenderConfig(64, 64, background=(0, 0, 0), light_direction=(0, 1, 1),
                       ambient=0.1, diffuse=0.5)
    far = quad(0.8, -1.0)
    near = quad(0.2, 1.0)
    near = near.with_vertices(near.vertices + [[0, 0, 0], [0, 0, 0], [0.3, 0, 0], [0.3, 0, 0]])
    both = TriangleMesh(np.vstack([far.vertices, near.vertices]),
                        np.vstack([far.faces, near.faces + 4]))
    cam = Camera((5, 0, 0))
    far_only = render(far, cam, cfg).pixels
    near_only = render(near, cam, cfg).pixels
    img = render(both, cam, cfg).pixels
    assert not np.array_equal(far_only[32, 32], near_only[32, 32])
    assert np.array_equal(img[28:36, 28:36], near_only[28:36, 28:36])
    assert np.array_equal(img[4, 32], far_only[4, 32])


def test_depth_order_independent_of_submission_order():
    cfg = RenderConfig(40, 40, light_direction=(0, 1, 1), ambient=0.1, diffuse=0.5)
    a = quad(0.5, 0.5)
    b = quad(0.3, -0.5)
    b = b.with_vertices(b.vertices + [[0, 0, 0], [0.2, 0, 0], [0.2, 0, 0], [0, 0, 0]])
    ab = TriangleMesh(np.vstack([a.vertices, b.vertices]), np.vstack([a.faces, b.faces + 4]))
    ba = TriangleMesh(np.vstack([b.vertices, a.vertices]), np.vstack([b.faces, a.faces + 4]))
    cam = Camera((4, 0, 0))
    assert np.array_equal(render(ab, cam, cfg).pixels, render(ba, cam, cfg).pixels)


def test_cube_silhouette_matches_projection():
    cube = box()
    d = fit_distance(cube, FOV, 1.2)
    img = render(cube, Camera((d, 0, 0), vertical_fov=FOV), RenderConfig(256, 256))
    count = np.count_nonzero(np.any(img.pixels != 1.0, axis=2))
    expected = cube_face_silhouette_pixels(d, FOV, 256)
    assert abs(count / expected - 1) <= 0.02


def test_shared_edges_leave_no_gaps_or_overlaps():
    # a square split into two triangles must be filled exactly once per pixel
    cfg = RenderConfig(50, 50, light_direction=(0, 0, 1))
    sq = quad(0.5, 0.0)
    img = render(sq, Camera((2, 0.013, 0.007)), cfg).pixels
    mask = np.any(img != 1.0, axis=2)
    rows = np.nonzero(mask.any(axis=1))[0]
    for r in rows[1:-1]:
        run = np.nonzero(mask[r])[0]
        assert np.all(np.diff(run) == 1)


def test_render_deterministic(sphere3):
    cam = orbit_poses(3, [0.4], 3.0)[1]
    a = render(sphere3, cam, RenderConfig(64, 64))
    b = render(sphere3, cam, RenderConfig(64, 64))
    assert a.pixels.tobytes() == b.pixels.tobytes()


def test_shading_bounds(sphere3):
    cfg = RenderConfig(64, 64, ambient=0.25, diffuse=0.5, background=(0, 0, 0))
    img = render(sphere3, orbit_poses(1, [0.2], 3.0)[0], cfg).pixels
    assert img.min() >= 0 and img.max() <= 0.75


def test_behind_camera_is_clipped():
    img = render(box(), Camera((0, 0, 0.1), (1, 0, 0.1)), RenderConfig(8, 8))
    assert img.pixels.shape == (8, 8, 3)


# -- PNG ----------------------------------------------------------------------

def _decode(data):
    return np.asarray(PILImage.open(io.BytesIO(data)).convert("RGB"))


def test_png_white_pixel():
    assert _decode(encode_png(Image.filled(1, 1, (1, 1, 1)))).tolist() == [[[255, 255, 255]]]


def test_png_deterministic():
    img = Image(np.random.default_rng(0).random((9, 7, 3)))
    assert encode_png(img) == encode_png(Image(img.pixels.copy()))


def test_png_gradient_decodes_exactly():
    """External decoder (Pillow) reproduces round(v * 255)."""
    y, x = np.mgrid[0:16, 0:16] / 15.0
    px = np.stack([x, y, (x + y) / 2], axis=-1)
    got = _decode(encode_png(Image(px)))
    assert got.shape == (16, 16, 3)
    assert np.array_equal(got, np.round(px * 255).astype(np.uint8))
