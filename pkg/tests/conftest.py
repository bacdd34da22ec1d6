from pathlib import Path

import pytest

from recon_eval.mesh_io import write_ply, write_glb, write_obj
from recon_eval.shapes import box, icosphere

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def unit_cube():
    return box()


@pytest.fixture(scope="session")
def sphere3():
    return icosphere(3)


def make_toy_dataset(root: Path, n_objects=2, model="toy", identical=True, corrupt=None):
    """gt/ and recon/<model>/ with simple solids in mixed formats."""
    gt_dir = root / "gt"
    rc_dir = root / "recon" / model
    gt_dir.mkdir(parents=True)
    rc_dir.mkdir(parents=True)
    shapes = [box(), icosphere(1), box((0, 0, 0), (1, 2, 0.5)), icosphere(2, 0.7)]
    writers = [(".ply", write_ply), (".glb", write_glb), (".obj", write_obj), (".ply", write_ply)]
    for i in range(n_objects):
        mesh = shapes[i % len(shapes)]
        ext, write = writers[i % len(writers)]
        (gt_dir / f"obj{i}{ext}").write_bytes(write(mesh))
        recon = mesh if identical else mesh.with_vertices(mesh.vertices * [1.0, 1.3, 0.8])
        data = write(recon)
        if corrupt == i:
            data = b"ply\nformat ascii 1.0\nelement vertex 3\nend_header\n"
        (rc_dir / f"obj{i}{ext}").write_bytes(data)
    return root


SMALL_VIEWS = {"n_azimuth": 4, "elevations_deg": [20], "resolution": 48}


def small_config(path: Path, seed=3, **metrics):
    import json

    doc = {"seed": seed, "views": SMALL_VIEWS,
           "metrics": {"iou_samples": 4000, "cd_hd_samples": 800, **metrics}}
    path.write_text(json.dumps(doc))
    return path


# (criterion number, title, passed, detail) appended by test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num:2d}. {title}: {detail}")
