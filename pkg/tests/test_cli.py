import csv
import io

import numpy as np
import pytest

from recon_eval.cli import build_parser, main
from recon_eval.mesh_io import parse_ply, write_glb, write_ply
from recon_eval.shapes import box, icosphere

from conftest import make_toy_dataset, small_config


def rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--help"])
    assert e.value.code == 0
    out = capsys.readouterr().out
    for cmd in ("views", "eval", "colorize", "report"):
        assert cmd in out


def test_views_default_count(tmp_path, capsys):
    model = tmp_path / "sat.glb"
    model.write_bytes(write_glb(icosphere(1)))
    assert main(["views", str(model), str(tmp_path / "out")]) == 0
    names = sorted(p.name for p in (tmp_path / "out").iterdir())
    assert names == sorted(f"sat_view{k}.png" for k in range(16))
    assert len(capsys.readouterr().out.splitlines()) == 16


def test_views_flags(tmp_path):
    model = tmp_path / "cube.ply"
    model.write_bytes(write_ply(box()))
    assert main(["views", str(model), str(tmp_path / "out"), "--views", "4",
                 "--elevations", "0", "--resolution", "24"]) == 0
    assert len(list((tmp_path / "out").iterdir())) == 4


def test_views_missing_file(tmp_path, capsys):
    assert main(["views", str(tmp_path / "nope.glb"), str(tmp_path / "out")]) == 2
    assert not (tmp_path / "out").exists()
    assert "error" in capsys.readouterr().err


def test_views_bad_render_config(tmp_path):
    model = tmp_path / "cube.ply"
    model.write_bytes(write_ply(box()))
    assert main(["views", str(model), str(tmp_path / "o"), "--margin", "0.5"]) == 3
    assert main(["views", str(model), str(tmp_path / "o"), "--resolution", "0"]) == 3


def test_eval_identity_dataset(tmp_path):
    make_toy_dataset(tmp_path / "ds", 2)
    out = tmp_path / "r" / "report.csv"
    cfg = small_config(tmp_path / "c.json")
    assert main(["eval", str(tmp_path / "ds"), "--config", str(cfg), "--out", str(out),
                 "--jobs", "1"]) == 0
    table = {r["metric"]: r for r in rows(out)}
    assert table["SSIM"]["mean"] == "1" and table["IoU"]["mean"] == "1"
    assert table["IoU"]["n"] == "2"
    assert (tmp_path / "r" / "report.md").exists()
    assert (tmp_path / "r" / "report_records.csv").exists()


def test_eval_seed_determinism(tmp_path):
    make_toy_dataset(tmp_path / "ds", 2, identical=False)
    cfg = small_config(tmp_path / "c.json")
    outs = []
    for i in range(2):
        out = tmp_path / f"r{i}.csv"
        assert main(["eval", str(tmp_path / "ds"), "--config", str(cfg), "--seed", "7",
                     "--out", str(out), "--jobs", "1"]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_eval_corrupt_mesh_is_isolated(tmp_path):
    make_toy_dataset(tmp_path / "ds", 2, corrupt=1)
    out = tmp_path / "r.csv"
    assert main(["eval", str(tmp_path / "ds"), "--config", str(small_config(tmp_path / "c.json")),
                 "--out", str(out), "--jobs", "1"]) == 0
    recs = rows(tmp_path / "r_records.csv")
    assert sum(r["metric"] == "error" for r in recs) == 1
    assert "Errors: 1" in (tmp_path / "r.md").read_text()


def test_eval_total_failure(tmp_path):
    make_toy_dataset(tmp_path / "ds", 1, corrupt=0)
    assert main(["eval", str(tmp_path / "ds"), "--config", str(small_config(tmp_path / "c.json")),
                 "--out", str(tmp_path / "r.csv"), "--jobs", "1"]) == 1


def test_eval_bad_config_and_empty_dataset(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    make_toy_dataset(tmp_path / "ds", 1)
    assert main(["eval", str(tmp_path / "ds"), "--config", str(bad)]) == 2
    (tmp_path / "empty").mkdir()
    assert main(["eval", str(tmp_path / "empty"), "--out", str(tmp_path / "x.csv")]) == 4


def test_flags_override_config_and_env_seed(tmp_path, monkeypatch):
    from recon_eval.cli import _run_config

    cfg = small_config(tmp_path / "c.json", seed=3)
    p = build_parser()
    args = p.parse_args(["eval", "ds", "--config", str(cfg), "--views", "2", "--seed", "11"])
    rc = _run_config(args)
    assert rc.views.n_azimuth == 2 and rc.seed == 11 and rc.iou_samples == 4000
    assert _run_config(p.parse_args(["eval", "ds", "--config", str(cfg)])).seed == 3
    monkeypatch.setenv("RECON_EVAL_SEED", "99")
    assert _run_config(p.parse_args(["eval", "ds"])).seed == 99


def test_colorize_identity_all_blue_and_reparses(tmp_path):
    m = tmp_path / "s.ply"
    m.write_bytes(write_ply(icosphere(2)))
    out = tmp_path / "heat.ply"
    assert main(["colorize", str(m), str(m), str(out)]) == 0
    colored = parse_ply(out.read_bytes())
    assert np.array_equal(colored.colors, np.tile([0, 0, 1.0], (colored.n_vertices, 1)))


def test_colorize_reproducible(tmp_path):
    gt = tmp_path / "gt.ply"
    rc = tmp_path / "rc.glb"
    gt.write_bytes(write_ply(icosphere(2)))
    rc.write_bytes(write_glb(box()))
    outs = []
    for i in range(2):
        out = tmp_path / f"h{i}.ply"
        assert main(["colorize", str(gt), str(rc), str(out), "--samples", "1000",
                     "--seed", "1"]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert parse_ply(outs[0]).colors[:, 0].max() == 1.0


def test_colorize_parse_failure(tmp_path):
    bad = tmp_path / "bad.ply"
    bad.write_bytes(b"ply\ngarbage\n")
    assert main(["colorize", str(bad), str(bad), str(tmp_path / "o.ply")]) == 2


def test_report_reaggregates(tmp_path, capsys):
    make_toy_dataset(tmp_path / "ds", 2)
    out = tmp_path / "r.csv"
    main(["eval", str(tmp_path / "ds"), "--config", str(small_config(tmp_path / "c.json")),
          "--out", str(out), "--jobs", "1"])
    capsys.readouterr()
    assert main(["report", str(tmp_path / "r_records.csv"), "--format", "csv"]) == 0
    assert capsys.readouterr().out.encode() == out.read_bytes()
    assert main(["report", str(tmp_path / "missing.csv")]) == 2
