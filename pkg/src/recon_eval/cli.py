"""Command-line entry point: ``recon-eval {views,eval,colorize,report}``.

Settings resolve as: command-line flag, then config file, then defaults.
The seed additionally falls back to ``$RECON_EVAL_SEED`` before the default.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, EmptyDataset, MeshFormatError, ReconEvalError
from .harness import (RunConfig, aggregate, default_jobs, discover_dataset, emit_report,
                      evaluate_dataset, read_records, view_cameras, write_records)
from .heatmap import colorize_error
from .mesh_io import read_mesh, write_ply
from .geometry import normalize_mesh
from .metrics_3d import align_pair
from .render import encode_png, render

EXIT_OK = 0
EXIT_TOTAL_FAILURE = 1
EXIT_PARSE = 2
EXIT_RENDER_CONFIG = 3
EXIT_EMPTY_DATASET = 4

SEED_ENV = "RECON_EVAL_SEED"


def _fail(msg: str, code: int) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _add_view_flags(p):
    g = p.add_argument_group("views")
    g.add_argument("--views", type=int, help="azimuths per elevation (default 8)")
    g.add_argument("--elevations", type=float, nargs="+", metavar="DEG",
                   help="elevation angles in degrees (default 20 -20)")
    g.add_argument("--resolution", type=int, metavar="PX", help="square image size (default 512)")
    g.add_argument("--fov", type=float, metavar="DEG", help="vertical field of view (default 45)")
    g.add_argument("--margin", type=float, help="framing margin >= 1 (default 1.2)")
    g.add_argument("--background", type=float, nargs=3, metavar=("R", "G", "B"))


def _run_config(args) -> RunConfig:
    """Merge config file and flags."""
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else None
    seed = args.seed
    if seed is None and cfg is None and os.environ.get(SEED_ENV):
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"${SEED_ENV} is not an integer") from None
    cfg = cfg or RunConfig()
    v = cfg.views
    if args.views is not None:
        v = replace(v, n_azimuth=args.views)
    if args.elevations is not None:
        v = replace(v, elevations_deg=tuple(args.elevations))
    if args.resolution is not None:
        v = replace(v, width=args.resolution, height=args.resolution)
    if args.fov is not None:
        v = replace(v, fov_deg=args.fov)
    if args.margin is not None:
        v = replace(v, margin=args.margin)
    if args.background is not None:
        v = replace(v, background=tuple(args.background))
    cfg = replace(cfg, views=v)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if getattr(args, "iou_samples", None) is not None:
        cfg = replace(cfg, iou_samples=args.iou_samples)
    if getattr(args, "cd_hd_samples", None) is not None:
        cfg = replace(cfg, cd_hd_samples=args.cd_hd_samples)
    if getattr(args, "dump_views", None):
        cfg = replace(cfg, dump_views=str(args.dump_views))
    cfg.validate()
    return cfg


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    try:
        return int(os.environ.get(SEED_ENV, 0))
    except ValueError:
        raise ConfigError(f"${SEED_ENV} is not an integer") from None


def cmd_views(args) -> int:
    try:
        mesh = read_mesh(args.model)
    except (OSError, MeshFormatError) as e:
        return _fail(f"cannot read {args.model}: {e}", EXIT_PARSE)
    try:
        cfg = _run_config(args)
        mesh, _ = normalize_mesh(mesh)
        cams = view_cameras(mesh, cfg)
        rc = cfg.views.render_config()
    except ReconEvalError as e:
        return _fail(str(e), EXIT_RENDER_CONFIG)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.model).stem
    for k, cam in enumerate(cams):
        path = out / f"{stem}_view{k}.png"
        path.write_bytes(encode_png(render(mesh, cam, rc)))
        x, y, z = cam.position
        az = math.degrees(math.atan2(y, x)) % 360.0
        el = math.degrees(math.asin(max(-1.0, min(1.0, z / math.hypot(x, y, z)))))
        print(f"{path}  azimuth={az:.1f} elevation={el:.1f} distance={math.hypot(x, y, z):.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        cfg = _run_config(args)
    except ReconEvalError as e:
        return _fail(str(e), EXIT_PARSE)
    try:
        manifest = discover_dataset(args.dataset_root)
    except EmptyDataset as e:
        return _fail(str(e), EXIT_EMPTY_DATASET)
    except ReconEvalError as e:
        return _fail(str(e), EXIT_PARSE)
    if not any(e.recon_paths for e in manifest.entries):
        return _fail("dataset has no reconstructions to evaluate", EXIT_EMPTY_DATASET)

    jobs = args.jobs if args.jobs is not None else default_jobs()
    result = evaluate_dataset(manifest, cfg, jobs)
    table = aggregate(result.records, n_errors=len(result.errors))

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(emit_report(table, "csv"))
    out.with_suffix(".md").write_bytes(emit_report(table, "markdown"))
    out.with_name(out.stem + "_records.csv").write_bytes(write_records(result))
    print(f"wrote {out} ({len(table)} rows, {len(result.records)} records, "
          f"{len(result.errors)} errors)")
    for e in result.errors:
        print(f"error: {e.model_name}/{e.object_id}: {e.tag}: {e.message}", file=sys.stderr)
    if result.errors and not result.records:
        return EXIT_TOTAL_FAILURE
    return EXIT_OK


def cmd_colorize(args) -> int:
    try:
        gt = read_mesh(args.gt)
        recon = read_mesh(args.recon)
    except (OSError, MeshFormatError) as e:
        return _fail(f"cannot read mesh: {e}", EXIT_PARSE)
    try:
        seed = _seed(args)
        if not args.no_align:
            gt, recon = align_pair(gt, recon)
        colored = colorize_error(recon, gt, args.samples, seed)
    except ReconEvalError as e:
        return _fail(str(e), EXIT_PARSE)
    Path(args.out_ply).write_bytes(write_ply(colored, binary=not args.ascii))
    print(f"wrote {args.out_ply} ({colored.n_vertices} vertices)")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        result = read_records(Path(args.records).read_bytes())
    except (OSError, ValueError, UnicodeDecodeError) as e:
        return _fail(f"cannot read records: {e}", EXIT_PARSE)
    data = emit_report(aggregate(result.records, len(result.errors)), args.format)
    if args.out:
        Path(args.out).write_bytes(data)
    else:
        sys.stdout.write(data.decode("utf-8"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="recon-eval",
        description="Evaluate 3D reconstructions against ground-truth meshes.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("views", help="render orbit views of a mesh to PNG")
    p.add_argument("model", help="mesh file (.glb, .ply, .obj)")
    p.add_argument("out_dir")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--seed", type=int)
    _add_view_flags(p)
    p.set_defaults(func=cmd_views)

    p = sub.add_parser("eval", help="evaluate a dataset and write summary tables")
    p.add_argument("dataset_root", help="directory with gt/ and recon/<model>/")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--out", default="report.csv", help="summary CSV path (default report.csv)")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, help="worker processes (default: available CPUs)")
    p.add_argument("--iou-samples", type=int)
    p.add_argument("--cd-hd-samples", type=int)
    p.add_argument("--dump-views", metavar="DIR", help="also write every rendered view as PNG")
    _add_view_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("colorize", help="write an error-colored reconstruction as PLY")
    p.add_argument("gt")
    p.add_argument("recon")
    p.add_argument("out_ply")
    p.add_argument("--samples", type=int, default=50_000, help="GT surface samples")
    p.add_argument("--seed", type=int)
    p.add_argument("--ascii", action="store_true", help="write ascii PLY")
    p.add_argument("--no-align", action="store_true", help="meshes are already aligned")
    p.set_defaults(func=cmd_colorize)

    p = sub.add_parser("report", help="re-aggregate a records CSV")
    p.add_argument("records", help="*_records.csv written by eval")
    p.add_argument("--format", choices=("csv", "markdown"), default="markdown")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
