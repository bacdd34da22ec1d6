"""Dataset discovery, pairwise evaluation and summary tables."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DuplicateId, EmptyDataset, NoSurface, ReconEvalError
from .mesh import TriangleMesh
from .mesh_io import read_mesh
from .metrics_2d import ConvExtractor, lpips, psnr, pyramid_extractor, ssim
from .metrics_3d import Metric3dConfig, align_pair, evaluate_geometry
from .render import RenderConfig, fit_distance, orbit_poses, render, write_views

log = logging.getLogger(__name__)

MESH_SUFFIXES = (".glb", ".obj", ".ply")


class Metric(Enum):
    PSNR = "PSNR"
    SSIM = "SSIM"
    LPIPS = "LPIPS"
    IOU = "IoU"
    CD = "CD"
    HD = "HD"

    @property
    def higher_is_better(self) -> bool:
        return self in (Metric.PSNR, Metric.SSIM, Metric.IOU)

    @property
    def arrow(self) -> str:
        return "↑" if self.higher_is_better else "↓"


METRIC_ORDER = {m: i for i, m in enumerate(Metric)}


# -- configuration -------------------------------------------------------

@dataclass(frozen=True)
class ViewConfig:
    n_azimuth: int = 8
    elevations_deg: Tuple[float, ...] = (20.0, -20.0)
    width: int = 512
    height: int = 512
    background: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    fov_deg: float = 45.0
    margin: float = 1.2

    @property
    def count(self) -> int:
        return self.n_azimuth * len(self.elevations_deg)

    def render_config(self) -> RenderConfig:
        return RenderConfig(self.width, self.height, self.background)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    views: ViewConfig = field(default_factory=ViewConfig)
    iou_samples: int = 100_000
    cd_hd_samples: int = 10_000
    lpips_extractor_path: Optional[str] = None
    dump_views: Optional[str] = None

    def metric3d(self) -> Metric3dConfig:
        return Metric3dConfig(self.iou_samples, self.cd_hd_samples, self.seed)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        """Build from the JSON run-config layout; unknown keys are errors."""
        if not isinstance(doc, dict):
            raise ConfigError("run config must be a JSON object")
        unknown = set(doc) - {"seed", "views", "metrics"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        views = doc.get("views", {})
        metrics = doc.get("metrics", {})
        if not isinstance(views, dict) or not isinstance(metrics, dict):
            raise ConfigError("'views' and 'metrics' must be objects")
        bad = set(views) - {"n_azimuth", "elevations_deg", "resolution", "background",
                            "fov_deg", "margin"}
        bad |= set(metrics) - {"iou_samples", "cd_hd_samples", "lpips_extractor_path"}
        if bad:
            raise ConfigError(f"unknown config keys: {sorted(bad)}")
        try:
            vc = ViewConfig()
            res = views.get("resolution", [vc.width, vc.height])
            if isinstance(res, int):
                res = [res, res]
            vc = ViewConfig(
                n_azimuth=int(views.get("n_azimuth", vc.n_azimuth)),
                elevations_deg=tuple(float(e) for e in views.get("elevations_deg",
                                                                 vc.elevations_deg)),
                width=int(res[0]), height=int(res[1]),
                background=tuple(float(c) for c in views.get("background", vc.background)),
                fov_deg=float(views.get("fov_deg", vc.fov_deg)),
                margin=float(views.get("margin", vc.margin)),
            )
            cfg = cls(
                seed=int(doc.get("seed", 0)),
                views=vc,
                iou_samples=int(metrics.get("iou_samples", cls.iou_samples)),
                cd_hd_samples=int(metrics.get("cd_hd_samples", cls.cd_hd_samples)),
                lpips_extractor_path=metrics.get("lpips_extractor_path"),
            )
        except (TypeError, ValueError, IndexError) as e:
            raise ConfigError(f"invalid run config: {e}") from None
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        return cls.from_dict(doc)

    def validate(self) -> None:
        v = self.views
        if v.n_azimuth < 1 or not v.elevations_deg:
            raise ConfigError("need at least one azimuth and one elevation")
        if not 0 < v.fov_deg < 180:
            raise ConfigError("fov_deg must be in (0, 180)")
        if v.margin < 1:
            raise ConfigError("margin must be >= 1")
        if len(v.background) != 3:
            raise ConfigError("background must have 3 components")
        if self.iou_samples < 1 or self.cd_hd_samples < 1:
            raise ConfigError("sample counts must be >= 1")
        try:
            v.render_config()
        except ReconEvalError as e:
            raise ConfigError(str(e)) from None


# -- dataset ---------------------------------------------------------------

@dataclass
class ManifestEntry:
    object_id: str
    gt_path: Path
    recon_paths: Dict[str, Path] = field(default_factory=dict)


@dataclass
class DatasetManifest:
    entries: List[ManifestEntry]
    models: List[str]
    warnings: List[str] = field(default_factory=list)


def _mesh_files(directory: Path) -> Dict[str, Path]:
    found: Dict[str, Path] = {}
    for p in sorted(directory.iterdir()):
        if p.is_file() and p.suffix.lower() in MESH_SUFFIXES:
            if p.stem in found:
                raise DuplicateId(f"{p.stem!r} appears twice in {directory}")
            found[p.stem] = p
    return found


def discover_dataset(root) -> DatasetManifest:
    """Pair ``root/gt/<id>.<ext>`` with ``root/recon/<model>/<id>.<ext>``."""
    root = Path(root)
    gt_dir = root / "gt"
    if not gt_dir.is_dir():
        raise EmptyDataset(f"{gt_dir} does not exist")
    gt = _mesh_files(gt_dir)
    if not gt:
        raise EmptyDataset(f"no meshes in {gt_dir}")

    recon_dir = root / "recon"
    models = sorted(p.name for p in recon_dir.iterdir() if p.is_dir()) \
        if recon_dir.is_dir() else []
    entries = {oid: ManifestEntry(oid, path) for oid, path in gt.items()}
    warnings = []
    for model in models:
        for oid, path in _mesh_files(recon_dir / model).items():
            if oid in entries:
                entries[oid].recon_paths[model] = path
            else:
                warnings.append(f"orphan reconstruction {model}/{path.name}: no ground truth")
    for oid, entry in entries.items():
        for model in models:
            if model not in entry.recon_paths:
                warnings.append(f"{model} has no reconstruction for {oid}")
    for w in warnings:
        log.warning(w)
    return DatasetManifest(list(entries.values()), models, warnings)


# -- evaluation ------------------------------------------------------------

@dataclass(frozen=True)
class MetricRecord:
    object_id: str
    model_name: str
    metric: Metric
    value: float

    def __post_init__(self):
        v, m = self.value, self.metric
        if math.isnan(v) or (math.isinf(v) and not (m is Metric.PSNR and v > 0)):
            raise ValueError(f"{m.value} value {v} is not finite")
        if m is Metric.SSIM and not -1 - 1e-12 <= v <= 1 + 1e-12:
            raise ValueError(f"SSIM {v} outside [-1, 1]")
        if m is Metric.IOU and not 0 <= v <= 1:
            raise ValueError(f"IoU {v} outside [0, 1]")
        if m in (Metric.CD, Metric.HD, Metric.LPIPS) and v < 0:
            raise ValueError(f"{m.value} {v} is negative")


@dataclass(frozen=True)
class ErrorRecord:
    object_id: str
    model_name: str
    tag: str
    message: str


def _extractor(cfg: RunConfig):
    if cfg.lpips_extractor_path:
        return ConvExtractor.from_file(cfg.lpips_extractor_path)
    return pyramid_extractor


def render_views(mesh: TriangleMesh, cameras, cfg: RunConfig):
    rc = cfg.views.render_config()
    return [render(mesh, cam, rc) for cam in cameras]


def view_cameras(mesh: TriangleMesh, cfg: RunConfig):
    fov = math.radians(cfg.views.fov_deg)
    dist = fit_distance(mesh, fov, cfg.views.margin)
    return orbit_poses(cfg.views.n_azimuth, [math.radians(e) for e in cfg.views.elevations_deg],
                       dist, fov)


def _require_surface(mesh: TriangleMesh, what: str):
    if mesh.n_faces == 0 or not mesh.face_areas().sum() > 0:
        raise NoSurface(f"{what} mesh has no surface")


def evaluate_pair(gt: TriangleMesh, recon: TriangleMesh, cfg: RunConfig = RunConfig(),
                  object_id: str = "", model_name: str = "",
                  extractor=None) -> List[MetricRecord]:
    """All six metrics for one ground-truth / reconstruction pair.

    Both meshes are aligned, then rendered from one shared camera list; the
    2D metrics are averaged over views.
    """
    _require_surface(gt, "ground-truth")
    _require_surface(recon, "reconstructed")
    gt_a, recon_a = align_pair(gt, recon)

    cams_gt = view_cameras(gt_a, cfg)
    cams_recon = list(cams_gt)
    assert cams_gt == cams_recon, "view lists diverged"
    imgs_gt = render_views(gt_a, cams_gt, cfg)
    imgs_recon = render_views(recon_a, cams_recon, cfg)
    if cfg.dump_views:
        write_views(imgs_gt, Path(cfg.dump_views) / "gt", object_id or "object")
        write_views(imgs_recon, Path(cfg.dump_views) / (model_name or "recon"),
                    object_id or "object")

    extractor = extractor or _extractor(cfg)
    per_view = {Metric.PSNR: [], Metric.SSIM: [], Metric.LPIPS: []}
    for a, b in zip(imgs_gt, imgs_recon):
        per_view[Metric.PSNR].append(psnr(a, b))
        per_view[Metric.SSIM].append(ssim(a, b))
        per_view[Metric.LPIPS].append(lpips(a, b, extractor))

    geo = evaluate_geometry(gt_a, recon_a, cfg.metric3d())
    values = {m: float(np.mean(v)) for m, v in per_view.items()}
    values[Metric.IOU] = geo["iou"]
    values[Metric.CD] = geo["cd"]
    values[Metric.HD] = geo["hd"]
    return [MetricRecord(object_id, model_name, m, v) for m, v in values.items()]


@dataclass
class RunResult:
    records: List[MetricRecord]
    errors: List[ErrorRecord]
    warnings: List[str] = field(default_factory=list)


def _evaluate_entry(entry: ManifestEntry, models: Sequence[str], cfg: RunConfig):
    records, errors = [], []
    try:
        gt = read_mesh(entry.gt_path)
    except Exception as e:  # noqa: BLE001 - isolate per-object failures
        tag = e.tag if isinstance(e, ReconEvalError) else type(e).__name__
        return records, [ErrorRecord(entry.object_id, m, tag, str(e))
                         for m in models if m in entry.recon_paths]
    extractor = None
    for model in models:
        path = entry.recon_paths.get(model)
        if path is None:
            continue
        try:
            extractor = extractor or _extractor(cfg)
            recon = read_mesh(path)
            records += evaluate_pair(gt, recon, cfg, entry.object_id, model, extractor)
        except Exception as e:  # noqa: BLE001
            tag = e.tag if isinstance(e, ReconEvalError) else type(e).__name__
            log.error("%s/%s failed: %s: %s", model, entry.object_id, tag, e)
            errors.append(ErrorRecord(entry.object_id, model, tag, str(e)))
    return records, errors


def record_sort_key(r: MetricRecord):
    return (r.model_name, METRIC_ORDER[r.metric], r.object_id)


def evaluate_dataset(manifest: DatasetManifest, cfg: RunConfig = RunConfig(),
                     jobs: int = 1) -> RunResult:
    """Evaluate every (object, model) pair; failures become error entries."""
    if not manifest.entries:
        raise EmptyDataset("manifest has no entries")
    args = [(e, manifest.models, cfg) for e in manifest.entries]
    if jobs <= 1:
        results = [_evaluate_entry(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_evaluate_entry, *zip(*args)))
    records = sorted((r for rec, _ in results for r in rec), key=record_sort_key)
    errors = sorted((e for _, err in results for e in err),
                    key=lambda e: (e.model_name, e.object_id))
    return RunResult(records, errors, list(manifest.warnings))


# -- aggregation & reports -------------------------------------------------

@dataclass(frozen=True)
class SummaryRow:
    mean: float
    max: float
    min: float
    n: int
    max_infinite: bool = False


@dataclass
class SummaryTable:
    rows: Dict[Tuple[str, Metric], SummaryRow] = field(default_factory=dict)
    n_errors: int = 0

    def __len__(self):
        return len(self.rows)


def aggregate(records: Iterable[MetricRecord], n_errors: int = 0) -> SummaryTable:
    """Mean/max/min per (model, metric).

    Infinite PSNR values (identical images) are left out of the mean and
    flagged on the max.
    """
    groups: Dict[Tuple[str, Metric], List[float]] = {}
    for r in sorted(records, key=record_sort_key):
        groups.setdefault((r.model_name, r.metric), []).append(r.value)
    table = SummaryTable(n_errors=n_errors)
    for key, vals in groups.items():
        finite = [v for v in vals if math.isfinite(v)]
        has_inf = len(finite) < len(vals)
        mean = math.fsum(finite) / len(finite) if finite else math.inf
        if finite:
            # keep min <= mean <= max despite rounding in the sum
            mean = min(max(mean, min(finite)), max(finite))
        table.rows[key] = SummaryRow(mean=mean, max=max(vals), min=min(vals),
                                     n=len(vals), max_infinite=has_inf)
    return table


def _num(v: float) -> str:
    return "inf" if math.isinf(v) else format(v, ".10g")


def _display(v: float) -> str:
    return "inf" if math.isinf(v) else format(v, ".4g")


def emit_report(table: SummaryTable, fmt: str = "csv") -> bytes:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "metric", "mean", "max", "min", "n"])
        for (model, metric), row in table.rows.items():
            w.writerow([model, metric.value, _num(row.mean), _num(row.max), _num(row.min), row.n])
        return buf.getvalue().encode("utf-8")
    if fmt == "markdown":
        lines = ["| Model | Metric | Mean | Max | Min |", "|---|---|---|---|---|"]
        last = None
        flagged = False
        for (model, metric), row in table.rows.items():
            shown = model if model != last else ""
            last = model
            mx = _display(row.max)
            if row.max_infinite:
                mx += "†"
                flagged = True
            lines.append(f"| {shown} | {metric.value} {metric.arrow} | {_display(row.mean)} "
                         f"| {mx} | {_display(row.min)} |")
        if flagged:
            lines += ["", "† includes identical-image views (infinite PSNR), "
                          "excluded from the mean."]
        if table.n_errors:
            lines += ["", f"Errors: {table.n_errors} object(s) failed to evaluate."]
        return ("\n".join(lines) + "\n").encode("utf-8")
    raise ValueError(f"unknown report format {fmt!r}")


RECORD_FIELDS = ["object_id", "model", "metric", "value"]
ERROR_METRIC = "error"


def write_records(result: RunResult) -> bytes:
    """Per-object records; failures are rows with metric ``error``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_FIELDS)
    for r in result.records:
        w.writerow([r.object_id, r.model_name, r.metric.value, _num_exact(r.value)])
    for e in result.errors:
        w.writerow([e.object_id, e.model_name, ERROR_METRIC, f"{e.tag}: {e.message}"])
    return buf.getvalue().encode("utf-8")


def _num_exact(v: float) -> str:
    return "inf" if math.isinf(v) else repr(float(v))


def read_records(data: bytes) -> RunResult:
    rows = list(csv.reader(io.StringIO(data.decode("utf-8"))))
    if not rows or rows[0] != RECORD_FIELDS:
        raise ValueError(f"records CSV must start with header {','.join(RECORD_FIELDS)}")
    records, errors = [], []
    by_value = {m.value: m for m in Metric}
    for i, row in enumerate(rows[1:], 2):
        if len(row) != 4:
            raise ValueError(f"line {i}: expected 4 fields")
        oid, model, metric, value = row
        if metric == ERROR_METRIC:
            tag, _, msg = value.partition(": ")
            errors.append(ErrorRecord(oid, model, tag, msg))
        elif metric in by_value:
            records.append(MetricRecord(oid, model, by_value[metric], float(value)))
        else:
            raise ValueError(f"line {i}: unknown metric {metric!r}")
    return RunResult(records, errors)


def default_jobs() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
