"""Batch pipeline over mesh directories and the ".dma" record format.

Records are plain text so they stay diffable and language-neutral:

    DMA 1
    shape <id>
    cutter <CR> <CH> <FR> <FH>
    counts <n> <m>
    normalized <0|1>
    meta <compact json>
    x y z nx ny nz lI lO          (n data lines, 9 significant digits)

All floats are quantized to 9 significant digits when a record is built, so
write -> read round-trips are exact and reruns are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import __version__
from .accessibility import AccessibilityOptions, analyze
from .cutter import Cutter, PRESETS, random_cutter
from .errors import EmptyInputDir, FormatError, MillreachError
from .mesh import load_mesh, normalize_scale, validate
from .sampling import check_sampling_density, sample_directions, sample_surface

logger = logging.getLogger(__name__)

MESH_SUFFIXES = (".obj", ".stl", ".ply")


def quantize9(values) -> np.ndarray:
    """Round floats to 9 significant digits (the on-disk precision)."""
    arr = np.asarray(values, dtype=np.float64)
    out = np.array([float(f"{v:.9g}") for v in arr.reshape(-1)], dtype=np.float64)
    return out.reshape(arr.shape)


@dataclass(frozen=True, eq=False)
class DatasetRecord:
    """One analyzed shape: sites, normals, and the two label columns."""

    shape_id: str
    cutter: Cutter
    points: np.ndarray  # (n, 3)
    normals: np.ndarray  # (n, 3)
    label_i: np.ndarray  # (n,) bool
    label_o: np.ndarray  # (n,) bool
    normalized: bool
    meta: dict

    def __post_init__(self):
        n = len(self.points)
        if not (len(self.normals) == len(self.label_i) == len(self.label_o) == n):
            raise FormatError("record row counts are inconsistent")
        if self.normalized and n and float(np.abs(self.points).max()) > 1.0:
            raise FormatError("normalized record has coordinates outside [-1, 1]")

    def __eq__(self, other) -> bool:
        if not isinstance(other, DatasetRecord):
            return NotImplemented
        return (
            self.shape_id == other.shape_id
            and self.cutter == other.cutter
            and self.normalized == other.normalized
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.normals, other.normals)
            and np.array_equal(self.label_i, other.label_i)
            and np.array_equal(self.label_o, other.label_o)
            and self.meta == other.meta
        )

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def build(cls, shape_id: str, cutter: Cutter, points, normals, label_i, label_o,
              normalized: bool, meta: dict, sigma: float) -> "DatasetRecord":
        """Assemble a record from analysis output.

        Coordinates (and the cutter) are quantized to the on-disk precision;
        when normalized, points are uniformly scaled about their bbox center
        so the longest axis spans [-1, 1], with the transform kept in meta.
        """
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
        meta = dict(meta)
        if normalized and len(points):
            vmin = points.min(axis=0)
            vmax = points.max(axis=0)
            extent = float((vmax - vmin).max())
            center = (vmin + vmax) / 2.0
            scale = 2.0 / extent if extent > 0 else 1.0
            points = (points - center) * scale
            meta["normalize"] = {"scale": scale, "center": center.tolist()}
        q = quantize9
        cq = q([cutter.cr, cutter.ch, cutter.fr, cutter.fh])
        # shaft radius must be re-derivable from the stored header + meta
        shaft_mode = meta.get("options", {}).get("shaft_mode", "fr_plus_sigma")
        shaft = math.inf if shaft_mode == "infinite" else cq[2] + sigma
        cutter_q = Cutter(cr=cq[0], ch=cq[1], fr=cq[2], fh=cq[3], shaft_radius=shaft)
        return cls(
            shape_id=shape_id,
            cutter=cutter_q,
            points=q(points),
            normals=q(normals),
            label_i=np.asarray(label_i, dtype=bool),
            label_o=np.asarray(label_o, dtype=bool),
            normalized=normalized,
            meta=meta,
        )


def write_record(record: DatasetRecord, path: str) -> None:
    g = "{:.9g}".format
    lines = [
        "DMA 1",
        f"shape {record.shape_id}",
        "cutter " + " ".join(g(v) for v in record.cutter.as_tuple()),
        f"counts {len(record)} {int(record.meta.get('m', 0))}",
        f"normalized {1 if record.normalized else 0}",
        "meta " + json.dumps(record.meta, sort_keys=True, separators=(",", ":")),
    ]
    for p, nv, li, lo in zip(record.points, record.normals, record.label_i, record.label_o):
        lines.append(f"{g(p[0])} {g(p[1])} {g(p[2])} {g(nv[0])} {g(nv[1])} {g(nv[2])} "
                     f"{1 if li else 0} {1 if lo else 0}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_record(path: str) -> DatasetRecord:
    try:
        text = Path(path).read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as exc:
        raise FormatError(f"cannot read record {path}: {exc}") from exc
    lines = text.splitlines()
    if len(lines) < 6 or lines[0] != "DMA 1":
        raise FormatError(f"{path}: bad magic, expected 'DMA 1'")
    try:
        shape_id = lines[1].split(" ", 1)[1]
        cvals = [float(v) for v in lines[2].split()[1:]]
        n, m = (int(v) for v in lines[3].split()[1:])
        normalized = lines[4].split()[1] == "1"
        meta = json.loads(lines[5].split(" ", 1)[1])
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{path}: malformed header") from exc
    if len(cvals) != 4:
        raise FormatError(f"{path}: cutter line needs 4 values")
    data = lines[6:]
    if len(data) != n:
        raise FormatError(f"{path}: expected {n} data rows, found {len(data)}")
    points = np.empty((n, 3))
    normals = np.empty((n, 3))
    label_i = np.empty(n, dtype=bool)
    label_o = np.empty(n, dtype=bool)
    for i, row in enumerate(data):
        parts = row.split()
        if len(parts) != 8:
            raise FormatError(f"{path}: row {i} has {len(parts)} fields, expected 8")
        try:
            vals = [float(v) for v in parts[:6]]
            li, lo = int(parts[6]), int(parts[7])
        except ValueError as exc:
            raise FormatError(f"{path}: row {i} is not numeric") from exc
        points[i] = vals[:3]
        normals[i] = vals[3:]
        label_i[i] = bool(li)
        label_o[i] = bool(lo)
    sigma = float(meta.get("options", {}).get("sigma", 0.0))
    shaft_mode = meta.get("options", {}).get("shaft_mode", "fr_plus_sigma")
    shaft = math.inf if shaft_mode == "infinite" else cvals[2] + sigma
    cutter = Cutter(cr=cvals[0], ch=cvals[1], fr=cvals[2], fh=cvals[3], shaft_radius=shaft)
    return DatasetRecord(
        shape_id=shape_id, cutter=cutter, points=points, normals=normals,
        label_i=label_i, label_o=label_o, normalized=normalized, meta=meta,
    )


# ---------------------------------------------------------------------------
# Pipeline


@dataclass(frozen=True)
class PipelineConfig:
    input_dir: str
    output_dir: str
    n_sites: int = 7000
    m_directions: int = 150
    lloyd_iters: int = 10
    preset: str = "uniform"
    seed: int = 0
    normalize: bool = False
    min_bbox_edge: float = 80.0
    direction_mode: str = "fibonacci"
    azimuth_count: int | None = None
    options: AccessibilityOptions = field(default_factory=AccessibilityOptions)

    def __post_init__(self):
        if self.n_sites < 1 or self.m_directions < 1:
            raise ValueError("n_sites and m_directions must be >= 1")
        if self.lloyd_iters < 0:
            raise ValueError("lloyd_iters must be >= 0")
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}")


def load_pipeline_config(path: str) -> PipelineConfig:
    """Read a JSON config whose keys mirror PipelineConfig field names."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    opts = raw.pop("options", None)
    cfg = dict(raw)
    if opts is not None:
        cfg["options"] = AccessibilityOptions(**opts)
    try:
        return PipelineConfig(**cfg)
    except TypeError as exc:
        raise FormatError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class PipelineSummary:
    shapes_ok: int
    shapes_skipped: int
    manifest_path: str


def derive_seed(base_seed: int, shape_id: str, tag: str) -> int:
    """Stable per-shape seed: renaming one input never disturbs another."""
    digest = hashlib.sha256(f"{base_seed}|{shape_id}|{tag}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def _skip_reason(report) -> str | None:
    if not report.is_watertight:
        return "not watertight"
    if not report.is_manifold:
        return "not manifold"
    if report.component_count != 1:
        return f"{report.component_count} components"
    return None


def run_pipeline(config: PipelineConfig, threads: int = 1) -> PipelineSummary:
    """Analyze every mesh in input_dir and emit one .dma record per clean shape.

    Non-manifold, non-watertight, or multi-component meshes are skipped with
    a logged reason, never fatally. A manifest.json listing every input, its
    cutter, and skip reasons is written last; given the same config the
    records and manifest are byte-identical across reruns.
    """
    in_dir = Path(config.input_dir)
    out_dir = Path(config.output_dir)
    files = sorted(p for p in in_dir.iterdir() if p.suffix.lower() in MESH_SUFFIXES)
    if not files:
        raise EmptyInputDir(f"no mesh files in {in_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)

    directions = sample_directions(config.m_directions, config.direction_mode,
                                   config.azimuth_count)
    entries = []
    ok = skipped = 0
    for path in files:
        shape_id = path.stem
        entry = {"file": path.name, "shape_id": shape_id}
        t0 = time.perf_counter()
        try:
            record_path = _run_shape(path, shape_id, config, directions, out_dir, threads, entry)
        except MillreachError as exc:
            entry["status"] = "skipped"
            entry["reason"] = str(exc)
            skipped += 1
            logger.warning("skipping %s: %s", path.name, exc)
        else:
            if record_path is None:
                skipped += 1
            else:
                entry["status"] = "ok"
                entry["record"] = record_path.name
                ok += 1
        logger.info("%s: %s (%.2f s)", shape_id, entry["status"], time.perf_counter() - t0)
        entries.append(entry)

    manifest = {
        "engine_version": __version__,
        "config": _config_dict(config),
        "ok": ok,
        "skipped": skipped,
        "shapes": entries,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")
    return PipelineSummary(shapes_ok=ok, shapes_skipped=skipped, manifest_path=str(manifest_path))


def _run_shape(path, shape_id, config, directions, out_dir, threads, entry):
    mesh = load_mesh(str(path))
    report = validate(mesh)
    reason = _skip_reason(report)
    if reason is not None:
        entry["status"] = "skipped"
        entry["reason"] = reason
        logger.warning("skipping %s: %s", path.name, reason)
        return None
    mesh = normalize_scale(mesh, config.min_bbox_edge)
    samples = sample_surface(mesh, config.n_sites, config.lloyd_iters,
                             derive_seed(config.seed, shape_id, "sample"))
    cutter = random_cutter(config.preset, derive_seed(config.seed, shape_id, "cutter"),
                           sigma=config.options.sigma)
    density = check_sampling_density(samples, cutter)
    result = analyze(samples, directions, cutter, config.options, threads=threads)
    record = DatasetRecord.build(
        shape_id=shape_id,
        cutter=cutter,
        points=samples.sites,
        normals=samples.normals,
        label_i=result.inaccessible,
        label_o=result.occlusion,
        normalized=config.normalize,
        meta={
            "m": config.m_directions,
            "seed": config.seed,
            "engine_version": __version__,
            "options": asdict(config.options),
        },
        sigma=config.options.sigma,
    )
    record_path = out_dir / f"{shape_id}.dma"
    write_record(record, str(record_path))
    entry["cutter"] = {"cr": record.cutter.cr, "ch": record.cutter.ch,
                       "fr": record.cutter.fr, "fh": record.cutter.fh}
    entry["n"] = len(record)
    entry["inaccessible"] = int(record.label_i.sum())
    entry["occlusion"] = int(record.label_o.sum())
    entry["density_ok"] = density.ok
    return record_path


def _config_dict(config: PipelineConfig) -> dict:
    d = asdict(config)
    d["options"] = asdict(config.options)
    return d
