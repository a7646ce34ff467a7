"""Command-line front end: per-shape analysis stages and the batch pipeline.

Exit codes: 0 success, 1 argument/validation failure, 2 analysis error.
Logs go to stderr; results go to stdout or to the requested output files.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import __version__
from .accessibility import (
    AccessibilityOptions,
    analyze,
    analyze_volume,
    brute_force_analyze,
    brute_force_analyze_volume,
)
from .cutter import PRESETS, parse_cutter_spec, random_cutter
from .dataset import DatasetRecord, load_pipeline_config, read_record, run_pipeline, write_record
from .errors import LengthMismatch, MillreachError
from .mesh import export_colored_mesh, load_mesh, normalize_scale, validate
from .metrics import read_predictions, score_pair
from .sampling import (
    SurfaceSamples,
    check_sampling_density,
    sample_directions,
    sample_surface,
    sample_volume,
    save_sites,
)

logger = logging.getLogger("millreach")


class CliParser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; we reserve 2 for
    analysis failures and use 1 for anything wrong with the invocation."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common_analysis_flags(p: argparse.ArgumentParser):
    p.add_argument("mesh", help="input mesh (OBJ, STL, or PLY)")
    p.add_argument("--sites", type=int, default=7000, help="surface site count (default 7000)")
    p.add_argument("--dirs", type=int, default=150, help="cutter direction count (default 150)")
    p.add_argument("--dir-mode", choices=["fibonacci", "latlong"], default="fibonacci")
    p.add_argument("--azimuth-count", type=int, default=None,
                   help="azimuths per ring (latlong mode)")
    p.add_argument("--lloyd-iters", type=int, default=10, help="Lloyd relaxation iterations")
    p.add_argument("--cutter", help="explicit cutter as CR,CH,FR,FH in mm")
    p.add_argument("--preset", choices=sorted(PRESETS), help="random cutter preset")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.add_argument("--sigma", type=float, default=5.0, help="detection-box margin in mm")
    p.add_argument("--occlusion-frac", type=float, default=0.10,
                   help="fraction of sites labeled as occlusion points")
    p.add_argument("--epsilon", type=float, default=1e-6, help="contact tolerance in mm")
    p.add_argument("--shaft-mode", choices=["fr_plus_sigma", "infinite"], default="fr_plus_sigma")
    p.add_argument("--no-prefilter", action="store_true", help="disable the detection-box prefilter")
    p.add_argument("--brute", action="store_true", help="use the brute-force reference engine")
    p.add_argument("--min-edge", type=float, default=0.0,
                   help="rescale so the shortest bbox edge is at least this many mm")
    p.add_argument("--normalize", action="store_true",
                   help="export record coordinates normalized to [-1,1]^3")
    p.add_argument("--force", action="store_true", help="analyze even if validation fails")
    p.add_argument("--threads", type=int, default=1, help="engine thread cap")
    p.add_argument("--out", help="write a .dma record here")
    p.add_argument("--color", help="write a label-colored PLY here")


def _resolve_cutter(args, parser):
    if bool(args.cutter) == bool(args.preset):
        parser.error("exactly one of --cutter or --preset is required")
    if args.cutter:
        try:
            return parse_cutter_spec(args.cutter, sigma=args.sigma)
        except ValueError as exc:
            parser.error(str(exc))
    return random_cutter(args.preset, args.seed, sigma=args.sigma)


def _options(args) -> AccessibilityOptions:
    return AccessibilityOptions(
        sigma=args.sigma,
        occlusion_fraction=args.occlusion_frac,
        epsilon=args.epsilon,
        prefilter=not args.no_prefilter,
        shaft_mode=args.shaft_mode,
    )


def _load_validated(args):
    try:
        mesh = load_mesh(args.mesh)
    except MillreachError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None
    report = validate(mesh)
    if not report.is_clean:
        problems = []
        if not report.is_watertight:
            problems.append("not watertight")
        if not report.is_manifold:
            problems.append("not manifold")
        if report.component_count != 1:
            problems.append(f"{report.component_count} components")
        msg = ", ".join(problems)
        if not args.force:
            print(f"error: mesh validation failed: {msg}", file=sys.stderr)
            return None
        logger.warning("mesh validation failed (%s), continuing due to --force", msg)
    if args.min_edge > 0:
        mesh = normalize_scale(mesh, args.min_edge)
    return mesh


def _record_meta(args) -> dict:
    return {
        "m": args.dirs,
        "seed": args.seed,
        "engine_version": __version__,
        "options": asdict(_options(args)),
    }


def _build_directions(args):
    try:
        return sample_directions(args.dirs, args.dir_mode, args.azimuth_count)
    except MillreachError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None


def cmd_analyze(args, parser) -> int:
    cutter = _resolve_cutter(args, parser)
    directions = _build_directions(args)
    if directions is None:
        return 1
    mesh = _load_validated(args)
    if mesh is None:
        return 1
    options = _options(args)
    t0 = time.perf_counter()
    try:
        samples = sample_surface(mesh, args.sites, args.lloyd_iters, args.seed)
        check_sampling_density(samples, cutter)
        if args.brute:
            report = brute_force_analyze(samples, directions, cutter, options)
        else:
            report = analyze(samples, directions, cutter, options, threads=args.threads)
        if args.out:
            record = DatasetRecord.build(
                shape_id=Path(args.mesh).stem, cutter=cutter,
                points=samples.sites, normals=samples.normals,
                label_i=report.inaccessible, label_o=report.occlusion,
                normalized=args.normalize, meta=_record_meta(args), sigma=args.sigma)
            write_record(record, args.out)
        if args.color:
            export_colored_mesh(mesh, samples, report, args.color)
    except (MillreachError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    wall = time.perf_counter() - t0
    print(f"sites: {len(samples)}")
    print(f"directions: {len(directions)}")
    print(f"inaccessible: {report.inaccessible_count}")
    print(f"occlusion: {report.occlusion_count}")
    print(f"time: {wall:.2f} s")
    return 0


def cmd_volume(args, parser) -> int:
    cutter = _resolve_cutter(args, parser)
    directions = _build_directions(args)
    if directions is None:
        return 1
    try:
        mesh = load_mesh(args.mesh)
    except MillreachError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    report = validate(mesh)
    if not report.is_watertight:
        print("error: not watertight", file=sys.stderr)
        return 1
    if args.min_edge > 0:
        mesh = normalize_scale(mesh, args.min_edge)
    options = _options(args)
    t0 = time.perf_counter()
    try:
        volume = sample_volume(mesh, args.resolution)
        print(f"{len(volume)} volume points")
        label_i = np.zeros(0, dtype=bool)
        inaccessible = 0
        if len(volume):
            obstacles = sample_surface(mesh, args.sites, args.lloyd_iters, args.seed)
            if args.brute:
                result = brute_force_analyze_volume(volume, obstacles, directions, cutter, options)
            else:
                result = analyze_volume(volume, obstacles, directions, cutter, options,
                                        threads=args.threads)
            label_i = result.inaccessible
            inaccessible = result.inaccessible_count
        if args.out:
            k = len(volume)
            record = DatasetRecord.build(
                shape_id=Path(args.mesh).stem, cutter=cutter,
                points=volume.points, normals=np.zeros((k, 3)),
                label_i=label_i if k else np.zeros(0, bool),
                label_o=np.zeros(k, dtype=bool),
                normalized=args.normalize, meta=_record_meta(args), sigma=args.sigma)
            write_record(record, args.out)
    except (MillreachError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"inaccessible: {inaccessible}")
    print(f"time: {time.perf_counter() - t0:.2f} s")
    return 0


def cmd_sample(args, parser) -> int:
    mesh = _load_validated(args)
    if mesh is None:
        return 1
    try:
        samples = sample_surface(mesh, args.sites, args.lloyd_iters, args.seed)
        if args.cutter or args.preset:
            cutter = _resolve_cutter(args, parser)
            density = check_sampling_density(samples, cutter)
            print(f"max-gap: {density.max_neighbor_gap:.6g} mm (ok: {density.ok})")
        if args.out:
            save_sites(samples, args.out)
    except (MillreachError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"sites: {len(samples)}")
    return 0


def cmd_dataset(args, parser) -> int:
    try:
        config = load_pipeline_config(args.config)
    except (MillreachError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        summary = run_pipeline(config, threads=args.threads)
    except (MillreachError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"ok: {summary.shapes_ok}")
    print(f"skipped: {summary.shapes_skipped}")
    print(f"manifest: {summary.manifest_path}")
    return 0


def _metric_lines(scores: dict, prefix: str = "") -> list[str]:
    return [
        f"{prefix}Acc_i {scores['acc_i']:.4f}",
        f"{prefix}F1_i {scores['f1_i']:.4f}",
        f"{prefix}Acc_o {scores['acc_o']:.4f}",
        f"{prefix}F1_o {scores['f1_o']:.4f}",
    ]


def cmd_evaluate(args, parser) -> int:
    gt_path = Path(args.ground_truth)
    pred_path = Path(args.predictions)
    try:
        if gt_path.is_dir():
            pairs = []
            for rec in sorted(gt_path.glob("*.dma")):
                pred = pred_path / f"{rec.stem}.txt"
                if not pred.exists():
                    print(f"error: no prediction file for {rec.name}", file=sys.stderr)
                    return 1
                pairs.append((rec, pred))
            if not pairs:
                print(f"error: no .dma records in {gt_path}", file=sys.stderr)
                return 1
        else:
            pairs = [(gt_path, pred_path)]
        all_scores = []
        for rec_path, pred in pairs:
            record = read_record(str(rec_path))
            pred_i, pred_o = read_predictions(str(pred))
            if len(pred_i) != len(record):
                raise LengthMismatch(
                    f"{pred}: {len(pred_i)} predictions for {len(record)} sites")
            scores = score_pair(record.label_i, record.label_o, pred_i, pred_o)
            all_scores.append((record.shape_id, scores))
    except (MillreachError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if len(all_scores) == 1 and not gt_path.is_dir():
        for line in _metric_lines(all_scores[0][1]):
            print(line)
        return 0
    if args.per_shape:
        for shape_id, scores in all_scores:
            print(f"{shape_id} " + " ".join(
                f"{k} {v:.4f}" for k, v in
                zip(("Acc_i", "F1_i", "Acc_o", "F1_o"),
                    (scores["acc_i"], scores["f1_i"], scores["acc_o"], scores["f1_o"]))))
    mean = {k: float(np.mean([s[k] for _, s in all_scores]))
            for k in ("acc_i", "f1_i", "acc_o", "f1_o")}
    for line in _metric_lines(mean, prefix="mean "):
        print(line)
    return 0


def cmd_colorize(args, parser) -> int:
    try:
        mesh = load_mesh(args.mesh)
        record = read_record(args.record)
    except MillreachError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    points = record.points
    if record.normalized:
        norm = record.meta.get("normalize")
        if not norm:
            print("error: normalized record lacks normalize meta; cannot map to mesh",
                  file=sys.stderr)
            return 1
        points = points / norm["scale"] + np.asarray(norm["center"])
    samples = SurfaceSamples(
        sites=np.ascontiguousarray(points),
        normals=np.ascontiguousarray(record.normals),
        site_triangle=np.full(len(record), -1, dtype=np.int64),
        mesh_hash="",
    )
    report = SimpleNamespace(inaccessible=record.label_i, occlusion=record.label_o)
    try:
        export_colored_mesh(mesh, samples, report, args.out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"colored mesh: {args.out}")
    return 0


def build_parser() -> CliParser:
    parser = CliParser(prog="millreach",
                       description="Cutter accessibility analysis for triangle meshes.")
    parser.add_argument("--version", action="version", version=f"millreach {__version__}")
    parser.add_argument("--verbose", action="store_true", help="info-level logging to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="label inaccessible and occlusion sites on a mesh")
    _add_common_analysis_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("volume", help="accessibility of interior stock grid points")
    _add_common_analysis_flags(p)
    p.add_argument("--resolution", type=int, required=True,
                   help="grid cells along the longest bbox edge")
    p.set_defaults(func=cmd_volume)

    p = sub.add_parser("sample", help="sample surface sites and export them")
    _add_common_analysis_flags(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("dataset", help="batch dataset pipeline")
    dsub = p.add_subparsers(dest="dataset_command", required=True)
    pr = dsub.add_parser("run", help="run the pipeline from a JSON config")
    pr.add_argument("config", help="JSON config mirroring PipelineConfig fields")
    pr.add_argument("--threads", type=int, default=1)
    pr.set_defaults(func=cmd_dataset)

    p = sub.add_parser("evaluate", help="score predictions against a record")
    p.add_argument("ground_truth", help=".dma record file or directory of records")
    p.add_argument("predictions", help="prediction file ('lI lO' per line) or directory")
    p.add_argument("--per-shape", action="store_true", help="print one line per shape")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("colorize", help="write a label-colored PLY from a record")
    p.add_argument("mesh")
    p.add_argument("record")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_colorize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args, parser)


def entrypoint():  # console script
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
