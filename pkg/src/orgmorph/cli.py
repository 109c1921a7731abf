"""Pipeline entry point: run / stats / eval / serve subcommands.

``run`` post-processes and measures one slide, ``stats`` compares groups
across measurement CSVs, ``eval`` scores predictions against ground truth,
``serve`` hosts the curation API + UI on localhost.

Exit codes: 0 success, 1 typed pipeline failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .errors import EmptySample, IoFailure, PipelineError, TileMismatch
from .evaluation import IOU_THRESHOLDS, average_precision_at, globalized
from .ingestion import TileManifest, TileRecord, load_manifest, read_label_map
from .morphometrics import measure
from .postprocess import (
    ExclusionList,
    PostprocessConfig,
    extract_instances,
    load_exclusions,
    run_postprocess,
)
from .reporting import (
    make_row,
    read_measurements_csv,
    render_overlay,
    write_evaluation_json,
    write_measurements_csv,
    write_stats_json,
)
from .stats import PROPERTY_NAMES, GroupSample, compare_all_pairs, summarize

RUN_FILE = "run.json"
MEASUREMENTS_FILE = "measurements.csv"
PROVENANCE_FILE = "provenance.json"
EXCLUSIONS_FILE = "exclusions.json"
OVERLAYS_DIR = "overlays"


@dataclass(frozen=True)
class PipelineConfig:
    background_fraction: float = 0.5
    border_margin: int = 1
    min_area: int = 0
    alpha: float = 0.05
    welch: bool = False
    jobs: int | None = None  # None = available parallelism

    def __post_init__(self):
        if not (0 < self.background_fraction <= 1):
            raise PipelineError(
                f"background fraction must be in (0, 1], got {self.background_fraction}"
            )
        if self.border_margin < 1:
            raise PipelineError(f"border margin must be >= 1, got {self.border_margin}")
        if self.min_area < 0:
            raise PipelineError(f"min area must be >= 0, got {self.min_area}")
        if not (0 < self.alpha < 1):
            raise PipelineError(f"alpha must be in (0, 1), got {self.alpha}")

    def postprocess(self) -> PostprocessConfig:
        return PostprocessConfig(
            background_fraction=self.background_fraction,
            border_margin=self.border_margin,
            min_area=self.min_area,
        )


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise IoFailure(f"cannot read config file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise IoFailure(f"config file {path} is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise IoFailure(f"config file {path} must hold a JSON object")
    return cfg


def _pick(args: argparse.Namespace, cfg: dict, name: str, default):
    """Flag value wins over config-file value wins over default."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in cfg:
        return cfg[name]
    return default


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    cfg = _load_config_file(getattr(args, "config", None))
    return PipelineConfig(
        background_fraction=float(_pick(args, cfg, "background_frac", 0.5)),
        border_margin=int(_pick(args, cfg, "border_margin", 1)),
        min_area=int(_pick(args, cfg, "min_area", 0)),
        alpha=float(_pick(args, cfg, "alpha", 0.05)),
        welch=bool(_pick(args, cfg, "welch", False)),
        jobs=(lambda j: None if j is None else int(j))(_pick(args, cfg, "jobs", None)),
    )


def _process_tile(manifest: TileManifest, tile: TileRecord, base_dir: Path, config: PipelineConfig):
    label_map = read_label_map(
        base_dir / tile.label_map_path, manifest.tile_width, manifest.tile_height
    )
    log_entries: list = []
    instances = run_postprocess(label_map, tile, config.postprocess(), log_entries)
    records = [measure(inst, tile) for inst in instances]
    return tile, label_map, instances, records, log_entries


def cmd_run(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    manifest = load_manifest(args.manifest)
    base_dir = Path(args.manifest).parent
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    exclusions_path = out_dir / EXCLUSIONS_FILE
    exclusions = (
        load_exclusions(exclusions_path) if exclusions_path.exists() else ExclusionList()
    )
    excluded_ids = exclusions.excluded_ids()

    staging = out_dir / ".staging"
    if staging.exists():
        shutil.rmtree(staging)
    (staging / OVERLAYS_DIR).mkdir(parents=True)
    try:
        jobs = config.jobs or os.cpu_count() or 1
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(
                pool.map(
                    lambda tile: _process_tile(manifest, tile, base_dir, config),
                    manifest.tiles,
                )
            )

        rows = []
        provenance: list = []
        extracted_total = 0
        for tile, label_map, instances, records, log_entries in results:
            provenance.extend(log_entries)
            extracted_total += len(instances) + len(log_entries)
            retained, excluded = set(), set()
            for inst, record in zip(instances, records):
                is_excluded = inst.global_id in excluded_ids
                rows.append(make_row(manifest, tile, record, excluded=is_excluded))
                if is_excluded:
                    excluded.add(inst.global_id)
                    provenance.append(
                        (inst.global_id, f"curated:{excluded_ids[inst.global_id]}")
                    )
                else:
                    retained.add(inst.global_id)
            render_overlay(
                label_map, tile, retained, excluded,
                staging / OVERLAYS_DIR / f"{tile.tile_id}.ppm",
            )

        write_measurements_csv(rows, staging / MEASUREMENTS_FILE)
        (staging / PROVENANCE_FILE).write_text(
            json.dumps(
                {
                    "slide_id": manifest.slide_id,
                    "extracted": extracted_total,
                    "measured": len(rows),
                    "entries": [[gid, action] for gid, action in provenance],
                },
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )
        (staging / RUN_FILE).write_text(
            json.dumps(
                {
                    "slide_id": manifest.slide_id,
                    "group_label": manifest.group_label,
                    "manifest_path": str(Path(args.manifest).resolve()),
                    "config": {
                        "background_frac": config.background_fraction,
                        "border_margin": config.border_margin,
                        "min_area": config.min_area,
                        "alpha": config.alpha,
                        "welch": config.welch,
                    },
                },
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )

        for name in (MEASUREMENTS_FILE, PROVENANCE_FILE, RUN_FILE):
            os.replace(staging / name, out_dir / name)
        final_overlays = out_dir / OVERLAYS_DIR
        if final_overlays.exists():
            shutil.rmtree(final_overlays)
        os.replace(staging / OVERLAYS_DIR, final_overlays)
    finally:
        if staging.exists():
            shutil.rmtree(staging, ignore_errors=True)
    print(f"measured {len(rows)} instances across {len(manifest.tiles)} tiles -> {out_dir}")
    return 0


_PROPERTY_GETTERS = {
    "perimeter": lambda r: r.perimeter_px,
    "area": lambda r: float(r.area_px),
    "radius": lambda r: r.radius_px,
    "non_smoothness": lambda r: r.non_smoothness,  # may be None: skipped
    "non_circularity": lambda r: r.non_circularity,
}


def cmd_stats(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    rows = []
    for csv_path in args.csvs:
        rows.extend(read_measurements_csv(csv_path))
    active = [r for r in rows if not r.excluded]
    if not active:
        raise EmptySample("no non-excluded measurement rows in the input CSVs")

    samples: list[GroupSample] = []
    groups = sorted({r.group_label for r in active})
    for group in groups:
        group_rows = [r for r in active if r.group_label == group]
        for prop in PROPERTY_NAMES:
            values = [
                v for v in (_PROPERTY_GETTERS[prop](r) for r in group_rows) if v is not None
            ]
            if values:  # unavailable non_smoothness never imputed
                samples.append(
                    GroupSample(group_label=group, property_name=prop, values=tuple(values))
                )
    summaries = [summarize(s) for s in samples]
    ttests = (
        compare_all_pairs(
            samples, alpha=config.alpha, welch=config.welch, skip_insufficient=True
        )
        if len(groups) >= 2
        else []
    )
    write_stats_json(summaries, ttests, config.alpha, args.out)
    print(f"{len(summaries)} summaries, {len(ttests)} pairwise tests -> {args.out}")
    return 0


def _load_eval_instances(manifest_path: str):
    manifest = load_manifest(manifest_path)
    base_dir = Path(manifest_path).parent
    instances = []
    for tile in manifest.tiles:
        label_map = read_label_map(
            base_dir / tile.label_map_path, manifest.tile_width, manifest.tile_height
        )
        instances.extend(
            globalized(extract_instances(label_map, tile), tile.origin_x, tile.origin_y)
        )
    return manifest, instances


def cmd_eval(args: argparse.Namespace) -> int:
    pred_manifest, pred = _load_eval_instances(args.pred_manifest)
    gt_manifest, gt = _load_eval_instances(args.gt_manifest)
    pred_tiles = {t.tile_id for t in pred_manifest.tiles}
    gt_tiles = {t.tile_id for t in gt_manifest.tiles}
    if pred_tiles != gt_tiles:
        raise TileMismatch(
            f"prediction and ground-truth manifests are not tile-aligned: "
            f"{sorted(pred_tiles ^ gt_tiles)}"
        )
    per_threshold = [average_precision_at(pred, gt, t) for t in IOU_THRESHOLDS]
    map_value = sum(r.ap for r in per_threshold) / len(per_threshold)
    write_evaluation_json(per_threshold, map_value, args.out)
    print(f"{map_value:.4f}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    # imported lazily so the measurement path has no HTTP baggage
    from .review_service import ReviewService, create_server

    service = ReviewService.from_run_dir(Path(args.out), ui_dir=args.ui_dir)
    server = create_server(service, port=args.port)
    host, port = server.server_address[:2]
    print(f"review service on http://{host}:{port}/ (Ctrl-C to stop)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        service.flush()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orgmorph",
        description="Organoid mask post-processing, morphometrics and curation pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p):
        p.add_argument("--config", help="JSON config file (flags override it)")
        p.add_argument("--background-frac", dest="background_frac", type=float)
        p.add_argument("--border-margin", dest="border_margin", type=int)
        p.add_argument("--min-area", dest="min_area", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--welch", action=argparse.BooleanOptionalAction, default=None)
        p.add_argument("--jobs", type=int)

    p_run = sub.add_parser("run", help="post-process and measure one slide")
    p_run.add_argument("--manifest", required=True)
    p_run.add_argument("--out", required=True)
    add_config_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_stats = sub.add_parser("stats", help="group statistics over measurement CSVs")
    p_stats.add_argument("csvs", nargs="+", metavar="CSV")
    p_stats.add_argument("--out", required=True)
    add_config_flags(p_stats)
    p_stats.set_defaults(func=cmd_stats)

    p_eval = sub.add_parser("eval", help="score predictions against ground truth")
    p_eval.add_argument("pred_manifest")
    p_eval.add_argument("gt_manifest")
    p_eval.add_argument("--out", default="evaluation.json")
    p_eval.set_defaults(func=cmd_eval)

    p_serve = sub.add_parser("serve", help="host the curation API and review UI")
    p_serve.add_argument("--out", required=True, help="directory of a completed run")
    p_serve.add_argument("--port", type=int, default=8377)
    p_serve.add_argument("--ui-dir", dest="ui_dir", default=None,
                         help="directory with a built review UI bundle")
    p_serve.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PipelineError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
