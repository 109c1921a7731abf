"""Serialization of measurements, statistics and evaluation results.

All writers are deterministic: fixed header order, floats rendered with 4
decimal places in CSV, stable JSON key order, LF line endings. Physical
units (um) are emitted only when the manifest carries microns_per_pixel.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IoFailure, MalformedMeasurements
from .evaluation import ApResult
from .ingestion import LabelMap, TileManifest, TileRecord
from .morphometrics import MorphometricRecord
from .postprocess import extract_instances
from .raster import GRAY, WHITE, hatch_mask, instance_color, ppm_bytes
from .stats import GroupSummary, TTestResult

CSV_HEADER = [
    "slide_id",
    "group_label",
    "global_id",
    "tile_id",
    "centroid_x_global",
    "centroid_y_global",
    "area_px",
    "perimeter_px",
    "radius_px",
    "non_smoothness",
    "non_circularity",
    "area_um2",
    "radius_um",
    "excluded",
]


@dataclass(frozen=True)
class MeasurementRow:
    slide_id: str
    group_label: str
    global_id: str
    tile_id: str
    centroid_x_global: float
    centroid_y_global: float
    area_px: int
    perimeter_px: float
    radius_px: float
    non_smoothness: float | None
    non_circularity: float
    area_um2: float | None
    radius_um: float | None
    excluded: bool


def make_row(
    manifest: TileManifest,
    tile: TileRecord,
    record: MorphometricRecord,
    excluded: bool = False,
) -> MeasurementRow:
    mpp = manifest.microns_per_pixel
    return MeasurementRow(
        slide_id=manifest.slide_id,
        group_label=manifest.group_label,
        global_id=record.global_id,
        tile_id=tile.tile_id,
        centroid_x_global=record.centroid_global[0],
        centroid_y_global=record.centroid_global[1],
        area_px=record.area,
        perimeter_px=record.perimeter,
        radius_px=record.radius,
        non_smoothness=record.non_smoothness,
        non_circularity=record.non_circularity,
        area_um2=record.area * mpp * mpp if mpp is not None else None,
        radius_um=record.radius * mpp if mpp is not None else None,
        excluded=excluded,
    )


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def measurements_csv_text(rows: list[MeasurementRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in sorted(rows, key=lambda r: r.global_id):
        writer.writerow(
            [
                row.slide_id,
                row.group_label,
                row.global_id,
                row.tile_id,
                _fmt(row.centroid_x_global),
                _fmt(row.centroid_y_global),
                row.area_px,
                _fmt(row.perimeter_px),
                _fmt(row.radius_px),
                _fmt(row.non_smoothness),
                _fmt(row.non_circularity),
                _fmt(row.area_um2),
                _fmt(row.radius_um),
                _fmt(row.excluded),
            ]
        )
    return buf.getvalue()


def write_measurements_csv(rows: list[MeasurementRow], path: str | Path) -> None:
    try:
        Path(path).write_text(measurements_csv_text(rows), encoding="utf-8", newline="")
    except OSError as e:
        raise IoFailure(f"cannot write measurements CSV {path}: {e}") from e


def read_measurements_csv(path: str | Path) -> list[MeasurementRow]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot read measurements CSV {path}: {e}") from e
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or [f for f in CSV_HEADER if f not in reader.fieldnames]:
        missing = set(CSV_HEADER) - set(reader.fieldnames or [])
        raise MalformedMeasurements(f"{path}: missing columns {sorted(missing)}")
    rows = []
    for i, rec in enumerate(reader, start=2):
        try:
            rows.append(
                MeasurementRow(
                    slide_id=rec["slide_id"],
                    group_label=rec["group_label"],
                    global_id=rec["global_id"],
                    tile_id=rec["tile_id"],
                    centroid_x_global=float(rec["centroid_x_global"]),
                    centroid_y_global=float(rec["centroid_y_global"]),
                    area_px=int(rec["area_px"]),
                    perimeter_px=float(rec["perimeter_px"]),
                    radius_px=float(rec["radius_px"]),
                    non_smoothness=(
                        float(rec["non_smoothness"]) if rec["non_smoothness"] else None
                    ),
                    non_circularity=float(rec["non_circularity"]),
                    area_um2=float(rec["area_um2"]) if rec["area_um2"] else None,
                    radius_um=float(rec["radius_um"]) if rec["radius_um"] else None,
                    excluded=rec["excluded"] == "true",
                )
            )
        except (KeyError, ValueError) as e:
            raise MalformedMeasurements(f"{path}: bad row {i}: {e}") from e
    return rows


def _num(value):
    """Ints stay ints in JSON (df of a Student test is integral)."""
    if isinstance(value, float) and value.is_integer() and abs(value) < 2**53:
        return int(value)
    return value


def stats_json_doc(
    summaries: list[GroupSummary], ttests: list[TTestResult], alpha: float
) -> dict:
    return {
        "alpha": alpha,
        "summaries": [
            {
                "group": s.group_label,
                "property": s.property_name,
                "n": s.n,
                "mean": s.mean,
                "sd": s.sd,
                "median": s.median,
                "q1": s.q1,
                "q3": s.q3,
            }
            for s in summaries
        ],
        "ttests": [
            {
                "a": t.group_a,
                "b": t.group_b,
                "property": t.property_name,
                "t": t.t_statistic,
                "df": _num(t.degrees_of_freedom),
                "p": t.p_value,
                "significant": t.significant,
            }
            for t in ttests
        ],
    }


def _write_json(doc: dict, path: str | Path) -> None:
    try:
        Path(path).write_text(
            json.dumps(doc, separators=(",", ":")) + "\n", encoding="utf-8", newline=""
        )
    except OSError as e:
        raise IoFailure(f"cannot write JSON {path}: {e}") from e


def write_stats_json(
    summaries: list[GroupSummary],
    ttests: list[TTestResult],
    alpha: float,
    path: str | Path,
) -> None:
    _write_json(stats_json_doc(summaries, ttests, alpha), path)


def evaluation_json_doc(per_threshold: list[ApResult], map_value: float) -> dict:
    return {
        "thresholds": [r.threshold for r in per_threshold],
        "per_threshold": [
            {
                "t": r.threshold,
                "tp": r.true_positives,
                "fp": r.false_positives,
                "fn": r.false_negatives,
                "ap": r.ap,
            }
            for r in per_threshold
        ],
        "map": map_value,
    }


def write_evaluation_json(
    per_threshold: list[ApResult], map_value: float, path: str | Path
) -> None:
    _write_json(evaluation_json_doc(per_threshold, map_value), path)


def overlay_pixels(
    label_map: LabelMap,
    tile: TileRecord,
    retained: set[str],
    excluded: set[str],
) -> np.ndarray:
    """RGB overlay raster: retained instances in their label color, excluded
    ones gray-hatched, background white."""
    img = np.full((label_map.height, label_map.width, 3), WHITE[0], dtype=np.uint8)
    for inst in extract_instances(label_map, tile):
        xs = np.fromiter((x for x, _ in inst.pixels), dtype=np.int64, count=inst.area)
        ys = np.fromiter((y for _, y in inst.pixels), dtype=np.int64, count=inst.area)
        if inst.global_id in retained:
            img[ys, xs] = instance_color(inst.local_label)
        elif inst.global_id in excluded:
            stripes = hatch_mask(xs, ys)
            img[ys[stripes], xs[stripes]] = GRAY
    return img


def render_overlay(
    label_map: LabelMap,
    tile: TileRecord,
    retained: set[str],
    excluded: set[str],
    path: str | Path,
) -> None:
    """Write the tile overlay as binary PPM; byte-identical for identical
    inputs. The PPM comment line carries the tile id."""
    img = overlay_pixels(label_map, tile, retained, excluded)
    try:
        Path(path).write_bytes(ppm_bytes(img, comment=f"tile:{tile.tile_id}"))
    except OSError as e:
        raise IoFailure(f"cannot write overlay {path}: {e}") from e
