"""Synthetic slide fixtures: seeded disk fields in the interchange format.

Real acquisitions are not redistributable, so experiments and acceptance
checks run on generated slides: each tile holds non-overlapping rasterized
disks whose radii are drawn from a per-group normal distribution. Output is
fully deterministic for a fixed seed.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .ingestion import LabelMap, write_label_map


def rasterize_disk(grid: np.ndarray, cx: int, cy: int, r: int, label: int) -> None:
    """Paint the disk x^2 + y^2 <= r^2 (center-inclusion rule) into grid."""
    h, w = grid.shape
    y0, y1 = max(0, cy - r), min(h, cy + r + 1)
    x0, x1 = max(0, cx - r), min(w, cx + r + 1)
    ys, xs = np.mgrid[y0:y1, x0:x1]
    inside = (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r
    grid[y0:y1, x0:x1][inside] = label


def _place_disks(
    rng: np.random.Generator,
    tile_width: int,
    tile_height: int,
    n_instances: int,
    radius_mean: float,
    radius_sd: float,
    margin: int,
) -> list[tuple[int, int, int]]:
    placed: list[tuple[int, int, int]] = []
    attempts = 0
    while len(placed) < n_instances and attempts < 200 * n_instances:
        attempts += 1
        r = max(3, int(round(rng.normal(radius_mean, radius_sd))))
        lo_x, hi_x = margin + r + 1, tile_width - margin - r - 2
        lo_y, hi_y = margin + r + 1, tile_height - margin - r - 2
        if lo_x >= hi_x or lo_y >= hi_y:
            continue
        cx = int(rng.integers(lo_x, hi_x))
        cy = int(rng.integers(lo_y, hi_y))
        if all(
            (cx - ox) ** 2 + (cy - oy) ** 2 > (r + orr + 2) ** 2
            for ox, oy, orr in placed
        ):
            placed.append((cx, cy, r))
    return placed


def make_synthetic_slide(
    out_dir: str | Path,
    slide_id: str,
    group_label: str,
    tile_width: int = 192,
    tile_height: int = 192,
    n_tiles: int = 2,
    n_instances_per_tile: int = 5,
    radius_mean: float = 12.0,
    radius_sd: float = 1.0,
    seed: int = 0,
    microns_per_pixel: float | None = None,
) -> Path:
    """Write manifest + label maps for one synthetic slide; returns the
    manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    tiles = []
    for i in range(n_tiles):
        tile_id = f"t{i:03d}"
        grid = np.zeros((tile_height, tile_width), dtype=np.uint16)
        disks = _place_disks(
            rng, tile_width, tile_height, n_instances_per_tile, radius_mean, radius_sd, margin=2
        )
        for label, (cx, cy, r) in enumerate(disks, start=1):
            rasterize_disk(grid, cx, cy, r, label)
        label_map = LabelMap(width=tile_width, height=tile_height, labels=grid)
        write_label_map(label_map, out_dir / f"{tile_id}.lmh")
        tiles.append(
            {
                "tile_id": tile_id,
                "origin_x": i * tile_width,
                "origin_y": 0,
                "label_map_path": f"{tile_id}.lmh",
            }
        )
    manifest = {
        "slide_id": slide_id,
        "group_label": group_label,
        "tile_width": tile_width,
        "tile_height": tile_height,
        "tiles": tiles,
    }
    if microns_per_pixel is not None:
        manifest["microns_per_pixel"] = microns_per_pixel
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return manifest_path


def make_four_group_study(
    out_dir: str | Path,
    radius_means: dict[str, float] | None = None,
    n_tiles: int = 2,
    n_instances_per_tile: int = 8,
    seed: int = 7,
) -> dict[str, Path]:
    """Four condition slides with a planted size ordering (smaller generator
    radius -> smaller mean area). Returns group_label -> manifest path."""
    if radius_means is None:
        radius_means = {
            "2pct-day7": 9.0,
            "8pct-day7": 9.5,
            "2pct-day18": 16.0,
            "8pct-day18": 11.0,
        }
    out_dir = Path(out_dir)
    manifests = {}
    for i, (group, r_mean) in enumerate(sorted(radius_means.items())):
        slide_dir = out_dir / group.replace("%", "pct").replace(" ", "_")
        manifests[group] = make_synthetic_slide(
            slide_dir,
            slide_id=f"slide-{group}",
            group_label=group,
            n_tiles=n_tiles,
            n_instances_per_tile=n_instances_per_tile,
            radius_mean=r_mean,
            radius_sd=0.8,
            seed=seed + i,
            microns_per_pixel=0.65,
        )
    return manifests
