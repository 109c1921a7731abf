"""Shared fixture builders: hand-rasterized shapes and instance wrappers.

Rasterizers here are written as plain loops, independent of the package's
vectorized paths, so they double as enumeration oracles.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from orgmorph.ingestion import LabelMap, TileRecord
from orgmorph.postprocess import InstanceMask


def make_instance(pixels, tile_id="t0", local_label=1, global_id=None) -> InstanceMask:
    pixels = set(pixels)
    xs = [p[0] for p in pixels]
    ys = [p[1] for p in pixels]
    return InstanceMask(
        global_id=global_id or f"{tile_id}:{local_label}",
        tile_id=tile_id,
        local_label=local_label,
        bbox=(min(xs), min(ys), max(xs), max(ys)),
        pixels=frozenset(pixels),
    )


def disk_pixels(r: int, cx: int = 0, cy: int = 0, corner_centered: bool = True):
    """Digital disk. Corner-centered ((x-.5)^2+(y-.5)^2 <= r^2) by default,
    which avoids the single-pixel polar caps of integer-centered circles;
    pass corner_centered=False for the x^2+y^2 <= r^2 center-inclusion rule."""
    pts = []
    for x in range(-r - 2, r + 3):
        for y in range(-r - 2, r + 3):
            if corner_centered:
                inside = (x - 0.5) ** 2 + (y - 0.5) ** 2 <= r * r
            else:
                inside = x * x + y * y <= r * r
            if inside:
                pts.append((x + cx, y + cy))
    return pts


def ellipse_pixels(a: int, b: int, cx: int = 0, cy: int = 0):
    """Axis-aligned digital ellipse whose boundary pixel centers track the
    (a, b) ellipse: centers within the half-pixel-dilated ellipse are
    included, countering the inward bias of center-inclusion digitization."""
    pts = []
    for x in range(-a - 1, a + 2):
        for y in range(-b - 1, b + 2):
            if (x / (a + 0.5)) ** 2 + (y / (b + 0.5)) ** 2 <= 1.0:
                pts.append((x + cx, y + cy))
    return pts


def annulus_pixels(r_outer: int, r_inner: int, cx: int = 0, cy: int = 0):
    """Digital ring: outer disk minus a strictly smaller concentric disk."""
    pts = []
    for x in range(-r_outer, r_outer + 1):
        for y in range(-r_outer, r_outer + 1):
            d2 = x * x + y * y
            if r_inner * r_inner < d2 <= r_outer * r_outer:
                pts.append((x + cx, y + cy))
    return pts


def star_pixels(outer: int, inner: int, points: int = 8, cx: int = 0, cy: int = 0):
    """Star-shaped blob: radius alternates between outer and inner with angle."""
    pts = []
    for x in range(-outer, outer + 1):
        for y in range(-outer, outer + 1):
            rr = math.hypot(x, y)
            ang = math.atan2(y, x)
            limit = inner + (outer - inner) * 0.5 * (1 + math.cos(points * ang))
            if rr <= limit:
                pts.append((x + cx, y + cy))
    return pts


def label_map_from_instances(width, height, pixel_sets) -> LabelMap:
    """Paint pixel sets as labels 1..n into a fresh label map."""
    grid = np.zeros((height, width), dtype=np.uint16)
    for label, pts in enumerate(pixel_sets, start=1):
        for x, y in pts:
            grid[y, x] = label
    return LabelMap(width=width, height=height, labels=grid)


@pytest.fixture
def tile0():
    return TileRecord(tile_id="t0", origin_x=0, origin_y=0, label_map_path="t0.lmh")
