"""Mask interchange formats and tile geometry.

File formats (all bit-exact and dependency free):

* manifest.json  -- UTF-8 JSON describing one slide and its tile grid.
* <name>.lmh     -- UTF-8 JSON header ``{"width": int, "height": int}``.
* <name>.lmp     -- raw payload of width*height unsigned 16-bit little-endian
                    instance ids, row-major, no header, no padding.
* RLE document   -- UTF-8 JSON ``{"size": [height, width], "counts": [...]}``
                    with column-major run lengths, first run background.

A manifest's ``label_map_path`` points at the ``.lmh`` header; the payload is
the sibling file with the ``.lmp`` suffix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CountSumMismatch,
    DimensionMismatch,
    DuplicateTileId,
    IoFailure,
    MissingField,
    NonPositiveDimension,
    OutOfTileBounds,
    TruncatedPayload,
)

MAX_INSTANCE_ID = 0xFFFF  # ids are stored as u16 per tile


@dataclass(frozen=True)
class TileRecord:
    tile_id: str
    origin_x: int
    origin_y: int
    label_map_path: str

    def __post_init__(self):
        if self.origin_x < 0 or self.origin_y < 0:
            raise NonPositiveDimension(
                f"tile {self.tile_id!r}: origins must be >= 0, "
                f"got ({self.origin_x}, {self.origin_y})"
            )


@dataclass(frozen=True)
class TileManifest:
    slide_id: str
    group_label: str
    tile_width: int
    tile_height: int
    tiles: tuple[TileRecord, ...]
    microns_per_pixel: float | None = None

    def __post_init__(self):
        if self.tile_width <= 0 or self.tile_height <= 0:
            raise NonPositiveDimension(
                f"tile dimensions must be positive, got "
                f"{self.tile_width}x{self.tile_height}"
            )
        seen = set()
        for t in self.tiles:
            if t.tile_id in seen:
                raise DuplicateTileId(t.tile_id)
            seen.add(t.tile_id)
        mpp = self.microns_per_pixel
        if mpp is not None and not (np.isfinite(mpp) and mpp > 0):
            raise NonPositiveDimension(
                f"microns_per_pixel must be finite and > 0, got {mpp}"
            )


@dataclass
class LabelMap:
    """Per-tile instance-id raster; 0 is reserved for background."""

    width: int
    height: int
    labels: np.ndarray  # (height, width) uint16, row-major

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise NonPositiveDimension(
                f"label map dimensions must be positive, got "
                f"{self.width}x{self.height}"
            )
        arr = np.asarray(self.labels)
        if arr.shape != (self.height, self.width):
            raise DimensionMismatch(
                f"label grid shape {arr.shape} does not match declared "
                f"{self.height}x{self.width}"
            )
        if arr.size and (arr.min() < 0 or arr.max() > MAX_INSTANCE_ID):
            raise NonPositiveDimension(
                f"instance ids must fit in 16 bits, got max {arr.max()}"
            )
        self.labels = arr.astype(np.uint16)


@dataclass(frozen=True)
class RleMask:
    """Column-major uncompressed RLE of a binary mask, first run background."""

    height: int
    width: int
    counts: tuple[int, ...]

    def __post_init__(self):
        if any(c < 0 for c in self.counts):
            raise CountSumMismatch("run lengths must be non-negative")
        if sum(self.counts) != self.height * self.width:
            raise CountSumMismatch(
                f"sum(counts)={sum(self.counts)} != "
                f"{self.height}x{self.width}={self.height * self.width}"
            )
        for prev, cur in zip(self.counts, self.counts[1:]):
            if prev == 0 and cur == 0:
                raise CountSumMismatch(
                    "consecutive zero run lengths (only a single leading zero "
                    "is allowed)"
                )


def load_manifest(path: str | Path) -> TileManifest:
    """Parse and fully validate a slide manifest.

    Raises MissingField, DuplicateTileId or NonPositiveDimension; never
    returns a partially valid manifest.
    """
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise IoFailure(f"cannot read manifest {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise IoFailure(f"manifest {path} is not valid JSON: {e}") from e

    for key in ("slide_id", "group_label", "tile_width", "tile_height", "tiles"):
        if key not in payload:
            raise MissingField(key)
    tiles = []
    for entry in payload["tiles"]:
        for key in ("tile_id", "origin_x", "origin_y", "label_map_path"):
            if key not in entry:
                raise MissingField(f"tiles[].{key}")
        tiles.append(
            TileRecord(
                tile_id=str(entry["tile_id"]),
                origin_x=int(entry["origin_x"]),
                origin_y=int(entry["origin_y"]),
                label_map_path=str(entry["label_map_path"]),
            )
        )
    return TileManifest(
        slide_id=str(payload["slide_id"]),
        group_label=str(payload["group_label"]),
        tile_width=int(payload["tile_width"]),
        tile_height=int(payload["tile_height"]),
        tiles=tuple(tiles),
        microns_per_pixel=(
            float(payload["microns_per_pixel"])
            if payload.get("microns_per_pixel") is not None
            else None
        ),
    )


def _header_payload_paths(path: str | Path) -> tuple[Path, Path]:
    p = Path(path)
    if p.suffix == ".lmp":
        return p.with_suffix(".lmh"), p
    if p.suffix == ".lmh":
        return p, p.with_suffix(".lmp")
    return p.with_suffix(p.suffix + ".lmh"), p.with_suffix(p.suffix + ".lmp")


def read_label_map(path: str | Path, expected_width: int, expected_height: int) -> LabelMap:
    """Read a `.lmh`/`.lmp` pair, checking declared against expected dims."""
    header_path, payload_path = _header_payload_paths(path)
    try:
        header = json.loads(header_path.read_text(encoding="utf-8"))
    except OSError as e:
        raise IoFailure(f"cannot read label map header {header_path}: {e}") from e
    except json.JSONDecodeError as e:
        raise IoFailure(f"label map header {header_path} is not valid JSON: {e}") from e
    width, height = int(header["width"]), int(header["height"])
    if (width, height) != (expected_width, expected_height):
        raise DimensionMismatch(
            f"{header_path}: declared {width}x{height}, expected "
            f"{expected_width}x{expected_height}"
        )
    try:
        raw = payload_path.read_bytes()
    except OSError as e:
        raise IoFailure(f"cannot read label map payload {payload_path}: {e}") from e
    expected_bytes = width * height * 2
    if len(raw) != expected_bytes:
        raise TruncatedPayload(
            f"{payload_path}: payload has {len(raw)} bytes, expected {expected_bytes}"
        )
    labels = np.frombuffer(raw, dtype="<u2").reshape(height, width)
    return LabelMap(width=width, height=height, labels=labels)


def write_label_map(label_map: LabelMap, path: str | Path) -> None:
    """Write the `.lmh`/`.lmp` pair; read_label_map round-trips bit-exactly."""
    header_path, payload_path = _header_payload_paths(path)
    header = json.dumps({"width": label_map.width, "height": label_map.height})
    payload = np.ascontiguousarray(label_map.labels, dtype="<u2").tobytes()
    try:
        header_path.write_text(header, encoding="utf-8")
        payload_path.write_bytes(payload)
    except OSError as e:
        raise IoFailure(f"cannot write label map {path}: {e}") from e


def rle_encode(mask: np.ndarray) -> RleMask:
    """Encode a binary (h, w) grid as column-major run lengths.

    The first count is the leading background run (0 when pixel (0, 0) is
    foreground), matching the uncompressed-RLE interchange convention.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2 or mask.size == 0:
        raise NonPositiveDimension(f"mask must be a non-empty 2-D grid, got shape {mask.shape}")
    h, w = mask.shape
    flat = mask.flatten(order="F")
    # boundaries between runs, plus virtual start/end
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    edges = np.concatenate(([0], change, [flat.size]))
    counts = np.diff(edges).tolist()
    if flat[0]:
        counts = [0] + counts
    return RleMask(height=h, width=w, counts=tuple(int(c) for c in counts))


def rle_decode(rle: RleMask) -> np.ndarray:
    """Inverse of rle_encode: expand counts back to a (h, w) boolean grid."""
    total = rle.height * rle.width
    if sum(rle.counts) != total:
        raise CountSumMismatch(
            f"sum(counts)={sum(rle.counts)} != {rle.height}x{rle.width}={total}"
        )
    flat = np.zeros(total, dtype=bool)
    pos = 0
    value = False
    for count in rle.counts:
        if value:
            flat[pos : pos + count] = True
        pos += count
        value = not value
    return flat.reshape((rle.height, rle.width), order="F")


def write_rle_json(rle: RleMask, path: str | Path) -> None:
    doc = {"size": [rle.height, rle.width], "counts": list(rle.counts)}
    try:
        Path(path).write_text(json.dumps(doc), encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot write RLE document {path}: {e}") from e


def read_rle_json(path: str | Path) -> RleMask:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise IoFailure(f"cannot read RLE document {path}: {e}") from e
    h, w = (int(v) for v in doc["size"])
    return RleMask(height=h, width=w, counts=tuple(int(c) for c in doc["counts"]))


def to_global_coords(
    tile: TileRecord, x_local: int, y_local: int, tile_width: int, tile_height: int
) -> tuple[int, int]:
    """Map tile-local pixel coordinates to slide-global coordinates."""
    if not (0 <= x_local < tile_width and 0 <= y_local < tile_height):
        raise OutOfTileBounds(
            f"local ({x_local}, {y_local}) outside tile "
            f"{tile.tile_id!r} of size {tile_width}x{tile_height}"
        )
    return tile.origin_x + x_local, tile.origin_y + y_local
