"""Instance-mask post-processing for tiled organoid detections.

Raw per-tile label maps go through a fixed stage order:

    extract_instances -> remove_background -> exclude_border
        -> fill_holes (each) -> merge_contained -> filter_min_area

Border exclusion runs before hole filling so cropped edge objects cannot be
resurrected by the fill. Human keep/exclude decisions (ExclusionList) are
applied afterwards at the slide level via apply_exclusions.

Connectivity: foreground components are 8-connected; the hole test uses
4-connected background reachability.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import IoFailure
from .ingestion import LabelMap, TileManifest, TileRecord

log = logging.getLogger(__name__)

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)

ProvenanceLog = list  # list of (global_id, action) tuples


@dataclass(frozen=True)
class InstanceMask:
    """One detected object: a pixel set with provenance back to its tile."""

    global_id: str
    tile_id: str
    local_label: int
    bbox: tuple[int, int, int, int]  # (min_x, min_y, max_x, max_y) inclusive
    pixels: frozenset[tuple[int, int]]  # tile-local (x, y)

    @property
    def area(self) -> int:
        return len(self.pixels)

    def to_grid(self) -> np.ndarray:
        """Render the bbox-cropped pixel set as a boolean (h, w) array."""
        min_x, min_y, max_x, max_y = self.bbox
        grid = np.zeros((max_y - min_y + 1, max_x - min_x + 1), dtype=bool)
        xs = np.fromiter((x for x, _ in self.pixels), dtype=np.int64, count=len(self.pixels))
        ys = np.fromiter((y for _, y in self.pixels), dtype=np.int64, count=len(self.pixels))
        grid[ys - min_y, xs - min_x] = True
        return grid


def _mask_to_instance(
    tile_id: str, global_id: str, local_label: int, xs: np.ndarray, ys: np.ndarray
) -> InstanceMask:
    pixels = frozenset(zip(xs.tolist(), ys.tolist()))
    return InstanceMask(
        global_id=global_id,
        tile_id=tile_id,
        local_label=local_label,
        bbox=(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())),
        pixels=pixels,
    )


@dataclass
class ExclusionEntry:
    global_id: str
    excluded: bool
    reason: str
    timestamp: int  # UTC seconds


@dataclass
class ExclusionList:
    """Persistent human keep/exclude decisions, one entry per global_id."""

    entries: list[ExclusionEntry] = field(default_factory=list)

    def by_id(self) -> dict[str, ExclusionEntry]:
        # last write wins
        return {e.global_id: e for e in self.entries}

    def excluded_ids(self) -> dict[str, str]:
        """Map of currently excluded global_id -> reason."""
        return {e.global_id: e.reason for e in self.by_id().values() if e.excluded}


def load_exclusions(path: str | Path) -> ExclusionList:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise IoFailure(f"cannot read exclusion list {path}: {e}") from e
    entries = [
        ExclusionEntry(
            global_id=str(e["global_id"]),
            excluded=bool(e["excluded"]),
            reason=str(e.get("reason", "")),
            timestamp=int(e.get("timestamp", 0)),
        )
        for e in raw
    ]
    # collapse to one entry per id, keeping file order of last writes
    collapsed = list({e.global_id: e for e in entries}.values())
    return ExclusionList(entries=collapsed)


def save_exclusions(exclusions: ExclusionList, path: str | Path) -> None:
    """Atomic write (temp file + rename) so readers never see a torn file."""
    path = Path(path)
    doc = [
        {
            "global_id": e.global_id,
            "excluded": e.excluded,
            "reason": e.reason,
            "timestamp": e.timestamp,
        }
        for e in exclusions.entries
    ]
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(doc, indent=2))
        os.replace(tmp, path)
    except OSError as e:
        raise IoFailure(f"cannot write exclusion list {path}: {e}") from e


@dataclass
class InstanceSet:
    """Post-processed instances for one slide plus the drop/merge audit log."""

    manifest: TileManifest
    instances: list[InstanceMask]
    provenance_log: ProvenanceLog = field(default_factory=list)


@dataclass(frozen=True)
class PostprocessConfig:
    background_fraction: float = 0.5
    border_margin: int = 1
    min_area: int = 0

    def __post_init__(self):
        if not (0 < self.background_fraction <= 1):
            raise ValueError(f"background_fraction must be in (0, 1], got {self.background_fraction}")
        if self.border_margin < 1:
            raise ValueError(f"border_margin must be >= 1, got {self.border_margin}")
        if self.min_area < 0:
            raise ValueError(f"min_area must be >= 0, got {self.min_area}")


def extract_instances(label_map: LabelMap, tile: TileRecord) -> list[InstanceMask]:
    """Split every non-zero id into its 8-connected components.

    An id with k > 1 disconnected components yields k instances with global
    ids "{tile_id}:{label}.1" .. ".k" (components ordered by first pixel in
    row-major scan order); a single-component id keeps "{tile_id}:{label}".
    """
    labels = label_map.labels
    instances: list[InstanceMask] = []
    for local_label in np.unique(labels):
        local_label = int(local_label)
        if local_label == 0:
            continue
        mask = labels == local_label
        comp, n = ndimage.label(mask, structure=EIGHT_CONNECTED)
        parts = []
        for comp_id in range(1, n + 1):
            ys, xs = np.nonzero(comp == comp_id)
            # row-major position of the first pixel, for deterministic ordering
            first = (int(ys[0]), int(xs[0]))
            parts.append((first, xs, ys))
        parts.sort(key=lambda p: p[0])
        for k, (_, xs, ys) in enumerate(parts, start=1):
            gid = (
                f"{tile.tile_id}:{local_label}"
                if n == 1
                else f"{tile.tile_id}:{local_label}.{k}"
            )
            instances.append(_mask_to_instance(tile.tile_id, gid, local_label, xs, ys))
    return instances


def remove_background(
    instances: list[InstanceMask],
    tile_width: int,
    tile_height: int,
    background_fraction: float = 0.5,
    log_entries: ProvenanceLog | None = None,
) -> list[InstanceMask]:
    """Drop near-tile-sized masks: the segmenter misreading background as an
    object. An instance is dropped when area >= fraction * tile area."""
    threshold = background_fraction * tile_width * tile_height
    kept = []
    for inst in instances:
        if inst.area >= threshold:
            if log_entries is not None:
                log_entries.append((inst.global_id, "background"))
        else:
            kept.append(inst)
    return kept


def exclude_border(
    instances: list[InstanceMask],
    tile_width: int,
    tile_height: int,
    margin: int = 1,
    log_entries: ProvenanceLog | None = None,
) -> list[InstanceMask]:
    """Drop instances touching the tile border margin (objects cut by the
    patch edge cannot be measured reliably)."""
    kept = []
    for inst in instances:
        min_x, min_y, max_x, max_y = inst.bbox
        touches = (
            min_x < margin
            or min_y < margin
            or max_x >= tile_width - margin
            or max_y >= tile_height - margin
        )
        if touches:
            if log_entries is not None:
                log_entries.append((inst.global_id, "border"))
        else:
            kept.append(inst)
    return kept


def fill_holes(instance: InstanceMask, tile_width: int, tile_height: int) -> InstanceMask:
    """Add interior holes (background not 4-connected-reachable from outside
    the bbox) to the pixel set. Idempotent; bbox is unchanged."""
    min_x, min_y, _, _ = instance.bbox
    grid = instance.to_grid()
    filled = ndimage.binary_fill_holes(grid)  # default structure = 4-connected
    if int(filled.sum()) == instance.area:
        return instance
    ys, xs = np.nonzero(filled)
    return replace(
        instance,
        pixels=frozenset(zip((xs + min_x).tolist(), (ys + min_y).tolist())),
    )


def merge_contained(
    instances: list[InstanceMask],
    log_entries: ProvenanceLog | None = None,
) -> list[InstanceMask]:
    """Merge any instance fully contained in another's (filled) pixel set.

    Repairs lumen splits where one organoid was demarcated as ring + core.
    Expects fill_holes to have run on every instance. Iterates to a fixed
    point; for identical pixel sets the lexicographically lower global_id
    survives.
    """
    current = list(instances)
    changed = True
    while changed:
        changed = False
        survivors: list[InstanceMask] = []
        merged_away: set[str] = set()
        for b in current:
            target = None
            for a in current:
                if a.global_id == b.global_id or a.global_id in merged_away:
                    continue
                if b.pixels <= a.pixels and (
                    b.pixels != a.pixels or a.global_id < b.global_id
                ):
                    target = a
                    break
            if target is None:
                survivors.append(b)
            else:
                merged_away.add(b.global_id)
                changed = True
                if log_entries is not None:
                    log_entries.append((b.global_id, f"merged-into:{target.global_id}"))
        current = survivors
    return current


def filter_min_area(
    instances: list[InstanceMask],
    min_area: int,
    log_entries: ProvenanceLog | None = None,
) -> list[InstanceMask]:
    """Drop instances with area < min_area (0 disables; debris removal is
    otherwise a manual curation decision)."""
    kept = []
    for inst in instances:
        if inst.area < min_area:
            if log_entries is not None:
                log_entries.append((inst.global_id, "min-area"))
        else:
            kept.append(inst)
    return kept


def run_postprocess(
    label_map: LabelMap,
    tile: TileRecord,
    config: PostprocessConfig = PostprocessConfig(),
    log_entries: ProvenanceLog | None = None,
) -> list[InstanceMask]:
    """Apply all automated fixes to one tile, in the documented stage order."""
    w, h = label_map.width, label_map.height
    instances = extract_instances(label_map, tile)
    instances = remove_background(instances, w, h, config.background_fraction, log_entries)
    instances = exclude_border(instances, w, h, config.border_margin, log_entries)
    instances = [fill_holes(inst, w, h) for inst in instances]
    instances = merge_contained(instances, log_entries)
    instances = filter_min_area(instances, config.min_area, log_entries)
    return instances


def apply_exclusions(instance_set: InstanceSet, exclusions: ExclusionList) -> InstanceSet:
    """Remove human-excluded instances from analysis.

    Unknown global_ids are ignored with a warning; applying the same list
    twice is a no-op beyond the warnings.
    """
    excluded = exclusions.excluded_ids()
    known = {inst.global_id for inst in instance_set.instances}
    for gid in excluded:
        if gid not in known:
            log.warning("exclusion for unknown instance %r ignored", gid)
    kept = []
    provenance = list(instance_set.provenance_log)
    for inst in instance_set.instances:
        if inst.global_id in excluded:
            provenance.append((inst.global_id, f"curated:{excluded[inst.global_id]}"))
        else:
            kept.append(inst)
    return InstanceSet(
        manifest=instance_set.manifest, instances=kept, provenance_log=provenance
    )
