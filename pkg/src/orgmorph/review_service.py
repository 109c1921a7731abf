"""Localhost HTTP service for the manual debris-curation step.

Serves the measured instances of a completed run, records keep/exclude
decisions (persisted atomically before each response), recomputes group
statistics on demand over the non-excluded instances, and exports the
curated CSV. Reads run concurrently; mutations are serialized and swap in
a fresh exclusion snapshot, so no response mixes pre- and post-exclusion
state.
"""

from __future__ import annotations

import errno
import json
import threading
import time
from dataclasses import dataclass, replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, quote, unquote, urlparse

import numpy as np

from .errors import (
    BadPageParams,
    MissingRunOutputs,
    PersistFailure,
    PipelineError,
    PortInUse,
    UnknownInstance,
)
from .ingestion import load_manifest, read_label_map
from .postprocess import (
    ExclusionEntry,
    ExclusionList,
    InstanceMask,
    PostprocessConfig,
    load_exclusions,
    run_postprocess,
    save_exclusions,
)
from .raster import PALE, WHITE, instance_color, png_bytes
from .reporting import (
    MeasurementRow,
    measurements_csv_text,
    read_measurements_csv,
    stats_json_doc,
)
from .stats import PROPERTY_NAMES, GroupSample, GroupSummary, compare_all_pairs, summarize

MAX_PAGE_SIZE = 500
CROP_CONTEXT = 16  # pixels of tile context around the instance bbox

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json; charset=utf-8",
    ".json": "application/json; charset=utf-8",
    ".png": "image/png",
    ".svg": "image/svg+xml",
    ".ico": "image/x-icon",
}

_PROPERTY_GETTERS = {
    "perimeter": lambda r: r.perimeter_px,
    "area": lambda r: float(r.area_px),
    "radius": lambda r: r.radius_px,
    "non_smoothness": lambda r: r.non_smoothness,
    "non_circularity": lambda r: r.non_circularity,
}


@dataclass
class RunOutputs:
    run_dir: Path
    manifest_path: Path
    postprocess_config: PostprocessConfig
    alpha: float
    welch: bool


def _load_run(run_dir: Path) -> RunOutputs:
    run_file = run_dir / "run.json"
    measurements = run_dir / "measurements.csv"
    if not run_file.exists() or not measurements.exists():
        raise MissingRunOutputs(
            f"{run_dir} does not contain a completed run "
            "(expected run.json and measurements.csv)"
        )
    meta = json.loads(run_file.read_text(encoding="utf-8"))
    cfg = meta.get("config", {})
    return RunOutputs(
        run_dir=run_dir,
        manifest_path=Path(meta["manifest_path"]),
        postprocess_config=PostprocessConfig(
            background_fraction=cfg.get("background_frac", 0.5),
            border_margin=cfg.get("border_margin", 1),
            min_area=cfg.get("min_area", 0),
        ),
        alpha=cfg.get("alpha", 0.05),
        welch=cfg.get("welch", False),
    )


class ReviewService:
    """Application logic behind the HTTP endpoints; usable directly in tests."""

    def __init__(
        self,
        run: RunOutputs,
        rows: list[MeasurementRow],
        exclusions: ExclusionList,
        ui_dir: Path | None = None,
    ):
        self.run = run
        self.ui_dir = Path(ui_dir) if ui_dir else Path(__file__).parent / "static"
        self._rows = {r.global_id: r for r in rows}
        self._order = sorted(self._rows)
        self._manifest = load_manifest(run.manifest_path)
        self._tiles = {t.tile_id: t for t in self._manifest.tiles}
        self._write_lock = threading.Lock()
        self._tile_cache: dict[str, dict[str, InstanceMask]] = {}
        self._tile_cache_lock = threading.Lock()
        # copy-on-write snapshot; readers grab one reference per request
        self._exclusions: dict[str, ExclusionEntry] = exclusions.by_id()

    @classmethod
    def from_run_dir(cls, run_dir: Path, ui_dir: Path | None = None) -> "ReviewService":
        run = _load_run(Path(run_dir))
        rows = read_measurements_csv(run.run_dir / "measurements.csv")
        exclusions_path = run.run_dir / "exclusions.json"
        exclusions = (
            load_exclusions(exclusions_path) if exclusions_path.exists() else ExclusionList()
        )
        return cls(run, rows, exclusions, ui_dir=ui_dir)

    # --- snapshot helpers ---

    def snapshot(self) -> dict[str, ExclusionEntry]:
        return self._exclusions

    def _row_view(self, row: MeasurementRow, snap: dict[str, ExclusionEntry]) -> MeasurementRow:
        entry = snap.get(row.global_id)
        return replace(row, excluded=bool(entry and entry.excluded))

    def current_rows(self) -> list[MeasurementRow]:
        snap = self.snapshot()
        return [self._row_view(self._rows[gid], snap) for gid in self._order]

    # --- endpoint logic ---

    def list_instances(self, group: str | None, page: int, page_size: int) -> dict:
        if page < 0 or page_size < 1 or page_size > MAX_PAGE_SIZE:
            raise BadPageParams(
                f"page must be >= 0 and 1 <= page_size <= {MAX_PAGE_SIZE}, "
                f"got page={page}, page_size={page_size}"
            )
        snap = self.snapshot()
        gids = [
            gid
            for gid in self._order
            if group is None or self._rows[gid].group_label == group
        ]
        start = page * page_size
        items = []
        for gid in gids[start : start + page_size]:
            row = self._rows[gid]
            entry = snap.get(gid)
            items.append(
                {
                    "global_id": gid,
                    "tile_id": row.tile_id,
                    "group_label": row.group_label,
                    "area_px": row.area_px,
                    "perimeter_px": row.perimeter_px,
                    "radius_px": row.radius_px,
                    "non_smoothness": row.non_smoothness,
                    "non_circularity": row.non_circularity,
                    "excluded": bool(entry and entry.excluded),
                    "reason": entry.reason if entry else "",
                    "thumbnail_url": f"/api/instances/{quote(gid, safe='')}/crop",
                }
            )
        return {"page": page, "page_size": page_size, "total": len(gids), "items": items}

    def _tile_instances(self, tile_id: str) -> dict[str, InstanceMask]:
        with self._tile_cache_lock:
            cached = self._tile_cache.get(tile_id)
            if cached is not None:
                return cached
            tile = self._tiles[tile_id]
            label_map = read_label_map(
                self.run.manifest_path.parent / tile.label_map_path,
                self._manifest.tile_width,
                self._manifest.tile_height,
            )
            instances = run_postprocess(label_map, tile, self.run.postprocess_config)
            result = {inst.global_id: inst for inst in instances}
            self._tile_cache[tile_id] = result
            return result

    def get_crop(self, global_id: str) -> bytes:
        row = self._rows.get(global_id)
        if row is None:
            raise UnknownInstance(f"unknown instance {global_id!r}")
        instances = self._tile_instances(row.tile_id)
        inst = instances.get(global_id)
        if inst is None:
            raise UnknownInstance(f"instance {global_id!r} not reproducible from run config")
        min_x, min_y, max_x, max_y = inst.bbox
        x0 = max(0, min_x - CROP_CONTEXT)
        y0 = max(0, min_y - CROP_CONTEXT)
        x1 = min(self._manifest.tile_width - 1, max_x + CROP_CONTEXT)
        y1 = min(self._manifest.tile_height - 1, max_y + CROP_CONTEXT)
        img = np.full((y1 - y0 + 1, x1 - x0 + 1, 3), WHITE[0], dtype=np.uint8)
        for other in instances.values():
            if other.global_id == global_id:
                continue
            pts = [(x, y) for x, y in other.pixels if x0 <= x <= x1 and y0 <= y <= y1]
            if pts:
                arr = np.asarray(pts, dtype=np.int64)
                img[arr[:, 1] - y0, arr[:, 0] - x0] = PALE
        arr = np.asarray(sorted(inst.pixels), dtype=np.int64)
        img[arr[:, 1] - y0, arr[:, 0] - x0] = instance_color(inst.local_label)
        return png_bytes(img)

    def set_exclusion(self, global_id: str, excluded: bool, reason: str) -> dict:
        if global_id not in self._rows:
            raise UnknownInstance(f"unknown instance {global_id!r}")
        with self._write_lock:
            current = self._exclusions.get(global_id)
            if current and current.excluded == excluded and current.reason == reason:
                entry = current  # idempotent re-POST keeps the original timestamp
            else:
                entry = ExclusionEntry(
                    global_id=global_id,
                    excluded=excluded,
                    reason=reason,
                    timestamp=int(time.time()),
                )
                updated = dict(self._exclusions)
                updated[global_id] = entry
                try:
                    save_exclusions(
                        ExclusionList(entries=list(updated.values())),
                        self.run.run_dir / "exclusions.json",
                    )
                except PipelineError as e:
                    raise PersistFailure(str(e)) from e
                self._exclusions = updated  # publish only after the disk write
        return {
            "global_id": entry.global_id,
            "excluded": entry.excluded,
            "reason": entry.reason,
            "timestamp": entry.timestamp,
        }

    def get_stats(self) -> dict:
        snap = self.snapshot()
        rows = [self._row_view(self._rows[gid], snap) for gid in self._order]
        active = [r for r in rows if not r.excluded]
        groups = sorted({r.group_label for r in rows})
        samples: list[GroupSample] = []
        summaries: list[GroupSummary] = []
        for group in groups:
            group_rows = [r for r in active if r.group_label == group]
            for prop in PROPERTY_NAMES:
                values = [
                    v
                    for v in (_PROPERTY_GETTERS[prop](r) for r in group_rows)
                    if v is not None
                ]
                if values:
                    sample = GroupSample(group, prop, tuple(values))
                    samples.append(sample)
                    summaries.append(summarize(sample))
                else:
                    summaries.append(
                        GroupSummary(group, prop, 0, None, None, None, None, None)
                    )
        eligible_groups = {s.group_label for s in samples if len(s.values) >= 2}
        ttests = (
            compare_all_pairs(
                samples,
                alpha=self.run.alpha,
                welch=self.run.welch,
                skip_insufficient=True,
            )
            if len(eligible_groups) >= 2
            else []
        )
        return stats_json_doc(summaries, ttests, self.run.alpha)

    def export(self) -> dict:
        with self._write_lock:
            snap = self._exclusions
            csv_path = self.run.run_dir / "measurements.curated.csv"
            exclusions_path = self.run.run_dir / "exclusions.json"
            rows = [self._row_view(self._rows[gid], snap) for gid in self._order]
            try:
                csv_path.write_text(measurements_csv_text(rows), encoding="utf-8", newline="")
                save_exclusions(ExclusionList(entries=list(snap.values())), exclusions_path)
            except (OSError, PipelineError) as e:
                raise PersistFailure(f"export failed: {e}") from e
        return {"csv": str(csv_path), "exclusions": str(exclusions_path)}

    def flush(self) -> None:
        with self._write_lock:
            save_exclusions(
                ExclusionList(entries=list(self._exclusions.values())),
                self.run.run_dir / "exclusions.json",
            )

    # --- static UI ---

    def static_file(self, path: str) -> tuple[bytes, str] | None:
        name = path.lstrip("/") or "index.html"
        root = self.ui_dir.resolve()
        target = (root / name).resolve()
        if not str(target).startswith(str(root)) or not target.is_file():
            return None
        ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        return target.read_bytes(), ctype


class _Handler(BaseHTTPRequestHandler):
    service: ReviewService  # injected by create_server
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # keep test output quiet
        pass

    def _send(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, status: int, doc) -> None:
        self._send(status, json.dumps(doc).encode("utf-8"), "application/json; charset=utf-8")

    def _send_error_json(self, exc: Exception) -> None:
        status = 500
        if isinstance(exc, UnknownInstance):
            status = 404
        elif isinstance(exc, BadPageParams):
            status = 400
        try:
            self._send_json(status, {"error": str(exc)})
        except (BrokenPipeError, ConnectionResetError):
            pass

    def do_GET(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        try:
            if url.path == "/api/stats":
                self._send_json(200, self.service.get_stats())
            elif url.path == "/api/instances":
                params = parse_qs(url.query)

                def ival(name, default):
                    raw = params.get(name, [None])[0]
                    if raw is None:
                        return default
                    try:
                        return int(raw)
                    except ValueError:
                        raise BadPageParams(f"{name} must be an integer, got {raw!r}")

                page = ival("page", 0)
                page_size = ival("page_size", 50)
                group = params.get("group", [None])[0]
                self._send_json(200, self.service.list_instances(group, page, page_size))
            elif len(parts) == 4 and parts[:2] == ["api", "instances"] and parts[3] == "crop":
                body = self.service.get_crop(unquote(parts[2]))
                self._send(200, body, "image/png")
            elif not url.path.startswith("/api/"):
                hit = self.service.static_file(url.path)
                if hit is None:
                    self._send_json(404, {"error": f"no such file {url.path!r}"})
                else:
                    self._send(200, hit[0], hit[1])
            else:
                self._send_json(404, {"error": f"no such endpoint {url.path!r}"})
        except PipelineError as e:
            self._send_error_json(e)
        except (BrokenPipeError, ConnectionResetError):
            pass
        except Exception as e:  # bug guard: keep the connection protocol-clean
            self._send_error_json(e)

    def do_POST(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        try:
            if url.path == "/api/export":
                self._send_json(200, self.service.export())
            elif len(parts) == 4 and parts[:2] == ["api", "instances"] and parts[3] == "exclusion":
                length = int(self.headers.get("Content-Length", 0))
                try:
                    payload = json.loads(self.rfile.read(length) or b"{}")
                    excluded = bool(payload["excluded"])
                    reason = str(payload.get("reason", ""))
                except (json.JSONDecodeError, KeyError) as e:
                    self._send_json(400, {"error": f"bad exclusion payload: {e}"})
                    return
                entry = self.service.set_exclusion(unquote(parts[2]), excluded, reason)
                self._send_json(200, entry)
            else:
                self._send_json(404, {"error": f"no such endpoint {url.path!r}"})
        except PipelineError as e:
            self._send_error_json(e)
        except (BrokenPipeError, ConnectionResetError):
            pass
        except Exception as e:  # bug guard: keep the connection protocol-clean
            self._send_error_json(e)


def create_server(
    service: ReviewService, port: int, host: str = "127.0.0.1"
) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {"service": service})
    try:
        return ThreadingHTTPServer((host, port), handler)
    except OSError as e:
        if e.errno == errno.EADDRINUSE:
            raise PortInUse(f"port {port} is already in use") from e
        raise
