"""Curation service tests: API logic, HTTP layer, persistence, crash safety."""

import json
import signal
import socket
import struct
import subprocess
import sys
import threading
import time
import urllib.error
import urllib.request
from pathlib import Path

import pytest

from orgmorph.cli import main
from orgmorph.errors import BadPageParams, PortInUse, UnknownInstance
from orgmorph.postprocess import ExclusionList
from orgmorph.reporting import MeasurementRow, read_measurements_csv
from orgmorph.review_service import ReviewService, _load_run, create_server
from orgmorph.synth import make_synthetic_slide


@pytest.fixture
def run_dir(tmp_path):
    manifest = make_synthetic_slide(
        tmp_path / "slide", "s1", "groupA", n_tiles=2, n_instances_per_tile=4, seed=3
    )
    out = tmp_path / "out"
    assert main(["run", "--manifest", str(manifest), "--out", str(out)]) == 0
    return out


@pytest.fixture
def service(run_dir):
    return ReviewService.from_run_dir(run_dir)


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def get_json(url):
    with urllib.request.urlopen(url) as resp:
        return json.loads(resp.read())


def post_json(url, payload=None):
    data = json.dumps(payload or {}).encode()
    req = urllib.request.Request(url, data=data, headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req) as resp:
        return json.loads(resp.read())


def png_size(data: bytes):
    assert data[:8] == b"\x89PNG\r\n\x1a\n"
    w, h = struct.unpack(">II", data[16:24])
    return w, h


class TestListInstances:
    def test_first_page_sorted(self, service):
        page = service.list_instances(None, 0, 50)
        gids = [item["global_id"] for item in page["items"]]
        assert gids == sorted(gids)
        assert page["total"] == len(gids)
        assert all(item["thumbnail_url"].endswith("/crop") for item in page["items"])

    def test_nonexistent_group_empty(self, service):
        page = service.list_instances("no-such-group", 0, 50)
        assert page["items"] == [] and page["total"] == 0

    def test_page_beyond_end_empty(self, service):
        page = service.list_instances(None, 99, 50)
        assert page["items"] == []

    def test_paging_splits(self, service):
        total = service.list_instances(None, 0, 500)["total"]
        size = max(1, total // 2)
        first = service.list_instances(None, 0, size)["items"]
        rest = service.list_instances(None, 1, size)["items"]
        assert len(first) == size
        assert len(first) + len(rest) >= total - size

    def test_bad_page_params(self, service):
        with pytest.raises(BadPageParams):
            service.list_instances(None, -1, 50)
        with pytest.raises(BadPageParams):
            service.list_instances(None, 0, 501)
        with pytest.raises(BadPageParams):
            service.list_instances(None, 0, 0)


class TestCrop:
    def test_dimensions_bbox_plus_context(self, service, run_dir):
        gid = service.list_instances(None, 0, 1)["items"][0]["global_id"]
        inst = service._tile_instances(service._rows[gid].tile_id)[gid]
        min_x, min_y, max_x, max_y = inst.bbox
        data = service.get_crop(gid)
        w, h = png_size(data)
        run = _load_run(run_dir)
        assert w == min(max_x + 16, service._manifest.tile_width - 1) - max(0, min_x - 16) + 1
        assert h == min(max_y + 16, service._manifest.tile_height - 1) - max(0, min_y - 16) + 1

    def test_deterministic_bytes(self, service):
        gid = service.list_instances(None, 0, 1)["items"][0]["global_id"]
        assert service.get_crop(gid) == service.get_crop(gid)

    def test_unknown_instance(self, service):
        with pytest.raises(UnknownInstance):
            service.get_crop("zz:99")


class TestExclusion:
    def test_set_and_persist(self, service, run_dir):
        gid = service.list_instances(None, 0, 1)["items"][0]["global_id"]
        entry = service.set_exclusion(gid, True, "debris")
        assert entry["excluded"] is True and entry["reason"] == "debris"
        on_disk = json.loads((run_dir / "exclusions.json").read_text())
        assert {e["global_id"]: e["excluded"] for e in on_disk} == {gid: True}
        item = service.list_instances(None, 0, 500)["items"]
        flags = {i["global_id"]: i["excluded"] for i in item}
        assert flags[gid] is True

    def test_reinclude_supersedes(self, service):
        gid = service.list_instances(None, 0, 1)["items"][0]["global_id"]
        service.set_exclusion(gid, True, "debris")
        entry = service.set_exclusion(gid, False, "looked again")
        assert entry["excluded"] is False
        flags = {i["global_id"]: i["excluded"] for i in service.list_instances(None, 0, 500)["items"]}
        assert flags[gid] is False

    def test_idempotent_same_payload(self, service):
        gid = service.list_instances(None, 0, 1)["items"][0]["global_id"]
        first = service.set_exclusion(gid, True, "debris")
        again = service.set_exclusion(gid, True, "debris")
        assert first == again  # timestamp preserved

    def test_unknown_id_state_unchanged(self, service, run_dir):
        with pytest.raises(UnknownInstance):
            service.set_exclusion("zz:99", True, "x")
        assert not (run_dir / "exclusions.json").exists()


class TestStatsAndExport:
    def test_no_exclusions_matches_offline_stats(self, service, run_dir, tmp_path):
        doc = service.get_stats()
        out = tmp_path / "offline.json"
        assert main(["stats", str(run_dir / "measurements.csv"), "--out", str(out)]) == 0
        offline = json.loads(out.read_text())
        assert doc["summaries"] == offline["summaries"]
        assert doc["ttests"] == offline["ttests"] == []

    def test_export_zero_exclusions_equals_original(self, service, run_dir):
        paths = service.export()
        assert Path(paths["csv"]).read_bytes() == (run_dir / "measurements.csv").read_bytes()

    def test_export_flags_three_rows(self, service, run_dir):
        gids = [i["global_id"] for i in service.list_instances(None, 0, 3)["items"]]
        for gid in gids:
            service.set_exclusion(gid, True, "debris")
        paths = service.export()
        rows = read_measurements_csv(paths["csv"])
        assert sum(r.excluded for r in rows) == 3

    def test_export_restart_byte_identical(self, service, run_dir):
        gid = service.list_instances(None, 0, 1)["items"][0]["global_id"]
        service.set_exclusion(gid, True, "debris")
        first = service.export()
        csv_1 = Path(first["csv"]).read_bytes()
        exc_1 = Path(first["exclusions"]).read_bytes()
        reloaded = ReviewService.from_run_dir(run_dir)
        second = reloaded.export()
        assert Path(second["csv"]).read_bytes() == csv_1
        assert Path(second["exclusions"]).read_bytes() == exc_1

    def test_exclusion_stats_match_offline_recompute(self, service, run_dir, tmp_path):
        gid = service.list_instances(None, 0, 1)["items"][0]["global_id"]
        service.set_exclusion(gid, True, "debris")
        doc = service.get_stats()
        paths = service.export()
        out = tmp_path / "offline.json"
        assert main(["stats", paths["csv"], "--out", str(out)]) == 0
        offline = json.loads(out.read_text())
        assert doc["summaries"] == offline["summaries"]

    def test_outlier_exclusion_reduces_sd(self, run_dir):
        service = ReviewService.from_run_dir(run_dir)
        rows = service.current_rows()
        areas = {r.global_id: r.area_px for r in rows}
        outlier = max(areas, key=areas.get)
        sd_before = next(
            s["sd"] for s in service.get_stats()["summaries"] if s["property"] == "area"
        )
        service.set_exclusion(outlier, True, "planted outlier")
        sd_after = next(
            s["sd"] for s in service.get_stats()["summaries"] if s["property"] == "area"
        )
        assert sd_after < sd_before

    def test_fully_excluded_group_reports_n0(self, run_dir, tmp_path):
        run = _load_run(run_dir)
        rows = read_measurements_csv(run_dir / "measurements.csv")
        other = [
            MeasurementRow(
                slide_id="s2", group_label="groupB", global_id=f"x:{i}", tile_id="x",
                centroid_x_global=1.0, centroid_y_global=1.0, area_px=10 + i,
                perimeter_px=10.0, radius_px=2.0, non_smoothness=1.0,
                non_circularity=0.1, area_um2=None, radius_um=None, excluded=False,
            )
            for i in range(3)
        ]
        service = ReviewService(run, rows + other, ExclusionList())
        with_pairs = service.get_stats()
        assert len(with_pairs["ttests"]) == 5  # groupA vs groupB, 5 properties
        for row in other:
            service.set_exclusion(row.global_id, True, "bad slide")
        doc = service.get_stats()
        b_summaries = [s for s in doc["summaries"] if s["group"] == "groupB"]
        assert len(b_summaries) == 5
        assert all(s["n"] == 0 and s["mean"] is None for s in b_summaries)
        assert doc["ttests"] == []  # tests skipped for the empty group


class TestHttpLayer:
    @pytest.fixture
    def server(self, service):
        port = free_port()
        srv = create_server(service, port=port)
        thread = threading.Thread(target=srv.serve_forever, daemon=True)
        thread.start()
        yield f"http://127.0.0.1:{port}"
        srv.shutdown()
        srv.server_close()

    def test_instances_endpoint(self, server):
        doc = get_json(f"{server}/api/instances?page=0&page_size=10")
        assert doc["page"] == 0 and len(doc["items"]) <= 10

    def test_group_filter_param(self, server):
        doc = get_json(f"{server}/api/instances?group=groupA")
        assert doc["total"] > 0
        empty = get_json(f"{server}/api/instances?group=zzz")
        assert empty["total"] == 0

    def test_bad_page_params_400(self, server):
        with pytest.raises(urllib.error.HTTPError) as exc:
            get_json(f"{server}/api/instances?page_size=9999")
        assert exc.value.code == 400
        assert "error" in json.loads(exc.value.read())

    def test_crop_endpoint_png(self, server):
        item = get_json(f"{server}/api/instances?page_size=1")["items"][0]
        with urllib.request.urlopen(server + item["thumbnail_url"]) as resp:
            data = resp.read()
            assert resp.headers["Content-Type"] == "image/png"
        png_size(data)

    def test_unknown_crop_404(self, server):
        from urllib.parse import quote

        with pytest.raises(urllib.error.HTTPError) as exc:
            get_json(f"{server}/api/instances/{quote('zz:9', safe='')}/crop")
        assert exc.value.code == 404

    def test_exclusion_roundtrip(self, server):
        from urllib.parse import quote

        item = get_json(f"{server}/api/instances?page_size=1")["items"][0]
        gid = item["global_id"]
        entry = post_json(
            f"{server}/api/instances/{quote(gid, safe='')}/exclusion",
            {"excluded": True, "reason": "debris"},
        )
        assert entry["excluded"] is True
        doc = get_json(f"{server}/api/instances?page_size=500")
        flags = {i["global_id"]: i["excluded"] for i in doc["items"]}
        assert flags[gid] is True

    def test_exclusion_bad_payload_400(self, server):
        from urllib.parse import quote

        item = get_json(f"{server}/api/instances?page_size=1")["items"][0]
        req = urllib.request.Request(
            f"{server}/api/instances/{quote(item['global_id'], safe='')}/exclusion",
            data=b'{"no_excluded_key": 1}',
        )
        with pytest.raises(urllib.error.HTTPError) as exc:
            urllib.request.urlopen(req)
        assert exc.value.code == 400

    def test_stats_endpoint(self, server):
        doc = get_json(f"{server}/api/stats")
        assert set(doc) == {"alpha", "summaries", "ttests"}

    def test_export_endpoint(self, server):
        doc = post_json(f"{server}/api/export")
        assert Path(doc["csv"]).exists() and Path(doc["exclusions"]).exists()

    def test_root_serves_ui(self, server):
        with urllib.request.urlopen(f"{server}/") as resp:
            body = resp.read()
            assert resp.headers["Content-Type"].startswith("text/html")
        assert b"<html" in body or b"<!doctype" in body.lower()

    def test_unknown_api_404(self, server):
        with pytest.raises(urllib.error.HTTPError) as exc:
            get_json(f"{server}/api/nope")
        assert exc.value.code == 404

    def test_port_in_use(self, server, service):
        port = int(server.rsplit(":", 1)[1])
        with pytest.raises(PortInUse):
            create_server(service, port=port)


class TestCrashSafety:
    def wait_ready(self, base, timeout=10.0):
        deadline = time.time() + timeout
        while time.time() < deadline:
            try:
                get_json(f"{base}/api/stats")
                return
            except Exception:
                time.sleep(0.05)
        raise TimeoutError("service did not come up")

    def test_sigkill_preserves_last_snapshot(self, run_dir):
        from urllib.parse import quote

        port = free_port()
        base = f"http://127.0.0.1:{port}"
        proc = subprocess.Popen(
            [sys.executable, "-m", "orgmorph.cli", "serve", "--out", str(run_dir),
             "--port", str(port)],
            stdout=subprocess.DEVNULL,
            stderr=subprocess.DEVNULL,
        )
        try:
            self.wait_ready(base)
            gid = get_json(f"{base}/api/instances?page_size=1")["items"][0]["global_id"]
            entry = post_json(
                f"{base}/api/instances/{quote(gid, safe='')}/exclusion",
                {"excluded": True, "reason": "debris"},
            )
            assert entry["excluded"] is True
        finally:
            proc.send_signal(signal.SIGKILL)
            proc.wait(timeout=10)
        # state on disk equals the confirmed snapshot
        on_disk = json.loads((run_dir / "exclusions.json").read_text())
        assert {e["global_id"]: e["excluded"] for e in on_disk} == {gid: True}
        # restart sees the same state
        service = ReviewService.from_run_dir(run_dir)
        flags = {i["global_id"]: i["excluded"] for i in service.list_instances(None, 0, 500)["items"]}
        assert flags[gid] is True

    def test_missing_run_outputs(self, tmp_path):
        from orgmorph.errors import MissingRunOutputs

        with pytest.raises(MissingRunOutputs):
            ReviewService.from_run_dir(tmp_path)
