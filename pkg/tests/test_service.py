import json

import pytest
import requests

from parascope.config import AppConfig
from parascope.server import ReferenceServer
from parascope.service import DeviceServer, DirectoryReplayCamera, SingleFileCamera
from parascope.errors import BadConfig, EndOfFrames
from parascope.synthetic import SyntheticSlideSpec, write_synthetic_dataset


def service_config(tmp_path, frames_dir, endpoint="", assets=""):
    return AppConfig.load(None, overrides={
        "store.path": str(tmp_path / "store"),
        "detector.backend": "oracle",
        "classifier.backend": "oracle",
        "camera.kind": "directory-replay",
        "camera.path": str(frames_dir),
        "fixtures.path": str(frames_dir),
        "server.port": 0,
        "sync.endpoint": endpoint,
        "server.assets": assets,
    })


@pytest.fixture
def frames(tmp_path):
    frames_dir = tmp_path / "frames"
    specs = [
        SyntheticSlideSpec(seed=100, n_rbc=6, n_wbc=1, n_platelet=1,
                           parasitized_fraction=0.5),
        SyntheticSlideSpec(seed=101, n_rbc=4, n_wbc=0, n_platelet=0,
                           parasitized_fraction=0.25),
    ]
    write_synthetic_dataset(frames_dir, specs)
    return frames_dir


@pytest.fixture
def device(tmp_path, frames):
    server = DeviceServer(service_config(tmp_path, frames)).start()
    yield server
    server.stop()


class TestCameras:
    def test_directory_replay_order_and_exhaustion(self, frames):
        cam = DirectoryReplayCamera(frames)
        k1, _ = cam.advance()
        k2, _ = cam.advance()
        assert [k1, k2] == ["slide_0000", "slide_0001"]
        with pytest.raises(EndOfFrames):
            cam.advance()

    def test_peek_does_not_advance(self, frames):
        cam = DirectoryReplayCamera(frames)
        assert cam.peek()[0] == cam.peek()[0] == "slide_0000"

    def test_single_file(self, frames):
        cam = SingleFileCamera(frames / "slide_0001.ppm")
        assert cam.advance()[0] == "slide_0001"
        with pytest.raises(EndOfFrames):
            cam.advance()

    def test_bad_path(self, tmp_path):
        with pytest.raises(BadConfig):
            DirectoryReplayCamera(tmp_path / "missing")


class TestRestEndpoints:
    def test_health(self, device):
        doc = requests.get(f"{device.endpoint}/v1/health", timeout=5).json()
        assert doc["status"] == "ok"
        assert "version" in doc

    def test_preview_is_png(self, device):
        r = requests.get(f"{device.endpoint}/v1/preview", timeout=5)
        assert r.status_code == 200
        assert r.headers["Content-Type"] == "image/png"
        assert r.content[:8] == b"\x89PNG\r\n\x1a\n"

    def test_capture_returns_result_and_overlay(self, device):
        r = requests.post(f"{device.endpoint}/v1/capture", timeout=15)
        assert r.status_code == 200
        doc = r.json()
        assert doc["frame"] == "slide_0000"
        assert doc["result"]["infected_count"] == 3
        assert doc["result"]["uninfected_count"] == 3
        assert doc["result"]["parasitemia_pct"] == 50.0
        overlay = requests.get(f"{device.endpoint}/v1/frames/{doc['overlay']}",
                               timeout=5)
        assert overlay.status_code == 200
        assert overlay.content[:8] == b"\x89PNG\r\n\x1a\n"

    def test_capture_exhaustion_409(self, device):
        requests.post(f"{device.endpoint}/v1/capture", timeout=15)
        requests.post(f"{device.endpoint}/v1/capture", timeout=15)
        r = requests.post(f"{device.endpoint}/v1/capture", timeout=15)
        assert r.status_code == 409
        assert r.json()["error"] == "EndOfFrames"

    def test_save_then_records_list(self, device):
        requests.post(f"{device.endpoint}/v1/capture", timeout=15)
        r = requests.post(f"{device.endpoint}/v1/records", timeout=15)
        assert r.status_code == 201
        record = r.json()
        listed = requests.get(f"{device.endpoint}/v1/records", timeout=5).json()
        assert [rec["record_id"] for rec in listed["records"]] == [record["record_id"]]
        one = requests.get(
            f"{device.endpoint}/v1/records/{record['record_id']}", timeout=5
        )
        assert one.status_code == 200

    def test_records_state_filter(self, device):
        requests.post(f"{device.endpoint}/v1/capture", timeout=15)
        requests.post(f"{device.endpoint}/v1/records", timeout=15)
        pending = requests.get(f"{device.endpoint}/v1/records?state=Pending",
                               timeout=5).json()
        synced = requests.get(f"{device.endpoint}/v1/records?state=Synced",
                              timeout=5).json()
        assert len(pending["records"]) == 1
        assert synced["records"] == []

    def test_save_without_capture_409(self, device):
        r = requests.post(f"{device.endpoint}/v1/records", timeout=5)
        assert r.status_code == 409

    def test_double_save_409(self, device):
        requests.post(f"{device.endpoint}/v1/capture", timeout=15)
        assert requests.post(f"{device.endpoint}/v1/records", timeout=15).status_code == 201
        assert requests.post(f"{device.endpoint}/v1/records", timeout=5).status_code == 409

    def test_session_document(self, device):
        doc = requests.get(f"{device.endpoint}/v1/session", timeout=5).json()
        assert doc == {
            "has_result": False, "unsaved": False, "preview_available": True,
            "sync": {"pending": 0, "synced": 0, "failed": 0},
        }
        requests.post(f"{device.endpoint}/v1/capture", timeout=15)
        doc = requests.get(f"{device.endpoint}/v1/session", timeout=5).json()
        assert doc["has_result"] and doc["unsaved"]
        requests.post(f"{device.endpoint}/v1/records", timeout=15)
        doc = requests.get(f"{device.endpoint}/v1/session", timeout=5).json()
        assert not doc["unsaved"]
        assert doc["sync"]["pending"] == 1

    def test_malformed_json_body_400(self, device):
        r = requests.post(f"{device.endpoint}/v1/capture", data=b"{oops",
                          headers={"Content-Type": "application/json"}, timeout=5)
        assert r.status_code == 400

    def test_fuzz_bodies_never_crash(self, device):
        for payload in (b"\x00\xff\xfe", b"[1,2,", b'"hanging', b"}{", b"null" * 100):
            r = requests.post(f"{device.endpoint}/v1/sync", data=payload, timeout=5)
            assert r.status_code in (400, 502)
        assert requests.get(f"{device.endpoint}/v1/health", timeout=5).status_code == 200

    def test_unknown_routes_404(self, device):
        assert requests.get(f"{device.endpoint}/v1/nope", timeout=5).status_code == 404
        assert requests.post(f"{device.endpoint}/v1/nope", timeout=5).status_code == 404

    def test_unknown_frame_404(self, device):
        r = requests.get(f"{device.endpoint}/v1/frames/{'0' * 64}", timeout=5)
        assert r.status_code == 404


class TestSyncThroughService:
    def test_capture_save_sync(self, tmp_path, frames):
        cloud = ReferenceServer(tmp_path / "cloud").start()
        device = DeviceServer(
            service_config(tmp_path, frames, endpoint=cloud.endpoint)
        ).start()
        try:
            requests.post(f"{device.endpoint}/v1/capture", timeout=15)
            requests.post(f"{device.endpoint}/v1/records", timeout=15)
            report = requests.post(f"{device.endpoint}/v1/sync", timeout=15).json()
            assert report == {"uploaded": 1, "failed": 0, "skipped": 0}
            doc = requests.get(f"{device.endpoint}/v1/session", timeout=5).json()
            assert doc["sync"] == {"pending": 0, "synced": 1, "failed": 0}
        finally:
            device.stop()
            cloud.stop()

    def test_sync_unconfigured_400(self, device):
        r = requests.post(f"{device.endpoint}/v1/sync", timeout=5)
        assert r.status_code == 400

    def test_sync_unreachable_502(self, tmp_path, frames):
        device = DeviceServer(
            service_config(tmp_path, frames, endpoint="http://127.0.0.1:9")
        ).start()
        try:
            r = requests.post(f"{device.endpoint}/v1/sync", timeout=15)
            assert r.status_code == 502
        finally:
            device.stop()


class TestConcurrency:
    def test_concurrent_captures_serialize_and_consume_distinct_frames(
            self, device):
        from concurrent.futures import ThreadPoolExecutor

        def hit(_):
            return requests.post(f"{device.endpoint}/v1/capture", timeout=30)

        with ThreadPoolExecutor(max_workers=2) as pool:
            responses = list(pool.map(hit, range(2)))
        assert sorted(r.status_code for r in responses) == [200, 200]
        frames = sorted(r.json()["frame"] for r in responses)
        assert frames == ["slide_0000", "slide_0001"]  # no frame double-served

    def test_reads_during_capture_do_not_crash(self, device):
        from concurrent.futures import ThreadPoolExecutor

        def capture(_):
            return requests.post(f"{device.endpoint}/v1/capture", timeout=30)

        def poll(_):
            return requests.get(f"{device.endpoint}/v1/session", timeout=10)

        with ThreadPoolExecutor(max_workers=4) as pool:
            cap = pool.submit(capture, 0)
            polls = [pool.submit(poll, i) for i in range(6)]
            assert cap.result().status_code == 200
            assert all(p.result().status_code == 200 for p in polls)


class TestStaticAssets:
    def test_index_served_at_root(self, tmp_path, frames):
        assets = tmp_path / "assets"
        assets.mkdir()
        (assets / "index.html").write_text("<html><body>console</body></html>")
        (assets / "console.js").write_text("// app")
        device = DeviceServer(
            service_config(tmp_path, frames, assets=str(assets))
        ).start()
        try:
            r = requests.get(f"{device.endpoint}/", timeout=5)
            assert r.status_code == 200 and b"console" in r.content
            r = requests.get(f"{device.endpoint}/console.js", timeout=5)
            assert r.status_code == 200
            r = requests.get(f"{device.endpoint}/../etc/passwd", timeout=5)
            assert r.status_code == 404
        finally:
            device.stop()


class TestHttpCliEquivalence:
    def test_capture_save_sync_store_matches_cli(self, tmp_path, frames, monkeypatch):
        """The same capture->save->sync sequence through HTTP and through
        the CLI must produce byte-identical stores (deterministic hooks
        pin clock and record ids)."""
        from click.testing import CliRunner
        from parascope.cli import main as cli_main

        monkeypatch.setenv("PARASCOPE_FIXED_TIME", "2026-08-08T10:00:00Z")
        monkeypatch.setenv("PARASCOPE_ID_SEED", "7")

        cloud_a = ReferenceServer(tmp_path / "cloud-a").start()
        device = DeviceServer(
            service_config(tmp_path / "http", frames, endpoint=cloud_a.endpoint)
        ).start()
        try:
            requests.post(f"{device.endpoint}/v1/capture", timeout=15)
            requests.post(f"{device.endpoint}/v1/records", timeout=15)
            requests.post(f"{device.endpoint}/v1/sync", timeout=15)
        finally:
            device.stop()
            cloud_a.stop()

        cloud_b = ReferenceServer(tmp_path / "cloud-b").start()
        try:
            runner = CliRunner()
            res = runner.invoke(cli_main, [
                "screen", "--input", str(frames / "slide_0000.ppm"),
                "--detector", "oracle", "--classifier", "oracle",
                "--fixtures", str(frames),
                "--out", str(tmp_path / "cli-out"),
                "--save", "--store", str(tmp_path / "cli" / "store"),
            ])
            assert res.exit_code == 0, res.output
            res = runner.invoke(cli_main, [
                "sync", "--store", str(tmp_path / "cli" / "store"),
                "--endpoint", cloud_b.endpoint,
            ])
            assert res.exit_code == 0, res.output
        finally:
            cloud_b.stop()

        http_store = tmp_path / "http" / "store"
        cli_store = tmp_path / "cli" / "store"
        http_files = sorted(p.relative_to(http_store)
                            for p in http_store.rglob("*") if p.is_file())
        cli_files = sorted(p.relative_to(cli_store)
                           for p in cli_store.rglob("*") if p.is_file())
        assert http_files == cli_files
        for rel in http_files:
            assert (http_store / rel).read_bytes() == (cli_store / rel).read_bytes(), rel
