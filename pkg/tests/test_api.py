import json
import threading

import pytest
from fastapi.testclient import TestClient

from cattlesense import frames
from cattlesense.aggregator.api import create_app
from cattlesense.aggregator.engine import Aggregator
from cattlesense.aggregator.eventlog import EventLog
from cattlesense.aggregator.rules import RuleConfig
from cattlesense.aggregator.service import AggregatorService

T0 = 1_704_067_200.0


@pytest.fixture()
def service(tmp_path):
    log = EventLog(tmp_path / "events.jsonl")
    svc = AggregatorService(Aggregator(RuleConfig(persistence_count=1)), log)
    yield svc
    svc.close()


@pytest.fixture()
def client(service):
    clock = {"now": T0}
    app = create_app(service, clock=lambda: clock["now"])
    with TestClient(app) as c:
        c.clock = clock
        yield c


def register_world(client):
    r = client.put(
        "/api/v1/geofence",
        json={"vertices": [[47.0, 8.0], [47.0, 8.02], [47.015, 8.02], [47.015, 8.0]]},
    )
    assert r.status_code == 200, r.text
    assert client.post(
        "/api/v1/stations", json={"station_id": 1, "kind": "environment"}
    ).status_code == 201
    assert client.post(
        "/api/v1/stations",
        json={"station_id": 2, "kind": "rfid", "activity_code": "MILKING"},
    ).status_code == 201
    r = client.post(
        "/api/v1/cattle",
        json={
            "cattle_id": "cow-1",
            "rfid_tag": 100,
            "node_id": 1,
            "expected_activity": {"MILKING": 3},
        },
    )
    assert r.status_code == 201, r.text


def uplink_hex(t, lat=47.0075, lon=8.01, bpm=66, seq=0):
    frame = frames.NodeUplinkFrame.from_physical(1, seq, t, lat, lon, 10.0, bpm)
    return frames.encode_uplink(frame).hex()


def env_hex(t, humidity=55, seq=0):
    return frames.encode_station(
        frames.StationFrame.environment(1, seq, t, 22.0, humidity, 40.0)
    ).hex()


class TestRegistration:
    def test_register_and_list(self, client):
        register_world(client)
        body = client.get("/api/v1/cattle").json()
        assert len(body["cattle"]) == 1
        cow = body["cattle"][0]
        assert cow["cattle_id"] == "cow-1"
        assert cow["latest_fix"] is None
        assert cow["profile"]["expected_activity"] == {"MILKING": 3}

    def test_duplicate_tag_surfaced(self, client):
        register_world(client)
        r = client.post(
            "/api/v1/cattle",
            json={"cattle_id": "cow-2", "rfid_tag": 100, "node_id": 2},
        )
        assert r.status_code == 400
        assert "DuplicateTag" in r.json()["detail"]["errors"]

    def test_self_intersecting_fence_rejected(self, client):
        r = client.put(
            "/api/v1/geofence",
            json={"vertices": [[0, 0], [1, 1], [1, 0], [0, 1]]},
        )
        assert r.status_code == 400
        assert "self-intersecting" in r.json()["detail"]

    def test_unknown_activity_rejected(self, client):
        r = client.post(
            "/api/v1/cattle",
            json={
                "cattle_id": "x",
                "rfid_tag": 1,
                "node_id": 9,
                "expected_activity": {"NAPPING": 2},
            },
        )
        assert r.status_code == 400


class TestIngestAndState:
    def test_uplink_ingest_updates_cattle(self, client):
        register_world(client)
        r = client.post("/api/v1/ingest/uplink", json={"hex": uplink_hex(T0 + 60), "time": T0 + 60})
        assert r.json() == {"accepted": True, "cause": None}
        cow = client.get("/api/v1/cattle").json()["cattle"][0]
        assert cow["latest_bpm"] == 66
        assert cow["in_fence"] is True
        assert cow["latest_fix"]["timestamp"].endswith("Z")

    def test_bad_hex_rejected(self, client):
        r = client.post("/api/v1/ingest/uplink", json={"hex": "zz"})
        assert r.status_code == 400

    def test_environment_latest_and_ring(self, client):
        register_world(client)
        for i in range(3):
            client.post(
                "/api/v1/ingest/station",
                json={"hex": env_hex(T0 + 30 * (i + 1), seq=i), "time": T0 + 30 * (i + 1)},
            )
        body = client.get("/api/v1/environment/latest").json()
        station = body["stations"]["1"]
        assert station["latest"]["humidity"] == 55
        assert len(station["ring"]) == 3

    def test_stats_counts_rejections(self, client):
        register_world(client)
        bad = bytearray(bytes.fromhex(uplink_hex(T0 + 60)))
        bad[-1] ^= 1
        client.post("/api/v1/ingest/uplink", json={"hex": bad.hex(), "time": T0 + 60})
        stats = client.get("/api/v1/stats").json()
        assert stats["rejected"]["CrcMismatch"] == 1

    def test_rules_exposed(self, client):
        rules = client.get("/api/v1/rules").json()
        assert rules["humidity_band"] == [30.0, 80.0]
        assert rules["audio_band"] == [35.0, 45.0]


class TestAlertsApi:
    def trigger_breach(self, client):
        register_world(client)
        client.post(
            "/api/v1/ingest/uplink", json={"hex": uplink_hex(T0 + 60, lat=48.5), "time": T0 + 60}
        )

    def test_alert_listing_and_filter(self, client):
        self.trigger_breach(client)
        alerts = client.get("/api/v1/alerts", params={"state": "open"}).json()["alerts"]
        assert len(alerts) == 1
        assert alerts[0]["rule"] == "GeofenceBreach"
        assert alerts[0]["opened_at"].endswith("Z")

    def test_acknowledge_moves_state(self, client):
        self.trigger_breach(client)
        alert_id = client.get("/api/v1/alerts").json()["alerts"][0]["alert_id"]
        r = client.post(f"/api/v1/alerts/{alert_id}/ack", json={"actor": "vet"})
        assert r.status_code == 200
        assert r.json()["state"] == "Acknowledged"
        assert client.get("/api/v1/alerts", params={"state": "acked"}).json()["alerts"]

    def test_double_ack_is_409(self, client):
        self.trigger_breach(client)
        alert_id = client.get("/api/v1/alerts").json()["alerts"][0]["alert_id"]
        client.post(f"/api/v1/alerts/{alert_id}/ack", json={})
        assert client.post(f"/api/v1/alerts/{alert_id}/ack", json={}).status_code == 409

    def test_unknown_alert_is_404(self, client):
        assert client.post("/api/v1/alerts/999/ack", json={}).status_code == 404


class TestTelemetry:
    def test_history_from_log(self, client):
        register_world(client)
        for i in range(3):
            client.post(
                "/api/v1/ingest/uplink",
                json={"hex": uplink_hex(T0 + 60 * (i + 1), bpm=60 + i, seq=i), "time": T0 + 60 * (i + 1)},
            )
        body = client.get("/api/v1/cattle/cow-1/telemetry").json()
        assert len(body["points"]) == 3
        assert body["points"][0]["bpm"] == 60
        assert body["points"][2]["latitude"] == pytest.approx(47.0075, abs=1e-6)

    def test_unknown_cow_404(self, client):
        assert client.get("/api/v1/cattle/ghost/telemetry").status_code == 404


class TestEventHub:
    def test_publish_reaches_all_subscribers(self, service):
        from cattlesense.aggregator.engine import EventRecord

        q1 = service.hub.subscribe()
        q2 = service.hub.subscribe()
        record = EventRecord(1, T0, "FrameAccepted", {"hex": "00", "src": "uplink"})
        service.hub.publish(record)
        assert q1.get(timeout=1) is record
        assert q2.get(timeout=1) is record
        service.hub.unsubscribe(q1)
        service.hub.publish(record)
        assert q1.empty()
        assert q2.get(timeout=1) is record


class TestStreamOverHttp:
    """SSE needs a real server; TestClient cannot cancel a sync generator."""

    @pytest.fixture()
    def server(self, service):
        import socket
        import time as _time

        import uvicorn

        with socket.socket() as s:
            s.bind(("127.0.0.1", 0))
            port = s.getsockname()[1]
        app = create_app(service, clock=lambda: T0)
        config = uvicorn.Config(app, host="127.0.0.1", port=port, log_level="error")
        srv = uvicorn.Server(config)
        thread = threading.Thread(target=srv.run, daemon=True)
        thread.start()
        deadline = _time.monotonic() + 10
        while not srv.started:
            if _time.monotonic() > deadline:
                raise RuntimeError("server did not start")
            _time.sleep(0.02)
        yield f"http://127.0.0.1:{port}"
        srv.should_exit = True
        thread.join(5)

    def test_stream_delivers_committed_events(self, server):
        import httpx

        with httpx.Client(base_url=server, timeout=10.0) as http:
            register_world(http)
            got = []
            ready = threading.Event()

            def consume():
                with http.stream("GET", "/api/v1/stream") as response:
                    ready.set()
                    for line in response.iter_lines():
                        if line.startswith("data: "):
                            got.append(json.loads(line[6:]))
                            if len(got) >= 2:
                                return

            thread = threading.Thread(target=consume, daemon=True)
            thread.start()
            assert ready.wait(5.0)
            http.post(
                "/api/v1/ingest/uplink", json={"hex": uplink_hex(T0 + 60), "time": T0 + 60}
            )
            http.post(
                "/api/v1/ingest/uplink", json={"hex": uplink_hex(T0 + 120, seq=1), "time": T0 + 120}
            )
            thread.join(10.0)
            assert not thread.is_alive()
            kinds = [e["kind"] for e in got]
            assert kinds == ["FrameAccepted", "FrameAccepted"]
            assert got[0]["ts_iso"].endswith("Z")
