"""HTTP/SSE surface of the aggregator.

JSON bodies throughout; all timestamps in payloads are ISO-8601 UTC.  The
stream endpoint pushes every committed EventRecord to connected clients;
consumers that fall behind or reconnect are expected to resynchronize from
the snapshot endpoints.
"""

from __future__ import annotations

import json
import queue

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import StreamingResponse
from pydantic import BaseModel, Field

from cattlesense import frames
from cattlesense.aggregator.engine import (
    KIND_ACCEPTED,
    AlertNotFound,
    AlertNotOpen,
    RegistrationRejected,
)
from cattlesense.aggregator.eventlog import iter_log
from cattlesense.aggregator.service import AggregatorService, iso_utc, parse_when
from cattlesense.model import ActivityCode, CattleProfile, FenceError, GeoFence


class ProfileIn(BaseModel):
    cattle_id: str
    rfid_tag: int = Field(ge=0, le=0xFFFFFFFF)
    node_id: int = Field(ge=0, le=0xFFFF)
    expected_activity: dict[str, int] = Field(default_factory=dict)
    heartbeat_band: tuple[float, float] | None = None


class StationIn(BaseModel):
    station_id: int = Field(ge=0, le=0xFFFF)
    kind: str
    activity_code: str | None = None


class FenceIn(BaseModel):
    vertices: list[tuple[float, float]]


class AckIn(BaseModel):
    actor: str = "admin"


class IngestIn(BaseModel):
    hex: str
    time: float | str | None = None


def _sample_payload(entry) -> dict:
    ts, temperature, humidity, audio = entry
    return {
        "timestamp": iso_utc(ts),
        "temperature": temperature,
        "humidity": humidity,
        "audio_level": audio,
    }


def _alert_payload(alert: dict) -> dict:
    out = dict(alert)
    for key in ("opened_at", "acknowledged_at", "resolved_at"):
        out[key] = iso_utc(out[key])
    return out


def create_app(service: AggregatorService, clock=None, ui_dir=None) -> FastAPI:
    """Build the API around one service instance.

    ``clock()`` supplies "now" for administrator commands; the default wall
    clock suits live operation, while a simulation passes its own clock so
    admin actions do not leap the engine ahead of simulated time.
    """
    import time as _time

    clock = clock or _time.time
    app = FastAPI(title="cattlesense", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def now() -> float:
        return max(float(clock()), service.engine.now)

    @app.get("/api/v1/environment/latest")
    def environment_latest():
        with service.lock:
            stations = {}
            for sid in sorted(service.engine.stations):
                st = service.engine.stations[sid]
                if st.kind != "environment":
                    continue
                latest = st.latest
                stations[str(sid)] = {
                    "latest": None
                    if latest is None
                    else {
                        "timestamp": iso_utc(latest.timestamp),
                        "temperature": latest.temperature,
                        "humidity": latest.humidity,
                        "audio_level": latest.audio_level,
                    },
                    "ring": [_sample_payload(e) for e in st.ring],
                }
        return {"stations": stations}

    @app.get("/api/v1/cattle")
    def cattle_list():
        snap = service.snapshot()
        out = []
        for cattle_id, entry in snap["cattle"].items():
            fix = entry["latest_fix"]
            if fix is not None:
                fix = dict(fix)
                fix["timestamp"] = iso_utc(fix["timestamp"])
            counter = entry["counter"]
            if counter is not None:
                counter = dict(counter)
                counter["started_at"] = iso_utc(counter["started_at"])
            out.append(
                {
                    "cattle_id": cattle_id,
                    "profile": entry["profile"],
                    "latest_fix": fix,
                    "in_fence": entry["in_fence"],
                    "latest_bpm": entry["latest_bpm"],
                    "bpm_confidence": entry["bpm_confidence"],
                    "counter": counter,
                    "daily": entry["daily"],
                    "last_uplink_at": iso_utc(entry["last_uplink_at"]),
                }
            )
        return {"cattle": out, "fence_version": snap["fence_version"]}

    @app.post("/api/v1/cattle", status_code=201)
    def cattle_register(body: ProfileIn):
        try:
            expected = {ActivityCode[k]: v for k, v in body.expected_activity.items()}
        except KeyError as e:
            raise HTTPException(400, detail={"errors": [f"UnknownActivity: {e.args[0]}"]})
        band = body.heartbeat_band or tuple(service.engine.rules.default_heartbeat_band)
        profile = CattleProfile(
            cattle_id=body.cattle_id,
            rfid_tag=body.rfid_tag,
            node_id=body.node_id,
            expected_activity=expected,
            heartbeat_band=(float(band[0]), float(band[1])),
        )
        try:
            warnings = service.register_profile(profile, now())
        except RegistrationRejected as e:
            raise HTTPException(400, detail={"errors": list(e.errors)})
        return {"accepted": True, "warnings": list(warnings)}

    @app.post("/api/v1/stations", status_code=201)
    def station_register(body: StationIn):
        code = None
        if body.activity_code is not None:
            try:
                code = ActivityCode[body.activity_code]
            except KeyError:
                raise HTTPException(400, detail=f"unknown activity {body.activity_code!r}")
        try:
            service.register_station(body.station_id, body.kind, code, now())
        except ValueError as e:
            raise HTTPException(400, detail=str(e))
        return {"accepted": True}

    @app.get("/api/v1/cattle/{cattle_id}/telemetry")
    def telemetry(cattle_id: str, from_: str | None = Query(None, alias="from"),
                  to: str | None = Query(None)):
        with service.lock:
            profile = service.engine.registry.get(cattle_id)
        if profile is None:
            raise HTTPException(404, detail=f"unknown cattle_id {cattle_id!r}")
        if service.log is None:
            raise HTTPException(409, detail="no event log attached")
        service.log.flush()
        t_lo = parse_when(from_) if from_ is not None else float("-inf")
        t_hi = parse_when(to) if to is not None else float("inf")
        points = []
        for record in iter_log(service.log.path):
            if record.kind != KIND_ACCEPTED or record.payload.get("src") != "uplink":
                continue
            if not t_lo <= record.ts <= t_hi:
                continue
            frame = frames.decode_uplink(bytes.fromhex(record.payload["hex"]))
            if frame.node_id != profile.node_id:
                continue
            points.append(
                {
                    "time": iso_utc(record.ts),
                    "latitude": frame.latitude if frame.gps_valid else None,
                    "longitude": frame.longitude if frame.gps_valid else None,
                    "altitude": frame.altitude if frame.gps_valid else None,
                    "bpm": frame.bpm if frame.bpm > 0 else None,
                }
            )
        return {"cattle_id": cattle_id, "points": points}

    @app.get("/api/v1/alerts")
    def alerts(state: str = Query("all", pattern="^(open|acked|all)$")):
        return {"alerts": [_alert_payload(a) for a in service.alerts(state)]}

    @app.post("/api/v1/alerts/{alert_id}/ack")
    def acknowledge(alert_id: int, body: AckIn):
        try:
            alert = service.acknowledge_alert(alert_id, body.actor, now())
        except AlertNotFound:
            raise HTTPException(404, detail=f"alert {alert_id} not found")
        except AlertNotOpen as e:
            raise HTTPException(409, detail=str(e))
        return _alert_payload(alert.to_payload())

    @app.put("/api/v1/geofence")
    def put_geofence(body: FenceIn):
        try:
            fence = GeoFence(body.vertices)
        except FenceError as e:
            raise HTTPException(400, detail=str(e))
        service.set_fence(fence, now())
        return {"accepted": True, "version": service.engine.fence_version}

    @app.get("/api/v1/stats")
    def stats():
        return service.stats()

    @app.get("/api/v1/rules")
    def rules():
        return service.rules()

    @app.post("/api/v1/ingest/uplink")
    def ingest_uplink(body: IngestIn):
        return _ingest(body, service.ingest_uplink)

    @app.post("/api/v1/ingest/station")
    def ingest_station(body: IngestIn):
        return _ingest(body, service.ingest_station)

    def _ingest(body: IngestIn, call):
        try:
            data = bytes.fromhex(body.hex)
        except ValueError:
            raise HTTPException(400, detail="hex field is not valid hex")
        t = parse_when(body.time) if body.time is not None else now()
        result = call(data, t)
        return {"accepted": result.accepted, "cause": result.cause}

    @app.get("/api/v1/stream")
    def stream(request: Request):
        q = service.hub.subscribe()

        def gen():
            try:
                yield ": connected\n\n"
                while True:
                    try:
                        record = q.get(timeout=10.0)
                    except queue.Empty:
                        yield ": keepalive\n\n"
                        continue
                    body = record.to_dict()
                    body["ts_iso"] = iso_utc(record.ts)
                    yield f"id: {record.seq}\nevent: {record.kind}\ndata: {json.dumps(body)}\n\n"
            finally:
                service.hub.unsubscribe(q)

        return StreamingResponse(gen(), media_type="text/event-stream")

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
