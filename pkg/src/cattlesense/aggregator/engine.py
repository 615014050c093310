"""Event-sourced fusion engine.

One logical writer consumes timestamped inputs (profile/station/fence
registration, raw frames, acknowledgements, clock advances) and emits a
gap-free stream of EventRecords: the inputs themselves plus everything the
rules derive from them.  Derived events (alert transitions, counter resets,
day rollups) are a pure function of the input stream, which is what makes a
log replay land on the exact same state:

* environmental and heartbeat rules are evaluated inline during ingestion;
* time-driven rules (node silence, day rollup) fire at deadlines computed
  from input timestamps, not from any wall clock, so advancing the engine to
  time T performs every deadline in (time, kind, key) order first.

All timestamps are UTC seconds as floats.  The engine is single-threaded by
contract; the service layer serializes access.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field

from cattlesense import frames
from cattlesense.aggregator.rules import (
    OPEN,
    RESOLVE,
    RuleConfig,
    activity_deficits,
    evaluate_environment,
    out_of_band,
)
from cattlesense.model import (
    ActivityCode,
    ActivityCounter,
    Alert,
    AlertRule,
    AlertState,
    CattleProfile,
    EnvSample,
    FixQuality,
    GeoFence,
    GeoFix,
    Severity,
    validate_profile,
)

DAY_S = 86400.0
ENV_RING_S = 86400.0
BPM_TREND_WINDOW = 5

KIND_RULES = "RulesConfigured"
KIND_PROFILE = "ProfileRegistered"
KIND_STATION = "StationRegistered"
KIND_FENCE = "FenceUpdated"
KIND_ACCEPTED = "FrameAccepted"
KIND_REJECTED = "FrameRejected"
KIND_ACK = "AlertAcknowledged"
KIND_OPENED = "AlertOpened"
KIND_RESOLVED = "AlertResolved"
KIND_COUNTER_RESET = "CounterReset"
KIND_ROLLUP = "DayRollup"

INPUT_KINDS = frozenset(
    {KIND_RULES, KIND_PROFILE, KIND_STATION, KIND_FENCE, KIND_ACCEPTED, KIND_REJECTED, KIND_ACK}
)
DERIVED_KINDS = frozenset({KIND_OPENED, KIND_RESOLVED, KIND_COUNTER_RESET, KIND_ROLLUP})


@dataclass(frozen=True, slots=True)
class EventRecord:
    seq: int
    ts: float
    kind: str
    payload: dict

    def to_dict(self) -> dict:
        return {"seq": self.seq, "ts": self.ts, "kind": self.kind, "payload": self.payload}


@dataclass(frozen=True, slots=True)
class IngestResult:
    accepted: bool
    cause: str | None = None


class RegistrationRejected(ValueError):
    def __init__(self, errors):
        super().__init__(", ".join(errors))
        self.errors = tuple(errors)


class AlertNotFound(KeyError):
    pass


class AlertNotOpen(ValueError):
    pass


class ReplayDivergence(Exception):
    def __init__(self, seq: int, message: str):
        super().__init__(f"seq {seq}: {message}")
        self.seq = seq


@dataclass(slots=True)
class CowState:
    latest_fix: GeoFix | None = None
    in_fence: bool | None = None
    latest_bpm: int | None = None
    bpm_history: deque = field(default_factory=lambda: deque(maxlen=BPM_TREND_WINDOW))
    counter: ActivityCounter | None = None
    daily: dict = field(default_factory=dict)  # day index -> {ActivityCode: count}
    last_uplink_at: float | None = None
    silence_anchor: float = 0.0
    hb_out_streak: int = 0
    hb_in_streak: int = 0


@dataclass(slots=True)
class StationState:
    kind: str  # "environment" | "rfid"
    activity_code: ActivityCode | None = None
    latest: EnvSample | None = None
    ring: deque = field(default_factory=deque)  # (ts, temp, humidity, audio)
    history: deque = field(default_factory=deque)  # rule window, maxlen set on creation


class Aggregator:
    """The central unit: ingest, fuse, evaluate, persist, answer queries."""

    def __init__(self, rules: RuleConfig | None = None, sink=None):
        self.rules = rules or RuleConfig()
        self._sink = sink
        self._seq = 0
        self._now = 0.0
        self._started = False
        self.registry: dict[str, CattleProfile] = {}
        self.by_node: dict[int, str] = {}
        self.by_tag: dict[int, str] = {}
        self.cows: dict[str, CowState] = {}
        self.stations: dict[int, StationState] = {}
        self.fence: GeoFence | None = None
        self.fence_version = 0
        self.alerts: dict[int, Alert] = {}
        self._next_alert_id = 1
        self._unresolved: dict[tuple[str, str], int] = {}  # (rule, subject) -> alert_id
        self.stats_accepted = {"uplink": 0, "station": 0}
        self.stats_rejected: dict[str, int] = {}
        self._deadlines: list[tuple[float, str, str]] = []

    # ---------------------------------------------------------------- time

    @property
    def now(self) -> float:
        return self._now

    @property
    def last_seq(self) -> int:
        return self._seq

    def set_sink(self, sink):
        self._sink = sink

    def _emit(self, kind: str, payload: dict) -> EventRecord:
        self._seq += 1
        record = EventRecord(self._seq, self._now, kind, payload)
        if self._sink is not None:
            self._sink(record)
        return record

    def _ensure_started(self, t: float):
        if self._started:
            return
        self._started = True
        self._now = t
        self._emit(KIND_RULES, self.rules.to_dict())
        offset = self.rules.day_rollover_offset_s
        boundary = offset + (math.floor((t - offset) / DAY_S) + 1) * DAY_S
        heapq.heappush(self._deadlines, (boundary, "rollover", ""))

    def advance_time(self, t) -> None:
        """Drive time-based rules up to ``t`` with no accompanying input."""
        t = float(t)
        self._ensure_started(t)
        self._advance(t)

    def _advance(self, t: float):
        if t < self._now:
            return
        heap = self._deadlines
        while heap and heap[0][0] <= t:
            when, tag, key = heapq.heappop(heap)
            if tag == "rollover":
                self._now = when
                self._fire_rollover(when)
            else:
                self._fire_silence(when, key)
        if t > self._now:
            self._now = t

    # ------------------------------------------------------------- registry

    def register_profile(self, profile: CattleProfile, t) -> tuple[str, ...]:
        """Admit a cow to the registry; returns validation warnings.

        Raises :class:`RegistrationRejected` when the profile collides with
        the registry or violates its own invariants.
        """
        t = float(t)
        self._ensure_started(t)
        self._advance(t)
        verdict = validate_profile(profile, self.registry.values())
        if not verdict.accepted:
            raise RegistrationRejected(verdict.errors)
        self.registry[profile.cattle_id] = profile
        self.by_node[profile.node_id] = profile.cattle_id
        self.by_tag[profile.rfid_tag] = profile.cattle_id
        cow = CowState(silence_anchor=self._now)
        self.cows[profile.cattle_id] = cow
        heapq.heappush(
            self._deadlines,
            (self._now + self.rules.node_silence_timeout_s, "silence", profile.cattle_id),
        )
        self._emit(
            KIND_PROFILE,
            {
                "cattle_id": profile.cattle_id,
                "rfid_tag": profile.rfid_tag,
                "node_id": profile.node_id,
                "expected_activity": {
                    code.name: count for code, count in sorted(profile.expected_activity.items())
                },
                "heartbeat_band": [profile.heartbeat_band[0], profile.heartbeat_band[1]],
            },
        )
        return verdict.warnings

    def register_station(self, station_id: int, kind: str, activity_code=None, t=0.0):
        t = float(t)
        self._ensure_started(t)
        self._advance(t)
        if kind not in ("environment", "rfid"):
            raise ValueError(f"unknown station kind {kind!r}")
        if station_id in self.stations:
            raise ValueError(f"station {station_id} already registered")
        code = ActivityCode(activity_code) if activity_code is not None else None
        if kind == "rfid" and code is None:
            raise ValueError("rfid stations need an activity_code")
        state = StationState(kind=kind, activity_code=code)
        state.history = deque(maxlen=max(0, self.rules.persistence_count - 1))
        self.stations[station_id] = state
        self._emit(
            KIND_STATION,
            {
                "station_id": station_id,
                "kind": kind,
                "activity_code": None if code is None else code.name,
            },
        )

    def set_fence(self, fence: GeoFence, t):
        t = float(t)
        self._ensure_started(t)
        self._advance(t)
        self.fence = fence
        self.fence_version += 1
        self._emit(
            KIND_FENCE,
            {
                "vertices": [[lat, lon] for lat, lon in fence.vertices],
                "version": self.fence_version,
            },
        )

    # -------------------------------------------------------------- ingest

    def ingest_uplink(self, data: bytes, arrival_time) -> IngestResult:
        """Decode and fuse one collar frame; never raises on bad input."""
        t = float(arrival_time)
        self._ensure_started(t)
        self._advance(t)
        try:
            frame = frames.decode_uplink(data)
        except frames.CodecError as e:
            return self._reject("uplink", data, e.cause)
        cattle_id = self.by_node.get(frame.node_id)
        if cattle_id is None:
            return self._reject("uplink", data, "UnknownNode")
        self.stats_accepted["uplink"] += 1
        self._emit(KIND_ACCEPTED, {"src": "uplink", "hex": data.hex()})
        cow = self.cows[cattle_id]
        cow.last_uplink_at = t
        cow.silence_anchor = t
        if self._unresolved.get((AlertRule.NODE_SILENT.value, cattle_id)):
            self._resolve_alert(AlertRule.NODE_SILENT, cattle_id, "uplink resumed")
        # the node's single pending deadline entry re-arms itself when popped
        if frame.gps_valid:
            fix = GeoFix(
                frame.latitude,
                frame.longitude,
                frame.altitude,
                FixQuality.STANDARD,
                float(frame.timestamp),
            )
            cow.latest_fix = fix
            self._evaluate_geofence(cattle_id, cow, fix)
        if frame.bpm > 0:
            cow.latest_bpm = frame.bpm
            cow.bpm_history.append(frame.bpm)
            self._evaluate_heartbeat(cattle_id, cow, frame.bpm)
        return IngestResult(True)

    def ingest_station(self, data: bytes, arrival_time) -> IngestResult:
        t = float(arrival_time)
        self._ensure_started(t)
        self._advance(t)
        try:
            frame = frames.decode_station(data)
        except frames.CodecError as e:
            return self._reject("station", data, e.cause)
        station = self.stations.get(frame.station_id)
        if station is None:
            return self._reject("station", data, "UnknownStation")
        if frame.is_environment:
            self.stats_accepted["station"] += 1
            self._emit(KIND_ACCEPTED, {"src": "station", "hex": data.hex()})
            sample = EnvSample(
                temperature=frame.temperature,
                humidity=frame.humidity,
                audio_level=frame.audio_db,
                timestamp=float(frame.timestamp),
                station_id=frame.station_id,
            )
            self._apply_env_sample(station, sample)
            return IngestResult(True)
        cattle_id = self.by_tag.get(frame.rfid_tag)
        if cattle_id is None:
            return self._reject("station", data, "UnknownTag")
        self.stats_accepted["station"] += 1
        self._emit(KIND_ACCEPTED, {"src": "station", "hex": data.hex()})
        self.record_activity(cattle_id, ActivityCode(frame.activity_code), float(frame.timestamp))
        return IngestResult(True)

    def _reject(self, src: str, data: bytes, cause: str) -> IngestResult:
        self.stats_rejected[cause] = self.stats_rejected.get(cause, 0) + 1
        self._emit(KIND_REJECTED, {"src": src, "hex": data.hex(), "cause": cause})
        return IngestResult(False, cause)

    # ---------------------------------------------------------------- rules

    def _evaluate_geofence(self, cattle_id: str, cow: CowState, fix: GeoFix):
        if self.fence is None:
            cow.in_fence = None
            return
        inside = self.fence.contains((fix.latitude, fix.longitude))
        cow.in_fence = inside
        if not inside:
            self._open_alert(
                AlertRule.GEOFENCE_BREACH,
                cattle_id,
                Severity.CRITICAL,
                "fix (%.7f, %.7f) outside fence v%d"
                % (fix.latitude, fix.longitude, self.fence_version),
            )
        else:
            self._resolve_alert(AlertRule.GEOFENCE_BREACH, cattle_id, "fix back inside fence")

    def _evaluate_heartbeat(self, cattle_id: str, cow: CowState, bpm: int):
        band = self.registry[cattle_id].heartbeat_band
        k = self.rules.persistence_count
        if out_of_band(bpm, band):
            cow.hb_out_streak += 1
            cow.hb_in_streak = 0
            if cow.hb_out_streak >= k:
                self._open_alert(
                    AlertRule.HEARTBEAT_OUT_OF_BAND,
                    cattle_id,
                    Severity.WARNING,
                    "bpm %d outside [%g, %g]" % (bpm, band[0], band[1]),
                )
        else:
            cow.hb_in_streak += 1
            cow.hb_out_streak = 0
            if cow.hb_in_streak >= k:
                self._resolve_alert(
                    AlertRule.HEARTBEAT_OUT_OF_BAND, cattle_id, "bpm %d back in band" % bpm
                )

    def _apply_env_sample(self, station: StationState, sample: EnvSample):
        verdicts = evaluate_environment(sample, tuple(station.history), self.rules)
        station.history.append(sample)
        station.latest = sample
        ring = station.ring
        ring.append((sample.timestamp, sample.temperature, sample.humidity, sample.audio_level))
        horizon = sample.timestamp - ENV_RING_S
        while ring and ring[0][0] <= horizon:
            ring.popleft()
        subject = "station:%d" % sample.station_id
        for rule, verdict in verdicts.items():
            if verdict == OPEN:
                value = getattr(sample, rule_field(rule))
                band = self.rules.band_for(rule)
                self._open_alert(
                    rule,
                    subject,
                    Severity.WARNING,
                    "%s %g outside [%g, %g]" % (rule_field(rule), value, band[0], band[1]),
                )
            elif verdict == RESOLVE:
                self._resolve_alert(rule, subject, "%s back in range" % rule_field(rule))

    def record_activity(self, cattle_id: str, activity: ActivityCode, timestamp: float):
        """Apply one RFID read: bump the daily tally and the session counter."""
        cow = self.cows[cattle_id]
        day = int(math.floor((timestamp - self.rules.day_rollover_offset_s) / DAY_S))
        tallies = cow.daily.setdefault(day, {})
        tallies[activity] = tallies.get(activity, 0) + 1
        counter = cow.counter
        if counter is None:
            cow.counter = ActivityCounter(cattle_id, activity, 1, timestamp)
        elif counter.activity_code == activity:
            counter.current_count += 1
        else:
            self._emit(
                KIND_COUNTER_RESET,
                {
                    "cattle_id": cattle_id,
                    "activity": counter.activity_code.name,
                    "count": counter.current_count,
                    "started_at": counter.session_started_at,
                    "ended_at": self._now,
                },
            )
            cow.counter = ActivityCounter(cattle_id, activity, 1, timestamp)

    def _fire_rollover(self, boundary: float):
        offset = self.rules.day_rollover_offset_s
        day = int(round((boundary - offset) / DAY_S)) - 1
        for cattle_id in sorted(self.registry):
            profile = self.registry[cattle_id]
            cow = self.cows[cattle_id]
            tallies = cow.daily.get(day, {})
            for activity, got, want, severity in activity_deficits(
                tallies, profile.expected_activity
            ):
                self._open_alert(
                    AlertRule.ACTIVITY_FREQUENCY_DEFICIT,
                    "%s:%s" % (cattle_id, activity.name),
                    severity,
                    "%s %d of %d" % (activity.name, got, want),
                )
            for activity in sorted(profile.expected_activity, key=lambda a: a.value):
                want = profile.expected_activity[activity]
                got = tallies.get(activity, 0)
                if want > 0 and got >= want:
                    self._resolve_alert(
                        AlertRule.ACTIVITY_FREQUENCY_DEFICIT,
                        "%s:%s" % (cattle_id, activity.name),
                        "%s %d of %d" % (activity.name, got, want),
                    )
            self._emit(
                KIND_ROLLUP,
                {
                    "cattle_id": cattle_id,
                    "day": day,
                    "tallies": {code.name: n for code, n in sorted(tallies.items())},
                },
            )
        heapq.heappush(self._deadlines, (boundary + DAY_S, "rollover", ""))

    def _fire_silence(self, when: float, cattle_id: str):
        cow = self.cows.get(cattle_id)
        if cow is None:
            return
        if self._unresolved.get((AlertRule.NODE_SILENT.value, cattle_id)):
            return  # already alerting; re-armed on resolve
        due = cow.silence_anchor + self.rules.node_silence_timeout_s
        if due > when:
            heapq.heappush(self._deadlines, (due, "silence", cattle_id))
            return
        self._now = when
        node_id = self.registry[cattle_id].node_id
        self._open_alert(
            AlertRule.NODE_SILENT,
            cattle_id,
            Severity.WARNING,
            "node %d silent for %g s" % (node_id, self.rules.node_silence_timeout_s),
        )

    # --------------------------------------------------------------- alerts

    def _open_alert(self, rule: AlertRule, subject: str, severity: Severity, detail: str):
        key = (rule.value, subject)
        if key in self._unresolved:
            return None
        alert = Alert(
            alert_id=self._next_alert_id,
            rule=rule,
            subject=subject,
            severity=severity,
            opened_at=self._now,
            detail=detail,
        )
        self._next_alert_id += 1
        self.alerts[alert.alert_id] = alert
        self._unresolved[key] = alert.alert_id
        self._emit(
            KIND_OPENED,
            {
                "alert_id": alert.alert_id,
                "rule": rule.value,
                "subject": subject,
                "severity": severity.value,
                "detail": detail,
            },
        )
        return alert

    def _resolve_alert(self, rule: AlertRule, subject: str, detail: str):
        if not self._unresolved:
            return None
        key = (rule.value, subject)
        alert_id = self._unresolved.get(key)
        if alert_id is None:
            return None
        alert = self.alerts[alert_id]
        alert.resolved_at = self._now
        del self._unresolved[key]
        self._emit(
            KIND_RESOLVED,
            {"alert_id": alert_id, "rule": rule.value, "subject": subject, "detail": detail},
        )
        if rule is AlertRule.NODE_SILENT:
            cow = self.cows.get(subject)
            if cow is not None:
                heapq.heappush(
                    self._deadlines,
                    (cow.silence_anchor + self.rules.node_silence_timeout_s, "silence", subject),
                )
        return alert

    def acknowledge_alert(self, alert_id: int, actor: str, t):
        t = float(t)
        self._ensure_started(t)
        self._advance(t)
        alert = self.alerts.get(alert_id)
        if alert is None:
            raise AlertNotFound(alert_id)
        if alert.state is not AlertState.OPEN:
            raise AlertNotOpen(f"alert {alert_id} is {alert.state.value}")
        alert.acknowledged_at = self._now
        self._emit(KIND_ACK, {"alert_id": alert_id, "actor": actor})
        return alert

    # ------------------------------------------------------------- queries

    def alerts_by_state(self, which: str = "all") -> list[Alert]:
        items = sorted(self.alerts.values(), key=lambda a: a.alert_id)
        if which == "open":
            return [a for a in items if a.state is AlertState.OPEN]
        if which == "acked":
            return [a for a in items if a.state is AlertState.ACKNOWLEDGED]
        if which == "all":
            return items
        raise ValueError(f"unknown alert filter {which!r}")

    def stats(self) -> dict:
        return {
            "accepted": dict(self.stats_accepted),
            "rejected": dict(sorted(self.stats_rejected.items())),
            "events": self._seq,
            "alerts_total": len(self.alerts),
            "alerts_open": len(self._unresolved),
        }

    def bpm_confidence(self, cattle_id: str) -> float | None:
        """Steadiness of the recent BPM trend: 1 - CV over the last readings."""
        cow = self.cows.get(cattle_id)
        if cow is None or len(cow.bpm_history) < 2:
            return None
        values = list(cow.bpm_history)
        mean = sum(values) / len(values)
        if mean <= 0:
            return None
        var = sum((v - mean) ** 2 for v in values) / len(values)
        return 1.0 - min(1.0, math.sqrt(var) / mean)

    def snapshot(self) -> dict:
        """Deep, JSON-friendly dump of every piece of queryable state."""
        cattle = {}
        for cattle_id in sorted(self.registry):
            profile = self.registry[cattle_id]
            cow = self.cows[cattle_id]
            fix = cow.latest_fix
            counter = cow.counter
            cattle[cattle_id] = {
                "profile": {
                    "cattle_id": profile.cattle_id,
                    "rfid_tag": profile.rfid_tag,
                    "node_id": profile.node_id,
                    "expected_activity": {
                        c.name: n for c, n in sorted(profile.expected_activity.items())
                    },
                    "heartbeat_band": list(profile.heartbeat_band),
                },
                "latest_fix": None
                if fix is None
                else {
                    "latitude": fix.latitude,
                    "longitude": fix.longitude,
                    "altitude": fix.altitude,
                    "quality": fix.quality.value,
                    "timestamp": fix.timestamp,
                },
                "in_fence": cow.in_fence,
                "latest_bpm": cow.latest_bpm,
                "bpm_confidence": self.bpm_confidence(cattle_id),
                "counter": None
                if counter is None
                else {
                    "activity": counter.activity_code.name,
                    "count": counter.current_count,
                    "started_at": counter.session_started_at,
                },
                "daily": {
                    str(day): {c.name: n for c, n in sorted(tallies.items())}
                    for day, tallies in sorted(cow.daily.items())
                },
                "last_uplink_at": cow.last_uplink_at,
            }
        stations = {}
        for station_id in sorted(self.stations):
            st = self.stations[station_id]
            latest = st.latest
            stations[str(station_id)] = {
                "kind": st.kind,
                "activity_code": None if st.activity_code is None else st.activity_code.name,
                "latest": None
                if latest is None
                else {
                    "temperature": latest.temperature,
                    "humidity": latest.humidity,
                    "audio_level": latest.audio_level,
                    "timestamp": latest.timestamp,
                },
                "ring": [list(entry) for entry in st.ring],
            }
        return {
            "cattle": cattle,
            "stations": stations,
            "fence": None if self.fence is None else [list(v) for v in self.fence.vertices],
            "fence_version": self.fence_version,
            "alerts": [a.to_payload() for a in self.alerts_by_state("all")],
            "stats": self.stats(),
            "now": self._now,
            "seq": self._seq,
        }


def rule_field(rule: AlertRule) -> str:
    return {
        AlertRule.HUMIDITY_OUT_OF_RANGE: "humidity",
        AlertRule.TEMPERATURE_OUT_OF_RANGE: "temperature",
        AlertRule.AUDIO_OUT_OF_RANGE: "audio_level",
    }[rule]


def _profile_from_payload(payload: dict) -> CattleProfile:
    return CattleProfile(
        cattle_id=payload["cattle_id"],
        rfid_tag=payload["rfid_tag"],
        node_id=payload["node_id"],
        expected_activity={
            ActivityCode[name]: count for name, count in payload["expected_activity"].items()
        },
        heartbeat_band=tuple(payload["heartbeat_band"]),
    )


def _drive(agg: Aggregator, record: EventRecord):
    kind = record.kind
    payload = record.payload
    t = record.ts
    if kind == KIND_PROFILE:
        agg.register_profile(_profile_from_payload(payload), t)
    elif kind == KIND_STATION:
        code = payload.get("activity_code")
        agg.register_station(
            payload["station_id"],
            payload["kind"],
            None if code is None else ActivityCode[code],
            t,
        )
    elif kind == KIND_FENCE:
        agg.set_fence(GeoFence(payload["vertices"]), t)
    elif kind in (KIND_ACCEPTED, KIND_REJECTED):
        data = bytes.fromhex(payload["hex"])
        if payload["src"] == "uplink":
            agg.ingest_uplink(data, t)
        else:
            agg.ingest_station(data, t)
    elif kind == KIND_ACK:
        agg.acknowledge_alert(payload["alert_id"], payload["actor"], t)
    else:
        raise ReplayDivergence(record.seq, f"unknown input kind {kind}")


def replay_records(records, verify: bool = False, sink=None) -> Aggregator:
    """Rebuild an aggregator from its own event stream.

    Input records are re-applied; derived records are expected to re-emerge
    from the engine on their own.  With ``verify`` every emitted record is
    compared field for field against the log and the first mismatch raises
    :class:`ReplayDivergence` carrying the offending sequence number.
    ``sink``, when given, receives the re-emitted records.
    """
    pending: deque[EventRecord] = deque()

    def collect(record):
        pending.append(record)
        if sink is not None:
            sink(record)

    agg: Aggregator | None = None
    for record in records:
        if agg is None:
            if record.kind != KIND_RULES:
                raise ReplayDivergence(
                    record.seq, f"log must start with {KIND_RULES}, found {record.kind}"
                )
            agg = Aggregator(RuleConfig.from_dict(record.payload), sink=collect)
        if record.kind == KIND_RULES:
            # starting the clock re-emits the configuration record
            agg.advance_time(record.ts)
        elif record.kind in INPUT_KINDS:
            try:
                _drive(agg, record)
            except (RegistrationRejected, AlertNotFound, AlertNotOpen, ValueError) as e:
                raise ReplayDivergence(record.seq, f"input replay failed: {e}") from e
        else:
            if not pending:
                agg.advance_time(record.ts)
        if verify:
            if not pending:
                raise ReplayDivergence(record.seq, "engine did not re-derive this record")
            got = pending.popleft()
            if (
                got.seq != record.seq
                or got.ts != record.ts
                or got.kind != record.kind
                or got.payload != record.payload
            ):
                raise ReplayDivergence(
                    record.seq,
                    f"mismatch: log has {record.kind} {record.payload}, "
                    f"engine produced {got.kind} {got.payload}",
                )
        elif pending:
            pending.popleft()
    if agg is None:
        return Aggregator(RuleConfig(), sink=sink)
    if verify and pending:
        raise ReplayDivergence(pending[0].seq, "engine produced records beyond the log")
    agg.set_sink(sink)
    return agg
