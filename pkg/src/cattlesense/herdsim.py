"""Scenario-driven world generation: cows, shed stations, faults.

A scenario document (strict JSON, schema documented in
``docs/scenario-schema.md``) fully determines the run: with the same seed,
every emitted frame byte is identical across runs.  Cows move on a bounded
random walk inside the fence, visit activity stations at scheduled local
times, and report position (through the actual NMEA leg of the GPS chip)
plus a BPM estimated from a freshly synthesized pulse window.  Shed
environment drifts as a mean-reverting walk around the configured
baselines.
"""

from __future__ import annotations

import gc
import heapq
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from cattlesense import nmea
from cattlesense.biosignal import PulseWaveform
from cattlesense.frames import NodeUplinkFrame, StationFrame, encode_station, encode_uplink
from cattlesense.kernels import node_bpm, point_in_polygon, pulse_train
from cattlesense.model import NOISE_FLOOR, ActivityCode, CattleProfile, FenceError, GeoFence
from cattlesense.netsim import STATION_LATENCY_S, LoraMedium, RadioConfig

DEFAULT_START_UTC = "2024-01-01T00:00:00Z"
PULSE_SAMPLE_RATE = 50.0
PULSE_WINDOW_S = 8.0
PULSE_WIDTH_S = 0.15
WALK_STEP_M = 2.0
DEG_PER_M = 1.0 / 111_320.0
VISIT_JITTER_S = 600.0
MAX_DAILY_VISITS = 10

ENV_PARAMS = ("temperature_c", "humidity_pct", "audio_db")

_EV_UPLINK = 0
_EV_ENV = 1
_EV_VISIT = 2
_EV_STATION_DELIVER = 3


class ScenarioError(ValueError):
    """Carries every validation problem found, not just the first."""

    def __init__(self, errors):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


@dataclass(frozen=True, slots=True)
class FaultInjection:
    kind: str
    cattle_id: str | None = None
    activity_code: ActivityCode | None = None
    day: int = 0
    occurrence: int = 0
    t_start: float = 0.0
    t_end: float = 0.0
    duration_s: float = 0.0
    delta_bpm: float = 0.0
    parameter: str | None = None
    target: float = 0.0


@dataclass(frozen=True, slots=True)
class CowSpec:
    cattle_id: str
    node_id: int
    rfid_tag: int
    home: tuple[float, float]
    expected_activity: dict
    base_bpm: float = 65.0
    heartbeat_band: tuple[float, float] = (48.0, 84.0)
    altitude_m: float = 0.0
    pulse_jitter: float = 0.02

    def profile(self) -> CattleProfile:
        return CattleProfile(
            cattle_id=self.cattle_id,
            rfid_tag=self.rfid_tag,
            node_id=self.node_id,
            expected_activity=dict(self.expected_activity),
            heartbeat_band=self.heartbeat_band,
        )


@dataclass(frozen=True, slots=True)
class StationSpec:
    station_id: int
    kind: str  # "environment" | "rfid"
    activity_code: ActivityCode | None = None


@dataclass(frozen=True, slots=True)
class ShedSpec:
    temperature_c: float = 22.0
    humidity_pct: float = 55.0
    audio_db: float = 40.0
    drift: dict = field(default_factory=dict)  # stationary std dev per parameter
    relaxation_s: float = 120.0


@dataclass(frozen=True, slots=True)
class ScenarioSpec:
    name: str
    seed: int
    duration_s: float
    epoch: float  # UTC seconds at simulation t = 0
    fence: GeoFence
    shed: ShedSpec
    stations: tuple[StationSpec, ...]
    herd: tuple[CowSpec, ...]
    uplink_period_s: float
    environment_period_s: float
    radio: RadioConfig
    loss_prob: float
    faults: tuple[FaultInjection, ...]


def _parse_epoch(text: str) -> float:
    from datetime import datetime, timezone

    dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def _check_keys(obj: dict, allowed: set, where: str, errors: list):
    unknown = set(obj) - allowed
    for key in sorted(unknown):
        errors.append(f"ParseError: unknown key {key!r} in {where}")


_FAULT_KINDS = {"WanderOut", "SkipActivity", "HeartRateShift", "EnvRamp", "NodeSilence"}

_TOP_KEYS = {
    "name",
    "seed",
    "duration_s",
    "start_utc",
    "fence",
    "shed",
    "stations",
    "herd",
    "reporting",
    "radio",
    "faults",
}
_SHED_KEYS = {"temperature_c", "humidity_pct", "audio_db", "drift", "relaxation_s"}
_STATION_KEYS = {"station_id", "kind", "activity_code"}
_COW_KEYS = {
    "cattle_id",
    "node_id",
    "rfid_tag",
    "home",
    "altitude_m",
    "expected_activity",
    "base_bpm",
    "heartbeat_band",
    "pulse_jitter",
}
_REPORTING_KEYS = {"uplink_period_s", "environment_period_s"}
_RADIO_KEYS = {
    "spreading_factor",
    "bandwidth",
    "coding_rate",
    "preamble_symbols",
    "duty_cycle_limit",
    "channels",
    "loss_prob",
}
_FAULT_KEYS = {
    "kind",
    "cattle_id",
    "activity_code",
    "day",
    "occurrence",
    "t_start",
    "t_end",
    "duration_s",
    "delta_bpm",
    "parameter",
    "target",
}


def load_scenario(document: str) -> ScenarioSpec:
    """Parse and validate; raises :class:`ScenarioError` with every problem."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as e:
        raise ScenarioError([f"ParseError: invalid JSON ({e})"]) from None
    if not isinstance(doc, dict):
        raise ScenarioError(["ParseError: document must be a JSON object"])
    errors: list[str] = []
    _check_keys(doc, _TOP_KEYS, "document", errors)

    name = doc.get("name", "scenario")
    seed = doc.get("seed", 0)
    duration = doc.get("duration_s")
    if not isinstance(duration, (int, float)) or duration <= 0:
        errors.append("ParseError: duration_s must be a positive number")
        duration = 1.0
    try:
        epoch = _parse_epoch(doc.get("start_utc", DEFAULT_START_UTC))
    except ValueError:
        errors.append(f"ParseError: unreadable start_utc {doc.get('start_utc')!r}")
        epoch = _parse_epoch(DEFAULT_START_UTC)

    fence = None
    fence_doc = doc.get("fence")
    if not isinstance(fence_doc, dict) or "vertices" not in fence_doc:
        errors.append("ParseError: fence.vertices is required")
    else:
        _check_keys(fence_doc, {"vertices"}, "fence", errors)
        try:
            fence = GeoFence(fence_doc["vertices"])
        except (FenceError, TypeError, ValueError) as e:
            errors.append(f"ParseError: bad fence ({e})")

    shed_doc = doc.get("shed", {})
    if not isinstance(shed_doc, dict):
        errors.append("ParseError: shed must be an object")
        shed_doc = {}
    _check_keys(shed_doc, _SHED_KEYS, "shed", errors)
    drift = shed_doc.get("drift", {})
    if not isinstance(drift, dict):
        errors.append("ParseError: shed.drift must be an object")
        drift = {}
    _check_keys(drift, set(ENV_PARAMS), "shed.drift", errors)
    shed = ShedSpec(
        temperature_c=shed_doc.get("temperature_c", 22.0),
        humidity_pct=shed_doc.get("humidity_pct", 55.0),
        audio_db=shed_doc.get("audio_db", 40.0),
        drift={k: float(v) for k, v in drift.items()},
        relaxation_s=shed_doc.get("relaxation_s", 120.0),
    )

    stations: list[StationSpec] = []
    seen_station_ids: set[int] = set()
    station_docs = doc.get("stations", [])
    if not isinstance(station_docs, list):
        errors.append("ParseError: stations must be a list")
        station_docs = []
    for i, st in enumerate(station_docs):
        where = f"stations[{i}]"
        if not isinstance(st, dict):
            errors.append(f"ParseError: {where} must be an object")
            continue
        _check_keys(st, _STATION_KEYS, where, errors)
        sid = st.get("station_id")
        kind = st.get("kind")
        if not isinstance(sid, int) or not 0 <= sid <= 0xFFFF:
            errors.append(f"ParseError: {where}.station_id must be a 16-bit integer")
            continue
        if sid in seen_station_ids:
            errors.append(f"DuplicateId: station_id {sid} appears twice")
            continue
        seen_station_ids.add(sid)
        if kind not in ("environment", "rfid"):
            errors.append(f"ParseError: {where}.kind must be environment or rfid")
            continue
        code = None
        if kind == "rfid":
            try:
                code = ActivityCode[st.get("activity_code", "")]
            except KeyError:
                errors.append(f"ParseError: {where} needs a known activity_code")
                continue
        stations.append(StationSpec(sid, kind, code))

    herd: list[CowSpec] = []
    seen = {"cattle_id": set(), "node_id": set(), "rfid_tag": set()}
    herd_docs = doc.get("herd", [])
    if not isinstance(herd_docs, list):
        errors.append("ParseError: herd must be a list")
        herd_docs = []
    for i, cow in enumerate(herd_docs):
        where = f"herd[{i}]"
        if not isinstance(cow, dict):
            errors.append(f"ParseError: {where} must be an object")
            continue
        _check_keys(cow, _COW_KEYS, where, errors)
        ok = True
        for key in ("cattle_id", "node_id", "rfid_tag"):
            value = cow.get(key)
            if value is None:
                errors.append(f"ParseError: {where}.{key} is required")
                ok = False
            elif value in seen[key]:
                errors.append(f"DuplicateId: {key} {value!r} appears twice")
                ok = False
            else:
                seen[key].add(value)
        home = cow.get("home")
        if not (isinstance(home, (list, tuple)) and len(home) == 2):
            errors.append(f"ParseError: {where}.home must be [lat, lon]")
            ok = False
        expected = {}
        for code_name, count in (cow.get("expected_activity") or {}).items():
            try:
                code = ActivityCode[code_name]
            except KeyError:
                errors.append(f"ParseError: {where} unknown activity {code_name!r}")
                ok = False
                continue
            if not isinstance(count, int) or count < 0 or count > MAX_DAILY_VISITS:
                errors.append(
                    f"ParseError: {where}.{code_name} count must be 0..{MAX_DAILY_VISITS}"
                )
                ok = False
                continue
            expected[code] = count
        band = tuple(cow.get("heartbeat_band", (48.0, 84.0)))
        if len(band) != 2 or not band[0] < band[1]:
            errors.append(f"ParseError: {where}.heartbeat_band must be [min, max]")
            ok = False
        if not ok:
            continue
        spec = CowSpec(
            cattle_id=cow["cattle_id"],
            node_id=cow["node_id"],
            rfid_tag=cow["rfid_tag"],
            home=(float(home[0]), float(home[1])),
            expected_activity=expected,
            base_bpm=float(cow.get("base_bpm", 65.0)),
            heartbeat_band=(float(band[0]), float(band[1])),
            altitude_m=float(cow.get("altitude_m", 0.0)),
            pulse_jitter=float(cow.get("pulse_jitter", 0.02)),
        )
        if fence is not None:
            qlat = nmea.quantize_coord(spec.home[0])
            qlon = nmea.quantize_coord(spec.home[1])
            if not fence.contains((qlat, qlon)):
                errors.append(
                    f"ParseError: {where}.home {spec.home} lies outside the fence "
                    "(after GPS quantization)"
                )
                continue
        herd.append(spec)

    reporting = doc.get("reporting", {})
    if not isinstance(reporting, dict):
        errors.append("ParseError: reporting must be an object")
        reporting = {}
    _check_keys(reporting, _REPORTING_KEYS, "reporting", errors)
    uplink_period = reporting.get("uplink_period_s", 60.0)
    env_period = reporting.get("environment_period_s", 30.0)
    for label, period in (("uplink_period_s", uplink_period), ("environment_period_s", env_period)):
        if not isinstance(period, (int, float)) or period <= 0:
            errors.append(f"ParseError: reporting.{label} must be positive")

    radio_value = doc.get("radio", {})
    if not isinstance(radio_value, dict):
        errors.append("ParseError: radio must be an object")
        radio_value = {}
    radio_doc = dict(radio_value)
    _check_keys(radio_doc, _RADIO_KEYS, "radio", errors)
    loss_prob = radio_doc.pop("loss_prob", 0.0)
    if not isinstance(loss_prob, (int, float)) or not 0.0 <= loss_prob <= 1.0:
        errors.append("ParseError: radio.loss_prob must be in [0, 1]")
        loss_prob = 0.0
    try:
        radio = RadioConfig(**radio_doc)
    except (TypeError, ValueError) as e:
        errors.append(f"ParseError: bad radio config ({e})")
        radio = RadioConfig()

    cow_ids = {c.cattle_id for c in herd}
    faults: list[FaultInjection] = []
    fault_docs = doc.get("faults", [])
    if not isinstance(fault_docs, list):
        errors.append("ParseError: faults must be a list")
        fault_docs = []
    for i, ft in enumerate(fault_docs):
        where = f"faults[{i}]"
        if not isinstance(ft, dict):
            errors.append(f"ParseError: {where} must be an object")
            continue
        _check_keys(ft, _FAULT_KEYS, where, errors)
        kind = ft.get("kind")
        if kind not in _FAULT_KINDS:
            errors.append(f"ParseError: {where}.kind {kind!r} is not a known fault")
            continue
        cattle_id = ft.get("cattle_id")
        if kind != "EnvRamp":
            if cattle_id not in cow_ids:
                errors.append(f"DanglingFaultReference: {where} names unknown cow {cattle_id!r}")
                continue
        code = None
        if kind == "SkipActivity":
            try:
                code = ActivityCode[ft.get("activity_code", "")]
            except KeyError:
                errors.append(f"ParseError: {where} needs a known activity_code")
                continue
            day = ft.get("day", 0)
            if not isinstance(day, int) or not 0 <= day < duration / 86400.0:
                errors.append(f"WindowOutOfRange: {where}.day {day!r} outside the scenario")
                continue
        parameter = ft.get("parameter")
        if kind == "EnvRamp" and parameter not in ENV_PARAMS:
            errors.append(f"ParseError: {where}.parameter must be one of {ENV_PARAMS}")
            continue
        t_start = float(ft.get("t_start", 0.0))
        duration_f = float(ft.get("duration_s", 0.0))
        t_end = float(ft.get("t_end", t_start + duration_f))
        if kind in ("WanderOut", "HeartRateShift", "EnvRamp", "NodeSilence"):
            if not 0.0 <= t_start <= duration:
                errors.append(f"WindowOutOfRange: {where}.t_start {t_start} outside [0, duration]")
                continue
            if kind != "HeartRateShift" and (t_end < t_start or t_end > duration):
                errors.append(
                    f"WindowOutOfRange: {where} window [{t_start}, {t_end}] outside the scenario"
                )
                continue
        faults.append(
            FaultInjection(
                kind=kind,
                cattle_id=cattle_id,
                activity_code=code,
                day=int(ft.get("day", 0)),
                occurrence=int(ft.get("occurrence", 0)),
                t_start=t_start,
                t_end=t_end,
                duration_s=duration_f,
                delta_bpm=float(ft.get("delta_bpm", 0.0)),
                parameter=parameter,
                target=float(ft.get("target", 0.0)),
            )
        )

    if errors:
        raise ScenarioError(errors)
    return ScenarioSpec(
        name=name,
        seed=int(seed),
        duration_s=float(duration),
        epoch=epoch,
        fence=fence,
        shed=shed,
        stations=tuple(stations),
        herd=tuple(herd),
        uplink_period_s=float(uplink_period),
        environment_period_s=float(env_period),
        radio=radio,
        loss_prob=float(loss_prob),
        faults=tuple(faults),
    )


def load_scenario_file(path) -> ScenarioSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return load_scenario(fh.read())


# --------------------------------------------------------------- synthesis


_NOMINAL_BEATS: dict[tuple[float, float], np.ndarray] = {}


def _nominal_beats(base_bpm: float, duration_s: float) -> np.ndarray:
    """Jitter-free beat times: (k + 0.5) * period, so the first apex never
    lands on the window edge.  Cached per (bpm, duration)."""
    key = (base_bpm, duration_s)
    beats = _NOMINAL_BEATS.get(key)
    if beats is None:
        period = 60.0 / base_bpm
        n_beats = int(duration_s / period - 0.5) + 1
        beats = (np.arange(n_beats) + 0.5) * period
        beats.setflags(write=False)
        _NOMINAL_BEATS[key] = beats
    return beats


def _beat_schedule(
    base_bpm: float, duration_s: float, noise_fraction: float, rng: np.random.Generator
) -> np.ndarray:
    if not 20.0 <= base_bpm <= 200.0:
        raise ValueError(f"base_bpm {base_bpm} outside [20, 200]")
    beats = _nominal_beats(base_bpm, duration_s)
    if noise_fraction > 0.0:
        period = 60.0 / base_bpm
        beats = beats + rng.normal(0.0, noise_fraction * period, len(beats))
    return beats


def synthesize_pulse(
    base_bpm: float,
    duration_s: float,
    noise_fraction: float,
    rng: np.random.Generator,
    sample_rate: float = PULSE_SAMPLE_RATE,
) -> PulseWaveform:
    """Triangular pulse train at ``base_bpm`` with Gaussian timing jitter."""
    beats = _beat_schedule(base_bpm, duration_s, noise_fraction, rng)
    n = int(round(duration_s * sample_rate))
    samples = pulse_train(beats, n, sample_rate, PULSE_WIDTH_S)
    return PulseWaveform(samples=samples, sample_rate=sample_rate)


_REFRACTORY_SAMPLES = max(1, round(0.4 * PULSE_SAMPLE_RATE))  # biosignal defaults


def node_bpm_reading(
    base_bpm: float, noise_fraction: float, rng: np.random.Generator
) -> float:
    """What the collar firmware reports: BPM to one decimal, 0.0 if no estimate.

    Fused fast path over the same beats; agrees exactly with
    ``estimate_bpm(synthesize_pulse(...))`` (enforced by tests).
    """
    beats = _beat_schedule(base_bpm, PULSE_WINDOW_S, noise_fraction, rng)
    n = int(round(PULSE_WINDOW_S * PULSE_SAMPLE_RATE))
    raw = node_bpm(
        beats, n, PULSE_SAMPLE_RATE, PULSE_WIDTH_S, 0.5, _REFRACTORY_SAMPLES, NOISE_FLOOR
    )
    return 0.0 if raw <= 0.0 else round(raw, 1)


@dataclass(slots=True)
class EnvState:
    """Mean-reverting (OU-style) walk for one shed parameter."""

    baseline: float
    sigma: float  # stationary standard deviation
    theta: float  # 1 / relaxation time
    value: float
    ramps: list  # (t_start, t_end, target), applied in order
    last_t: float

    def mu(self, t: float) -> float:
        mu = self.baseline
        for t0, t1, target in self.ramps:
            if t < t0:
                continue
            if t >= t1:
                mu = target
            else:
                frac = (t - t0) / (t1 - t0) if t1 > t0 else 1.0
                mu = mu + (target - mu) * frac
        return mu

    def step(self, t: float, rng: np.random.Generator) -> float:
        dt = t - self.last_t
        self.last_t = t
        mu = self.mu(t)
        if dt <= 0.0:
            return self.value
        pull = self.theta * dt
        if pull > 1.0:
            pull = 1.0
        self.value += pull * (mu - self.value)
        if self.sigma > 0.0:
            ou_sigma = self.sigma * math.sqrt(2.0 * self.theta)
            self.value += ou_sigma * math.sqrt(dt) * rng.standard_normal()
        return self.value


def step_environment(state: dict[str, EnvState], t: float, rng: np.random.Generator) -> dict:
    """Advance all shed parameters to ``t``; returns raw (unquantized) values."""
    return {name: st.step(t, rng) for name, st in sorted(state.items())}


# -------------------------------------------------------------------- run


@dataclass(slots=True)
class SimulationReport:
    name: str
    seed: int
    duration_s: float
    cows: int
    uplinks_generated: int = 0
    uplinks_delivered: int = 0
    uplinks_lost_random: int = 0
    uplinks_lost_collision: int = 0
    uplinks_deferred: int = 0
    station_frames: int = 0
    rfid_events: int = 0
    wall_seconds: float = 0.0
    per_node: dict = field(default_factory=dict)
    medium: object = None  # the LoraMedium, for duty-cycle inspection

    @property
    def delivery_ratio(self) -> float:
        if self.uplinks_generated == 0:
            return 1.0
        return self.uplinks_delivered / self.uplinks_generated

    def summary_lines(self) -> list[str]:
        return [
            f"scenario: {self.name}",
            f"seed: {self.seed}",
            f"simulated_s: {self.duration_s:g}",
            f"cows: {self.cows}",
            f"uplinks_generated: {self.uplinks_generated}",
            f"uplinks_delivered: {self.uplinks_delivered}",
            f"uplinks_lost_random: {self.uplinks_lost_random}",
            f"uplinks_lost_collision: {self.uplinks_lost_collision}",
            f"uplinks_deferred: {self.uplinks_deferred}",
            f"delivery_ratio: {self.delivery_ratio:.4f}",
            f"station_frames: {self.station_frames}",
            f"rfid_events: {self.rfid_events}",
            f"wall_seconds: {self.wall_seconds:.2f}",
        ]


class _CowAgent:
    __slots__ = (
        "spec",
        "rng",
        "lat",
        "lon",
        "qpos",
        "seq",
        "wander",
        "outside_point",
        "hr_shifts",
        "silences",
        "step_deg",
        "_steps",
        "_step_pos",
    )

    def __init__(self, spec: CowSpec, rng: np.random.Generator, fence: GeoFence, faults):
        self.spec = spec
        self.rng = rng
        self.lat, self.lon = spec.home
        self.qpos = (nmea.quantize_coord(self.lat), nmea.quantize_coord(self.lon))
        self.seq = 0
        self.step_deg = WALK_STEP_M * DEG_PER_M
        self._steps: list[float] = []
        self._step_pos = 0
        self.wander = [
            (f.t_start, f.t_start + f.duration_s)
            for f in faults
            if f.kind == "WanderOut" and f.cattle_id == spec.cattle_id
        ]
        self.hr_shifts = [
            (f.t_start, f.delta_bpm)
            for f in faults
            if f.kind == "HeartRateShift" and f.cattle_id == spec.cattle_id
        ]
        self.silences = [
            (f.t_start, f.t_end)
            for f in faults
            if f.kind == "NodeSilence" and f.cattle_id == spec.cattle_id
        ]
        self.outside_point = _exterior_anchor(fence, spec.home) if self.wander else None

    def silent_at(self, t: float) -> bool:
        return any(t0 <= t < t1 for t0, t1 in self.silences)

    def base_bpm_at(self, t: float) -> float:
        bpm = self.spec.base_bpm
        for t0, delta in self.hr_shifts:
            if t >= t0:
                bpm += delta
        return bpm

    def wandering(self, t: float) -> bool:
        return any(t0 <= t < t1 for t0, t1 in self.wander)

    def _next_step(self) -> tuple[float, float]:
        # normals drawn in blocks; consumption order stays per-cow deterministic
        if self._step_pos >= len(self._steps):
            self._steps = (self.rng.standard_normal(256) * self.step_deg).tolist()
            self._step_pos = 0
        i = self._step_pos
        self._step_pos = i + 2
        return self._steps[i], self._steps[i + 1]

    def position_at(self, t: float, fence: GeoFence):
        """Advance the walk; returns the position as the GPS leg reports it.

        Coordinates come back already on the NMEA wire grid (the same
        quantization a serialize -> parse round trip applies), and a step is
        accepted only if the quantized point stays in the fence.
        """
        if self.wandering(t):
            return self.outside_point
        # direct kernel call; fence arrays are prevalidated
        vlat = fence._lat
        vlon = fence._lon
        for _ in range(8):
            dlat, dlon = self._next_step()
            lat = self.lat + dlat
            lon = self.lon + dlon
            qlat = nmea.quantize_coord(lat)
            qlon = nmea.quantize_coord(lon)
            if point_in_polygon(qlat, qlon, vlat, vlon):
                self.lat = lat
                self.lon = lon
                self.qpos = (qlat, qlon)
                break
        return self.qpos


def _exterior_anchor(fence: GeoFence, home) -> tuple[float, float]:
    """A deterministic wire-grid point safely outside the fence, beyond home."""
    lats = [v[0] for v in fence.vertices]
    lons = [v[1] for v in fence.vertices]
    c_lat = sum(lats) / len(lats)
    c_lon = sum(lons) / len(lons)
    d_lat = home[0] - c_lat
    d_lon = home[1] - c_lon
    norm = math.hypot(d_lat, d_lon)
    if norm < 1e-12:
        d_lat, d_lon, norm = 1.0, 0.0, 1.0
    radius = max(math.hypot(la - c_lat, lo - c_lon) for la, lo in fence.vertices)
    margin = 50.0 * DEG_PER_M
    reach = radius + margin
    for _ in range(16):
        q = (
            nmea.quantize_coord(c_lat + d_lat / norm * reach),
            nmea.quantize_coord(c_lon + d_lon / norm * reach),
        )
        if not fence.contains(q):
            return q
        reach *= 2.0
    raise FenceError("could not find a point outside the fence")


def _build_visits(spec: ScenarioSpec, agents: list[_CowAgent]):
    """(t, cow_index, activity, station_id) for every scheduled visit.

    Visit i of an n-a-day activity sits at 3600 + (i + 0.5) * 86400 / n local
    seconds, jittered +-10 min; deterministic because jitter draws happen in
    (cow, activity, day, visit) order before the run starts.
    """
    rfid_station: dict[ActivityCode, int] = {}
    for st in spec.stations:
        if st.kind == "rfid" and st.activity_code not in rfid_station:
            rfid_station[st.activity_code] = st.station_id
    skips = {
        (f.cattle_id, f.activity_code, f.day, f.occurrence)
        for f in spec.faults
        if f.kind == "SkipActivity"
    }
    days = int(math.ceil(spec.duration_s / 86400.0))
    visits = []
    for idx, agent in enumerate(agents):
        cow = agent.spec
        for activity in sorted(cow.expected_activity, key=lambda a: a.value):
            count = cow.expected_activity[activity]
            if count <= 0 or activity not in rfid_station:
                continue
            spacing = 86400.0 / count
            for day in range(days):
                for i in range(count):
                    jitter = float(agent.rng.uniform(-VISIT_JITTER_S, VISIT_JITTER_S))
                    if (cow.cattle_id, activity, day, i) in skips:
                        continue
                    t = day * 86400.0 + 3600.0 + (i + 0.5) * spacing + jitter
                    if t < spec.duration_s:
                        visits.append((t, idx, activity, rfid_station[activity]))
    return visits


def run(spec: ScenarioSpec, uplink_sink, station_sink, pacer=None,
        keep_outcome_log: bool = False) -> SimulationReport:
    """Run the world and feed frames to the sinks in nondecreasing sim time.

    ``uplink_sink(frame_bytes, sim_t)`` receives collar frames that survived
    the radio; ``station_sink(frame_bytes, sim_t)`` receives shed frames
    after the fixed short-range latency.  ``pacer(sim_t)`` is called before
    each event for real-time throttling.  Returns the run report.
    """
    root = np.random.SeedSequence(spec.seed)
    medium_ss, *entity_ss = root.spawn(1 + len(spec.herd) + len(spec.stations))
    medium = LoraMedium(
        spec.radio,
        spec.loss_prob,
        np.random.Generator(np.random.PCG64(medium_ss)),
        sink=lambda data, t, node_id: uplink_sink(data, t),
        keep_outcome_log=keep_outcome_log,
    )
    agents = []
    for i, cow in enumerate(spec.herd):
        rng = np.random.Generator(np.random.PCG64(entity_ss[i]))
        agents.append(_CowAgent(cow, rng, spec.fence, spec.faults))
        medium.register_node(cow.node_id)
    station_rngs = {
        st.station_id: np.random.Generator(np.random.PCG64(entity_ss[len(spec.herd) + j]))
        for j, st in enumerate(spec.stations)
    }
    env_states: dict[int, dict[str, EnvState]] = {}
    theta = 1.0 / max(spec.shed.relaxation_s, 1e-9)
    ramps = {name: [] for name in ENV_PARAMS}
    for f in spec.faults:
        if f.kind == "EnvRamp":
            ramps[f.parameter].append((f.t_start, f.t_end, f.target))
    for st in spec.stations:
        if st.kind != "environment":
            continue
        env_states[st.station_id] = {
            name: EnvState(
                baseline=getattr(spec.shed, name),
                sigma=spec.shed.drift.get(name, 0.0),
                theta=theta,
                value=getattr(spec.shed, name),
                ramps=sorted(ramps[name]),
                last_t=0.0,
            )
            for name in ENV_PARAMS
        }

    report = SimulationReport(
        name=spec.name, seed=spec.seed, duration_s=spec.duration_s, cows=len(spec.herd)
    )
    per_node = {cow.node_id: {"generated": 0} for cow in spec.herd}

    heap: list = []
    tick = 0

    def push(t, kind, a=0, b=0, payload=None):
        nonlocal tick
        tick += 1
        heapq.heappush(heap, (t, tick, kind, a, b, payload))

    n_cows = len(spec.herd)
    for i in range(n_cows):
        push(spec.uplink_period_s * i / max(n_cows, 1), _EV_UPLINK, i)
    env_stations = [st.station_id for st in spec.stations if st.kind == "environment"]
    for j, sid in enumerate(env_stations):
        push(spec.environment_period_s * j / max(len(env_stations), 1), _EV_ENV, sid)
    for t, idx, activity, sid in _build_visits(spec, agents):
        push(t, _EV_VISIT, idx, sid, activity)
    station_seq: dict[int, int] = {st.station_id: 0 for st in spec.stations}

    epoch = spec.epoch
    started = time.perf_counter()
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        while heap:
            t, _, kind, a, b, payload = heapq.heappop(heap)
            medium.advance(t)
            if pacer is not None:
                pacer(t)
            if kind == _EV_UPLINK:
                agent = agents[a]
                if not agent.silent_at(t):
                    lat, lon = agent.position_at(t, spec.fence)
                    reading = node_bpm_reading(
                        agent.base_bpm_at(t), agent.spec.pulse_jitter, agent.rng
                    )
                    bpm = 0 if reading <= 0.0 else min(255, int(round(reading)))
                    frame = NodeUplinkFrame.from_physical(
                        node_id=agent.spec.node_id,
                        seq=agent.seq,
                        timestamp=epoch + t,
                        latitude=lat,
                        longitude=lon,
                        altitude=agent.spec.altitude_m,
                        bpm=bpm,
                    )
                    data = encode_uplink(frame)
                    report.uplinks_generated += 1
                    per_node[agent.spec.node_id]["generated"] += 1
                    medium.submit(agent.spec.node_id, data, t, agent.seq)
                    agent.seq = (agent.seq + 1) & 0xFF
                nxt = t + spec.uplink_period_s
                if nxt < spec.duration_s:
                    push(nxt, _EV_UPLINK, a)
            elif kind == _EV_ENV:
                values = step_environment(env_states[a], t, station_rngs[a])
                humidity = min(100, max(0, int(round(values["humidity_pct"]))))
                frame = StationFrame.environment(
                    station_id=a,
                    seq=station_seq[a],
                    timestamp=epoch + t,
                    temperature=round(values["temperature_c"], 1),
                    humidity=humidity,
                    audio_db=round(values["audio_db"], 1),
                )
                station_seq[a] = (station_seq[a] + 1) & 0xFF
                report.station_frames += 1
                push(t + STATION_LATENCY_S, _EV_STATION_DELIVER, 0, 0, encode_station(frame))
                nxt = t + spec.environment_period_s
                if nxt < spec.duration_s:
                    push(nxt, _EV_ENV, a)
            elif kind == _EV_VISIT:
                agent = agents[a]
                frame = StationFrame.rfid(
                    station_id=b,
                    seq=station_seq[b],
                    timestamp=epoch + t,
                    rfid_tag=agent.spec.rfid_tag,
                    activity_code=payload,
                )
                station_seq[b] = (station_seq[b] + 1) & 0xFF
                report.rfid_events += 1
                report.station_frames += 1
                push(t + STATION_LATENCY_S, _EV_STATION_DELIVER, 0, 0, encode_station(frame))
            else:  # _EV_STATION_DELIVER
                station_sink(payload, t)
        medium.finish()
    finally:
        if gc_was_enabled:
            gc.enable()
    report.uplinks_delivered = medium.counts["Delivered"]
    report.uplinks_lost_random = medium.counts["LostRandom"]
    report.uplinks_lost_collision = medium.counts["LostCollision"]
    report.uplinks_deferred = medium.counts["DeferredDutyCycle"]
    for node_id, counts in medium.node_counts.items():
        per_node[node_id].update(counts)
    report.per_node = per_node
    report.wall_seconds = time.perf_counter() - started
    report.medium = medium
    return report


def gen_scenario(cows: int, days: int, seed: int = 1, uplink_period_s: float = 60.0,
                 loss_prob: float = 0.01) -> dict:
    """A synthetic herd document that load_scenario accepts as-is."""
    fence = [[47.0000, 8.0000], [47.0000, 8.0200], [47.0150, 8.0200], [47.0150, 8.0000]]
    herd = []
    for i in range(cows):
        lat = 47.003 + 0.009 * ((i * 7919) % 1000) / 1000.0
        lon = 8.003 + 0.014 * ((i * 104729) % 1000) / 1000.0
        herd.append(
            {
                "cattle_id": f"cow-{i:04d}",
                "node_id": i + 1,
                "rfid_tag": 0x10000000 + i,
                "home": [round(lat, 6), round(lon, 6)],
                "expected_activity": {"MILKING": 3},
                "base_bpm": 55.0 + (i % 30),
            }
        )
    return {
        "name": f"generated-{cows}cows-{days}d",
        "seed": seed,
        "duration_s": days * 86400.0,
        "start_utc": DEFAULT_START_UTC,
        "fence": {"vertices": fence},
        "shed": {
            "temperature_c": 22.0,
            "humidity_pct": 55.0,
            "audio_db": 40.0,
            "drift": {"temperature_c": 1.0, "humidity_pct": 3.0, "audio_db": 1.5},
        },
        "stations": [
            {"station_id": 1, "kind": "environment"},
            {"station_id": 2, "kind": "rfid", "activity_code": "MILKING"},
        ],
        "herd": herd,
        "reporting": {"uplink_period_s": uplink_period_s, "environment_period_s": 30.0},
        "radio": {"loss_prob": loss_prob},
        "faults": [],
    }
