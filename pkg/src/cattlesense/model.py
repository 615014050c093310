"""Shared vocabulary of the herd-monitoring system.

Positions, fences, per-cow profiles, environment samples, RFID events,
alerts and activity counters.  Everything here is an immutable value
object; the two operations (:func:`GeoFence.contains` and
:func:`validate_profile`) are pure.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from cattlesense.kernels import point_in_polygon

NOISE_FLOOR = 1e-9

# Default pulse band used when a profile is registered without one.  There is
# no authoritative numeric range for bovine resting heart rate in this code
# base; the pair is a configurable convention.
DEFAULT_HEARTBEAT_BAND = (48.0, 84.0)


class FixQuality(enum.Enum):
    NO_FIX = "NoFix"
    STANDARD = "StandardFix"
    DIFFERENTIAL = "DifferentialFix"


class ActivityCode(enum.IntEnum):
    MILKING = 1
    FEEDING = 2
    WATERING = 3
    RESTING = 4


class AlertRule(enum.Enum):
    HUMIDITY_OUT_OF_RANGE = "HumidityOutOfRange"
    TEMPERATURE_OUT_OF_RANGE = "TemperatureOutOfRange"
    AUDIO_OUT_OF_RANGE = "AudioOutOfRange"
    GEOFENCE_BREACH = "GeofenceBreach"
    ACTIVITY_FREQUENCY_DEFICIT = "ActivityFrequencyDeficit"
    HEARTBEAT_OUT_OF_BAND = "HeartbeatOutOfBand"
    NODE_SILENT = "NodeSilent"


class Severity(enum.Enum):
    WARNING = "Warning"
    CRITICAL = "Critical"


class AlertState(enum.Enum):
    OPEN = "Open"
    ACKNOWLEDGED = "Acknowledged"
    RESOLVED = "Resolved"


class FenceError(ValueError):
    """Raised when a polygon cannot be used as a geofence."""


@dataclass(frozen=True, slots=True)
class GeoFix:
    """A geodetic position report.

    ``latitude``/``longitude`` are decimal degrees and are ``None`` when
    ``quality`` is NO_FIX; ``altitude`` is metres above sea level and may be
    ``None`` (position-only sources don't carry it).  ``timestamp`` is UTC
    seconds.
    """

    latitude: float | None
    longitude: float | None
    altitude: float | None
    quality: FixQuality
    timestamp: float

    def __post_init__(self):
        if self.quality is FixQuality.NO_FIX:
            if self.latitude is not None or self.longitude is not None:
                raise ValueError("a no-fix report carries no coordinates")
            return
        if self.latitude is None or self.longitude is None:
            raise ValueError("a positioned fix needs both coordinates")
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} outside [-180, 180]")


class GeoFence:
    """Farm boundary polygon over (latitude, longitude) pairs.

    The polygon must be simple (no self-intersection) with at least three
    vertices and no consecutive duplicates; both are checked at construction
    so :meth:`contains` never has to. Containment is evaluated on the flat
    degree plane, which is fine at farm scale.
    """

    __slots__ = ("vertices", "_lat", "_lon")

    def __init__(self, vertices):
        verts = [(float(lat), float(lon)) for lat, lon in vertices]
        if len(verts) < 3:
            raise FenceError(f"polygon needs at least 3 vertices, got {len(verts)}")
        closed = verts + [verts[0]]
        for a, b in zip(closed, closed[1:]):
            if a == b:
                raise FenceError(f"consecutive duplicate vertex {a}")
        for lat, lon in verts:
            if not -90.0 <= lat <= 90.0 or not -180.0 <= lon <= 180.0:
                raise FenceError(f"vertex ({lat}, {lon}) outside geodetic range")
        if _self_intersects(verts):
            raise FenceError("polygon is self-intersecting")
        self.vertices = tuple(verts)
        self._lat = np.array([v[0] for v in verts], dtype=np.float64)
        self._lon = np.array([v[1] for v in verts], dtype=np.float64)

    def contains(self, point) -> bool:
        """True iff ``point = (lat, lon)`` is inside or on the boundary."""
        lat, lon = point
        return bool(point_in_polygon(float(lat), float(lon), self._lat, self._lon))

    def __eq__(self, other):
        return isinstance(other, GeoFence) and self.vertices == other.vertices

    def __hash__(self):
        return hash(self.vertices)

    def __repr__(self):
        return f"GeoFence({len(self.vertices)} vertices)"


def _orient(a, b, c):
    v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    return 0 if v == 0 else math.copysign(1, v)


def _on_seg(a, b, c):
    """c lies within the bounding box of segment ab (used when collinear)."""
    return (
        min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
        and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])
    )


def _segments_cross(p1, p2, p3, p4) -> bool:
    """Proper or improper intersection of segments p1p2 and p3p4."""
    d1 = _orient(p3, p4, p1)
    d2 = _orient(p3, p4, p2)
    d3 = _orient(p1, p2, p3)
    d4 = _orient(p1, p2, p4)
    if d1 != d2 and d3 != d4:
        return True
    if d1 == 0 and _on_seg(p3, p4, p1):
        return True
    if d2 == 0 and _on_seg(p3, p4, p2):
        return True
    if d3 == 0 and _on_seg(p1, p2, p3):
        return True
    if d4 == 0 and _on_seg(p1, p2, p4):
        return True
    return False


def _self_intersects(verts) -> bool:
    """Brute-force O(n^2) simplicity test; fences are a handful of vertices."""
    n = len(verts)
    edges = [(verts[i], verts[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        a, b = edges[i]
        c = edges[(i + 1) % n][1]
        # adjacent edges share vertex b; reject only if they double back
        if _orient(a, b, c) == 0 and (_on_seg(a, b, c) or _on_seg(b, c, a)):
            return True
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue  # closing edge is adjacent to the first
            if _segments_cross(*edges[i], *edges[j]):
                return True
    return False


@dataclass(frozen=True, slots=True)
class CattleProfile:
    """Registry entry for one cow: identity, addresses and expectations."""

    cattle_id: str
    rfid_tag: int
    node_id: int
    expected_activity: dict[ActivityCode, int] = field(default_factory=dict)
    heartbeat_band: tuple[float, float] = DEFAULT_HEARTBEAT_BAND


@dataclass(frozen=True, slots=True)
class EnvSample:
    """One shed-environment reading, as quantised on the wire."""

    temperature: float  # degC, one decimal
    humidity: int  # %RH, integer
    audio_level: float  # dB, one decimal
    timestamp: float
    station_id: int

    def __post_init__(self):
        if not 0 <= self.humidity <= 100:
            raise ValueError(f"humidity {self.humidity} outside [0, 100]")


@dataclass(frozen=True, slots=True)
class RfidEvent:
    """One card read at an activity station."""

    rfid_tag: int
    station_id: int
    activity_code: ActivityCode
    timestamp: float

    def __post_init__(self):
        if not isinstance(self.activity_code, ActivityCode):
            object.__setattr__(self, "activity_code", ActivityCode(self.activity_code))


@dataclass(slots=True)
class Alert:
    """Lifecycle record produced by the rules engine.

    State is derived from the three timestamps, never stored: resolved wins
    over acknowledged wins over open.
    """

    alert_id: int
    rule: AlertRule
    subject: str
    severity: Severity
    opened_at: float
    detail: str
    acknowledged_at: float | None = None
    resolved_at: float | None = None

    @property
    def state(self) -> AlertState:
        if self.resolved_at is not None:
            return AlertState.RESOLVED
        if self.acknowledged_at is not None:
            return AlertState.ACKNOWLEDGED
        return AlertState.OPEN

    def to_payload(self) -> dict:
        return {
            "alert_id": self.alert_id,
            "rule": self.rule.value,
            "subject": self.subject,
            "severity": self.severity.value,
            "opened_at": self.opened_at,
            "acknowledged_at": self.acknowledged_at,
            "resolved_at": self.resolved_at,
            "detail": self.detail,
            "state": self.state.value,
        }


@dataclass(slots=True)
class ActivityCounter:
    """Running tally of the cow's current activity streak."""

    cattle_id: str
    activity_code: ActivityCode
    current_count: int
    session_started_at: float


@dataclass(frozen=True, slots=True)
class ProfileValidation:
    accepted: bool
    errors: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()


def validate_profile(profile: CattleProfile, registry) -> ProfileValidation:
    """Check a profile against its own invariants and the existing registry.

    ``registry`` is any iterable of already-accepted profiles.  An empty
    expected-activity map is accepted with a warning; duplicate tag/node or a
    degenerate heartbeat band reject.
    """
    errors = []
    warnings = []
    lo, hi = profile.heartbeat_band
    if not lo < hi:
        errors.append("InvalidHeartbeatBand")
    for code, count in profile.expected_activity.items():
        if not isinstance(code, ActivityCode):
            errors.append("UnknownActivityCode")
        if count < 0:
            errors.append("NegativeExpectedCount")
    if not profile.expected_activity:
        warnings.append("EmptyExpectedActivity")
    for other in registry:
        if other.cattle_id == profile.cattle_id:
            errors.append("DuplicateCattleId")
        if other.rfid_tag == profile.rfid_tag:
            errors.append("DuplicateTag")
        if other.node_id == profile.node_id:
            errors.append("DuplicateNode")
    if not 0 <= profile.rfid_tag <= 0xFFFFFFFF:
        errors.append("TagOutOfRange")
    if not 0 <= profile.node_id <= 0xFFFF:
        errors.append("NodeOutOfRange")
    return ProfileValidation(not errors, tuple(dict.fromkeys(errors)), tuple(warnings))
