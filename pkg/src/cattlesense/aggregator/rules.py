"""Welfare rule configuration and the pure evaluation helpers.

Band boundaries are inclusive: exactly 30 % humidity or 30.0 degC is in
range.  Environmental rules carry hysteresis: a rule opens only after
``persistence_count`` consecutive out-of-range samples and resolves only
after the same number back in range, which keeps sensor noise from
flapping alerts.  Set the count to 1 for strict instantaneous thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from cattlesense.model import ActivityCode, AlertRule, EnvSample, Severity

OPEN = "open"
RESOLVE = "resolve"

ENV_RULES = (
    AlertRule.HUMIDITY_OUT_OF_RANGE,
    AlertRule.TEMPERATURE_OUT_OF_RANGE,
    AlertRule.AUDIO_OUT_OF_RANGE,
)

_ENV_FIELD = {
    AlertRule.HUMIDITY_OUT_OF_RANGE: "humidity",
    AlertRule.TEMPERATURE_OUT_OF_RANGE: "temperature",
    AlertRule.AUDIO_OUT_OF_RANGE: "audio_level",
}


@dataclass(frozen=True, slots=True)
class RuleConfig:
    humidity_band: tuple[float, float] = (30.0, 80.0)
    temperature_band: tuple[float, float] = (10.0, 30.0)
    audio_band: tuple[float, float] = (35.0, 45.0)
    persistence_count: int = 3
    node_silence_timeout_s: float = 300.0  # 5 x the default 60 s uplink period
    day_rollover_offset_s: float = 0.0  # seconds east of UTC midnight
    default_heartbeat_band: tuple[float, float] = (48.0, 84.0)

    def __post_init__(self):
        for name in ("humidity_band", "temperature_band", "audio_band", "default_heartbeat_band"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} must have min < max, got ({lo}, {hi})")
        if self.persistence_count < 1:
            raise ValueError("persistence_count must be >= 1")
        if self.node_silence_timeout_s <= 0:
            raise ValueError("node_silence_timeout_s must be positive")

    def band_for(self, rule: AlertRule) -> tuple[float, float]:
        return {
            AlertRule.HUMIDITY_OUT_OF_RANGE: self.humidity_band,
            AlertRule.TEMPERATURE_OUT_OF_RANGE: self.temperature_band,
            AlertRule.AUDIO_OUT_OF_RANGE: self.audio_band,
        }[rule]

    def to_dict(self) -> dict:
        return {
            "humidity_band": list(self.humidity_band),
            "temperature_band": list(self.temperature_band),
            "audio_band": list(self.audio_band),
            "persistence_count": self.persistence_count,
            "node_silence_timeout_s": self.node_silence_timeout_s,
            "day_rollover_offset_s": self.day_rollover_offset_s,
            "default_heartbeat_band": list(self.default_heartbeat_band),
        }

    @staticmethod
    def from_dict(data: dict) -> "RuleConfig":
        kwargs = {}
        for key in (
            "humidity_band",
            "temperature_band",
            "audio_band",
            "default_heartbeat_band",
        ):
            if key in data:
                kwargs[key] = tuple(data[key])
        for key in ("persistence_count", "node_silence_timeout_s", "day_rollover_offset_s"):
            if key in data:
                kwargs[key] = data[key]
        unknown = set(data) - set(RuleConfig.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown rule config keys: {sorted(unknown)}")
        return RuleConfig(**kwargs)


def out_of_band(value: float, band: tuple[float, float]) -> bool:
    """Strictly below the minimum or strictly above the maximum."""
    return value < band[0] or value > band[1]


def evaluate_environment(
    sample: EnvSample, history: Sequence[EnvSample], cfg: RuleConfig
) -> dict[AlertRule, str | None]:
    """Hysteresis verdict per environmental rule given the newest sample.

    ``history`` holds the station's prior samples, oldest first.  For each
    rule the verdict is OPEN when the last ``persistence_count`` samples are
    all out of range, RESOLVE when they are all in range, and None when the
    streak is mixed or still too short.  The caller decides whether a verdict
    actually transitions an alert.
    """
    k = cfg.persistence_count
    window = (*history[-(k - 1) :], sample) if k > 1 else (sample,)
    verdicts: dict[AlertRule, str | None] = {}
    for rule in ENV_RULES:
        if len(window) < k:
            verdicts[rule] = None
            continue
        band = cfg.band_for(rule)
        flags = [out_of_band(getattr(s, _ENV_FIELD[rule]), band) for s in window]
        if all(flags):
            verdicts[rule] = OPEN
        elif not any(flags):
            verdicts[rule] = RESOLVE
        else:
            verdicts[rule] = None
    return verdicts


def activity_deficits(
    tallies: dict[ActivityCode, int], expected: dict[ActivityCode, int]
) -> list[tuple[ActivityCode, int, int, Severity]]:
    """(activity, observed, expected, severity) for every under-count.

    One short of the expectation is a warning; two or more short is critical.
    """
    out = []
    for activity in sorted(expected, key=lambda a: a.value):
        want = expected[activity]
        if want <= 0:
            continue
        got = tallies.get(activity, 0)
        if got < want:
            severity = Severity.WARNING if got == want - 1 else Severity.CRITICAL
            out.append((activity, got, want, severity))
    return out
