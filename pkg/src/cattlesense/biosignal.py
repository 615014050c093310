"""Waveform-to-scalar conversions for the collar sensors.

A pulse waveform (blood-volume signal) becomes a BPM estimate via
threshold-crossing peak detection with a refractory period; an audio window
becomes a dB level relative to digital full scale plus a calibration offset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from cattlesense.kernels import peak_scan
from cattlesense.model import NOISE_FLOOR

DEFAULT_THRESHOLD_FRACTION = 0.5
DEFAULT_REFRACTORY_MS = 400.0  # 150 BPM ceiling, far above bovine physiology
MIN_BPM_WINDOW_S = 5.0
MIN_AUDIO_WINDOW_S = 0.1
SILENCE_FLOOR_DB = -120.0


class WaveformTooShort(ValueError):
    pass


class WindowTooShort(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class PulseWaveform:
    """Raw pulse-sensor capture in ADC-like units."""

    samples: np.ndarray
    sample_rate: float
    cattle_id: str | None = None
    capture_start: float = 0.0

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(
            self, "samples", np.ascontiguousarray(self.samples, dtype=np.float64)
        )

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True, slots=True)
class BpmEstimate:
    bpm: float  # one decimal
    beat_count: int
    confidence: float  # 1 - CV of inter-beat intervals, clipped to [0, 1]


@dataclass(frozen=True, slots=True)
class AudioWindow:
    """Microphone capture normalized to [-1, 1] full scale."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        object.__setattr__(
            self, "samples", np.ascontiguousarray(self.samples, dtype=np.float64)
        )
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if len(self.samples) and np.abs(self.samples).max() > 1.0:
            raise ValueError("audio samples must lie in [-1, 1]")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def detect_peaks(
    waveform: PulseWaveform,
    threshold_fraction: float = DEFAULT_THRESHOLD_FRACTION,
    refractory_ms: float = DEFAULT_REFRACTORY_MS,
) -> np.ndarray:
    """Ascending indices of pulse peaks.

    A peak is a local maximum above ``min + threshold_fraction * (max - min)``;
    peaks closer than the refractory period to an accepted one are dropped,
    scanning left to right.  A flat signal (range below the noise floor)
    yields an empty result rather than an error.
    """
    samples = waveform.samples
    refractory_samples = max(1, round(refractory_ms / 1000.0 * waveform.sample_rate))
    if len(samples) < 2 * refractory_samples:
        raise WaveformTooShort(
            f"{len(samples)} samples is under two refractory periods "
            f"({2 * refractory_samples})"
        )
    return peak_scan(samples, threshold_fraction, refractory_samples, NOISE_FLOOR)


def estimate_bpm(waveform: PulseWaveform) -> BpmEstimate | None:
    """Beats per minute from mean inter-beat interval, or None below 2 beats.

    Confidence is one minus the coefficient of variation of the intervals,
    so a metronomic pulse scores 1.0 and an erratic one falls toward 0.
    """
    if waveform.duration < MIN_BPM_WINDOW_S:
        raise WaveformTooShort(
            f"need at least {MIN_BPM_WINDOW_S:.0f} s of signal, got {waveform.duration:.2f} s"
        )
    peaks = detect_peaks(waveform)
    n = len(peaks)
    if n < 2:
        return None
    rate = waveform.sample_rate
    idx = peaks.tolist()  # a handful of beats; plain arithmetic beats ufuncs here
    intervals = [(b - a) / rate for a, b in zip(idx, idx[1:])]
    mean_ibi = sum(intervals) / len(intervals)
    bpm = 60.0 / mean_ibi
    if len(intervals) > 1:
        var = sum((x - mean_ibi) ** 2 for x in intervals) / len(intervals)
        cv = math.sqrt(var) / mean_ibi
    else:
        cv = 0.0
    return BpmEstimate(bpm=round(bpm, 1), beat_count=n, confidence=1.0 - min(1.0, cv))


def audio_level_db(window: AudioWindow, calibration_offset: float = 94.0) -> float:
    """Level in dB: ``20*log10(rms) + calibration_offset``.

    RMS is relative to digital full scale (1.0); a silent window maps to the
    -120 dBFS floor.  The reported value is unrounded; wire encodings
    quantize to one decimal.
    """
    if window.duration < MIN_AUDIO_WINDOW_S:
        raise WindowTooShort(
            f"need at least {MIN_AUDIO_WINDOW_S * 1000:.0f} ms, got {window.duration * 1000:.1f} ms"
        )
    rms = math.sqrt(float(np.mean(np.square(window.samples))))
    if rms < NOISE_FLOOR:
        return SILENCE_FLOOR_DB + calibration_offset
    return 20.0 * math.log10(rms) + calibration_offset
