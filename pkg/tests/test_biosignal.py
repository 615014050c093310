import math

import numpy as np
import pytest

from cattlesense.biosignal import (
    AudioWindow,
    PulseWaveform,
    WaveformTooShort,
    WindowTooShort,
    audio_level_db,
    detect_peaks,
    estimate_bpm,
)

FS = 50.0


def triangular_train(beat_times, duration, fs=FS, width=0.15, amplitude=1.0):
    n = int(duration * fs)
    out = np.zeros(n)
    for t in beat_times:
        for i in range(max(0, int((t - width) * fs)), min(n, int((t + width) * fs) + 1)):
            out[i] = max(out[i], amplitude * (1.0 - abs(i / fs - t) / width))
    return out


def brute_force_local_maxima(samples, threshold):
    """Independent scan: every interior strict-left / non-strict-right maximum."""
    return [
        i
        for i in range(1, len(samples) - 1)
        if samples[i] > threshold and samples[i] > samples[i - 1] and samples[i] >= samples[i + 1]
    ]


class TestDetectPeaks:
    def test_constant_is_flat_signal(self):
        w = PulseWaveform(np.full(500, 0.3), FS)
        assert len(detect_peaks(w)) == 0

    def test_single_triangular_pulse(self):
        samples = np.zeros(500)
        k = 230
        for d in range(-5, 6):
            samples[k + d] = 1.0 - abs(d) / 6.0
        w = PulseWaveform(samples, FS)
        assert detect_peaks(w).tolist() == [k]

    def test_synthetic_noisy_train_against_brute_force(self):
        rng = np.random.default_rng(99)
        beats = [0.375 + 0.75 * k for k in range(13)]  # 13 pulses in 10 s
        samples = triangular_train(beats, 10.0) + rng.normal(0, 0.05, 500)
        w = PulseWaveform(samples, FS)
        got = detect_peaks(w).tolist()
        assert len(got) == 13
        expected_idx = [round(b * FS) for b in beats]
        for g, e in zip(got, expected_idx):
            assert abs(g - e) <= 2
        # each detected peak is a genuine local maximum per the oracle
        lo, hi = samples.min(), samples.max()
        oracle = brute_force_local_maxima(samples, lo + 0.5 * (hi - lo))
        assert set(got) <= set(oracle)

    def test_too_short_waveform(self):
        with pytest.raises(WaveformTooShort):
            detect_peaks(PulseWaveform(np.zeros(10), FS))


class TestEstimateBpm:
    def test_uniform_750ms_train_is_80(self):
        beats = [0.375 + 0.75 * k for k in range(13)]
        w = PulseWaveform(triangular_train(beats, 10.0), FS)
        est = estimate_bpm(w)
        assert est.bpm == 80.0
        assert est.beat_count == 13
        assert est.confidence > 0.9

    def test_uniform_1000ms_train_is_60(self):
        beats = [0.5 + 1.0 * k for k in range(10)]
        w = PulseWaveform(triangular_train(beats, 10.0), FS)
        assert estimate_bpm(w).bpm == 60.0

    def test_jittered_train_matches_schedule_oracle(self):
        rng = np.random.default_rng(42)
        t, beats = 0.3, []
        while t < 10.0:
            beats.append(t)
            t += rng.uniform(0.7, 0.8)
        w = PulseWaveform(triangular_train(beats, 10.0), FS)
        est = estimate_bpm(w)
        oracle = 60.0 / np.diff(beats).mean()
        assert est.bpm == pytest.approx(oracle, abs=2.0)

    def test_under_five_seconds_rejected(self):
        with pytest.raises(WaveformTooShort):
            estimate_bpm(PulseWaveform(np.zeros(200), FS))

    def test_insufficient_beats_yields_none(self):
        samples = np.zeros(500)
        samples[250] = 1.0
        assert estimate_bpm(PulseWaveform(samples, FS)) is None

    def test_amplitude_scaling_invariance(self):
        beats = [0.4 + 0.9 * k for k in range(10)]
        base = triangular_train(beats, 10.0)
        reference = estimate_bpm(PulseWaveform(base, FS))
        for k in (1e-3, 0.5, 3.0, 1e4):
            scaled = estimate_bpm(PulseWaveform(base * k, FS))
            assert scaled.bpm == reference.bpm
            assert scaled.beat_count == reference.beat_count

    def test_uniform_train_sweep_within_half_bpm(self):
        for period in np.arange(0.5, 1.51, 0.1):
            beats = []
            t = period / 2
            while t < 12.0:
                beats.append(t)
                t += period
            w = PulseWaveform(triangular_train(beats, 12.0, width=min(0.15, period / 4)), FS)
            est = estimate_bpm(w)
            assert abs(est.bpm - 60.0 / period) <= 0.5, period


class TestAudioLevel:
    def test_full_scale_square_wave(self):
        w = AudioWindow(np.resize([1.0, -1.0], 4800), 48000.0)
        assert audio_level_db(w, 94.0) == pytest.approx(94.0, abs=1e-9)

    def test_halving_amplitude_drops_six_db(self):
        rng = np.random.default_rng(1)
        samples = rng.uniform(-0.9, 0.9, 4800)
        w = AudioWindow(samples, 48000.0)
        half = AudioWindow(samples / 2, 48000.0)
        assert audio_level_db(w, 94.0) - audio_level_db(half, 94.0) == pytest.approx(
            6.0206, abs=0.05
        )

    def test_sine_amplitude_point_one(self):
        t = np.arange(4800) / 48000.0
        w = AudioWindow(0.1 * np.sin(2 * np.pi * 440 * t), 48000.0)
        expected = 20 * math.log10(0.1 / math.sqrt(2)) + 94.0
        assert expected == pytest.approx(71.0, abs=0.05)
        assert audio_level_db(w, 94.0) == pytest.approx(71.0, abs=0.1)

    def test_concatenation_invariance_is_exact(self):
        rng = np.random.default_rng(2)
        samples = rng.uniform(-1, 1, 4800)
        one = audio_level_db(AudioWindow(samples, 48000.0), 94.0)
        two = audio_level_db(AudioWindow(np.concatenate([samples, samples]), 48000.0), 94.0)
        assert one == two

    def test_scaling_by_k_shifts_by_20log10k(self):
        rng = np.random.default_rng(3)
        samples = rng.uniform(-0.5, 0.5, 4800)
        base = audio_level_db(AudioWindow(samples, 48000.0), 94.0)
        for k in (0.1, 0.25, 0.9, 1.9):
            shifted = audio_level_db(AudioWindow(samples * k, 48000.0), 94.0)
            assert shifted - base == pytest.approx(20 * math.log10(k), abs=0.01)

    def test_silence_floor(self):
        w = AudioWindow(np.zeros(4800), 48000.0)
        assert audio_level_db(w, 94.0) == -120.0 + 94.0

    def test_window_too_short(self):
        with pytest.raises(WindowTooShort):
            audio_level_db(AudioWindow(np.zeros(100), 48000.0), 94.0)

    def test_samples_outside_full_scale_rejected(self):
        with pytest.raises(ValueError):
            AudioWindow(np.array([0.0, 1.5]), 48000.0)
