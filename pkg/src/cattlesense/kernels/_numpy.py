"""Pure-numpy fallbacks for the hot kernels. Semantics match ``_njit.py``."""

import math

import numpy as np


def peak_scan(samples, threshold_fraction, min_gap, noise_floor):
    s = np.asarray(samples)
    lo = s.min()
    hi = s.max()
    if hi - lo < noise_floor:
        return np.empty(0, np.int64)
    threshold = lo + threshold_fraction * (hi - lo)
    interior = s[1:-1]
    cand = np.flatnonzero((interior > threshold) & (interior > s[:-2]) & (interior >= s[2:])) + 1
    out = []
    last = -min_gap
    for i in cand:  # candidate list is short; greedy pass matches the jit scan
        if i - last >= min_gap:
            out.append(int(i))
            last = i
    return np.asarray(out, np.int64)


def pulse_train(beat_times, n, rate, width):
    out = np.zeros(n, np.float64)
    for t in beat_times:
        lo = max(0, int(math.ceil((t - width) * rate)))
        hi = min(n - 1, int(math.floor((t + width) * rate)))
        if hi < lo:
            continue
        idx = np.arange(lo, hi + 1)
        a = 1.0 - np.abs(idx / rate - t) / width
        np.maximum(out[lo : hi + 1], a, out=out[lo : hi + 1])
    return out


def node_bpm(beat_times, n, rate, width, threshold_fraction, min_gap, noise_floor):
    # the fallback IS the composition; the jit twin fuses it for speed
    samples = pulse_train(beat_times, n, rate, width)
    idx = peak_scan(samples, threshold_fraction, min_gap, noise_floor)
    if len(idx) < 2:
        return 0.0
    acc = 0.0
    prev = int(idx[0])
    for i in idx[1:]:
        i = int(i)
        acc += (i - prev) / rate
        prev = i
    return 60.0 / (acc / (len(idx) - 1))


def point_in_polygon(px, py, vx, vy):
    x1 = vx
    y1 = vy
    x2 = np.roll(vx, -1)
    y2 = np.roll(vy, -1)
    cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
    on_edge = (
        (cross == 0.0)
        & (np.minimum(x1, x2) <= px)
        & (px <= np.maximum(x1, x2))
        & (np.minimum(y1, y2) <= py)
        & (py <= np.maximum(y1, y2))
    )
    if on_edge.any():
        return 1
    crossing = (y1 > py) != (y2 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        hit = crossing & (px < xint)
    return int(np.count_nonzero(hit) & 1)
