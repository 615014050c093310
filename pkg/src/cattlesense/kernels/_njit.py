"""Numba implementations of the hot kernels.

Every function here has a twin in ``_numpy.py`` that must produce the same
output bit for bit; the equivalence suite compares them directly.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def peak_scan(samples, threshold_fraction, min_gap, noise_floor):
    """Indices of local maxima above ``min + threshold_fraction * (max - min)``.

    A maximum is a sample greater than its left neighbour and not less than
    its right one (first sample of a plateau wins).  Accepted peaks are at
    least ``min_gap`` samples apart, scanning left to right; endpoints are
    never peaks.  A flat signal (range below ``noise_floor``) yields no
    peaks.
    """
    n = samples.shape[0]
    lo = samples[0]
    hi = samples[0]
    for i in range(1, n):
        v = samples[i]
        if v < lo:
            lo = v
        elif v > hi:
            hi = v
    out = np.empty(n, np.int64)
    if hi - lo < noise_floor:
        return out[:0]
    threshold = lo + threshold_fraction * (hi - lo)
    m = 0
    last = -min_gap
    for i in range(1, n - 1):
        v = samples[i]
        if v > threshold and v > samples[i - 1] and v >= samples[i + 1]:
            if i - last >= min_gap:
                out[m] = i
                m += 1
                last = i
    return out[:m]


@njit(cache=True)
def pulse_train(beat_times, n, rate, width):
    """Sample unit-height triangular pulses centred on ``beat_times``.

    Returns ``n`` samples at ``rate`` Hz starting at t=0.  Overlapping pulses
    combine by maximum, not by sum, so the result is order-independent.
    """
    out = np.zeros(n, np.float64)
    for j in range(beat_times.shape[0]):
        t = beat_times[j]
        lo = int(np.ceil((t - width) * rate))
        hi = int(np.floor((t + width) * rate))
        if lo < 0:
            lo = 0
        if hi > n - 1:
            hi = n - 1
        for i in range(lo, hi + 1):
            a = 1.0 - abs(i / rate - t) / width
            if a > out[i]:
                out[i] = a
    return out


@njit(cache=True)
def node_bpm(beat_times, n, rate, width, threshold_fraction, min_gap, noise_floor):
    """Fused collar-node estimate: pulse_train + peak_scan + mean-IBI in one call.

    Returns the unrounded BPM, or 0.0 below two beats.  Operation order
    mirrors the composed implementations exactly so results agree bit for
    bit; the equivalence suite enforces that.
    """
    out = np.zeros(n, np.float64)
    for j in range(beat_times.shape[0]):
        t = beat_times[j]
        lo_i = int(np.ceil((t - width) * rate))
        hi_i = int(np.floor((t + width) * rate))
        if lo_i < 0:
            lo_i = 0
        if hi_i > n - 1:
            hi_i = n - 1
        for i in range(lo_i, hi_i + 1):
            a = 1.0 - abs(i / rate - t) / width
            if a > out[i]:
                out[i] = a
    lo = out[0]
    hi = out[0]
    for i in range(1, n):
        v = out[i]
        if v < lo:
            lo = v
        elif v > hi:
            hi = v
    if hi - lo < noise_floor:
        return 0.0
    threshold = lo + threshold_fraction * (hi - lo)
    first = -1
    prev = -1
    count = 0
    acc = 0.0
    last = -min_gap
    for i in range(1, n - 1):
        v = out[i]
        if v > threshold and v > out[i - 1] and v >= out[i + 1]:
            if i - last >= min_gap:
                last = i
                count += 1
                if first < 0:
                    first = i
                else:
                    acc += (i - prev) / rate
                prev = i
    if count < 2:
        return 0.0
    return 60.0 / (acc / (count - 1))


@njit(cache=True)
def point_in_polygon(px, py, vx, vy):
    """1 if (px, py) is inside or exactly on the boundary of the polygon.

    Ray casting on the flat coordinate plane; a point on an edge or vertex
    counts as inside.
    """
    n = vx.shape[0]
    inside = False
    j = n - 1
    for i in range(n):
        x1 = vx[j]
        y1 = vy[j]
        x2 = vx[i]
        y2 = vy[i]
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        if cross == 0.0:
            if min(x1, x2) <= px and px <= max(x1, x2) and min(y1, y2) <= py and py <= max(y1, y2):
                return 1
        if (y1 > py) != (y2 > py):
            xint = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            if px < xint:
                inside = not inside
        j = i
    return 1 if inside else 0
