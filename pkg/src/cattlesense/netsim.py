"""Discrete-event model of the constrained radio uplink.

Covers what matters for a desk-scale herd: on-air time as a function of the
radio parameters, per-node duty-cycle budgeting over a trailing window,
same-channel collision (full overlap destroys both, no capture effect) and
independent random loss.  The short-range shed-station link is modeled as
lossless with a fixed small latency; the two links sit on different bands so
no cross-interference is modeled.

Everything is deterministic given (scenario, seed): channels and loss draws
come from one generator, consumed in submit order and finalize order
respectively, and ties resolve on (time, node_id).
"""

from __future__ import annotations

import csv
import math
from array import array
from collections import deque
from dataclasses import dataclass, field

import numpy as np

DUTY_WINDOW_S = 3600.0
STATION_LATENCY_S = 0.002

OUTCOME_DELIVERED = "Delivered"
OUTCOME_LOST_RANDOM = "LostRandom"
OUTCOME_LOST_COLLISION = "LostCollision"
OUTCOME_DEFERRED = "DeferredDutyCycle"


class UnknownNode(KeyError):
    pass


@dataclass(frozen=True, slots=True)
class RadioConfig:
    """LoRa PHY parameters plus the regulatory duty-cycle cap."""

    spreading_factor: int = 7
    bandwidth: float = 125_000.0
    coding_rate: int = 1  # denominator offset: 1 -> 4/5 ... 4 -> 4/8
    preamble_symbols: int = 8
    explicit_header: bool = True
    low_data_rate_optimize: bool | None = None  # None: auto, on when T_sym >= 16 ms
    duty_cycle_limit: float = 0.01
    channels: int = 8

    def __post_init__(self):
        if not 7 <= self.spreading_factor <= 12:
            raise ValueError(f"spreading factor {self.spreading_factor} outside [7, 12]")
        if self.bandwidth not in (125_000.0, 250_000.0, 500_000.0, 125_000, 250_000, 500_000):
            raise ValueError(f"bandwidth {self.bandwidth} not one of 125/250/500 kHz")
        if not 1 <= self.coding_rate <= 4:
            raise ValueError(f"coding rate offset {self.coding_rate} outside [1, 4]")
        if not 0 < self.duty_cycle_limit <= 1:
            raise ValueError("duty cycle limit must be in (0, 1]")
        if self.channels < 1 or self.preamble_symbols < 1:
            raise ValueError("channels and preamble_symbols must be positive")


def airtime(cfg: RadioConfig, payload_len: int) -> float:
    """On-air seconds of one transmission carrying ``payload_len`` bytes."""
    if payload_len < 1:
        raise ValueError("payload must be at least one byte")
    t_sym = (1 << cfg.spreading_factor) / cfg.bandwidth
    if cfg.low_data_rate_optimize is None:
        de = 1 if t_sym >= 0.016 else 0
    else:
        de = 1 if cfg.low_data_rate_optimize else 0
    ih = 0 if cfg.explicit_header else 1
    numerator = 8.0 * payload_len - 4.0 * cfg.spreading_factor + 28.0 + 16.0 - 20.0 * ih
    n_payload = 8 + max(
        math.ceil(numerator / (4.0 * (cfg.spreading_factor - 2 * de))) * (cfg.coding_rate + 4),
        0,
    )
    return (cfg.preamble_symbols + 4.25 + n_payload) * t_sym


@dataclass(slots=True)
class Transmission:
    node_id: int
    frame: bytes
    start_time: float
    airtime: float
    channel: int
    sf: int
    seq: int = 0
    outcome: str | None = None
    _collided: bool = False

    @property
    def end_time(self) -> float:
        return self.start_time + self.airtime


@dataclass(slots=True)
class Accepted:
    transmission: Transmission


@dataclass(slots=True)
class DeferredDutyCycle:
    earliest: float


@dataclass(slots=True)
class _NodeLedger:
    """Trailing-window duty-cycle accounting for one node."""

    window: deque = field(default_factory=deque)  # (start, airtime)
    window_sum: float = 0.0
    last_end: float = -math.inf
    last_airtime: float = 0.0
    starts: array = field(default_factory=lambda: array("d"))
    airtimes: array = field(default_factory=lambda: array("d"))

    def prune(self, t: float, window_s: float):
        # expiry is computed addition-side (start + W <= t) so that a deferral
        # to exactly start + W frees the entry despite float rounding
        w = self.window
        while w and w[0][0] + window_s <= t:
            _, a = w.popleft()
            self.window_sum -= a


def _overlap(a: Transmission, b: Transmission) -> bool:
    return a.start_time < b.end_time and b.start_time < a.end_time


class LoraMedium:
    """Single-gateway uplink medium.

    Usage: ``register_node`` everything up front, ``submit`` in nondecreasing
    time order, call ``advance(t)`` (or rely on submit doing it) so finished
    transmissions resolve, and ``finish()`` at the end of the run.  Delivered
    frames reach ``sink(frame_bytes, delivery_time, node_id)`` in delivery
    order.
    """

    def __init__(self, cfg: RadioConfig, loss_prob: float, rng: np.random.Generator,
                 sink=None, keep_outcome_log: bool = True):
        if not 0.0 <= loss_prob <= 1.0:
            raise ValueError("loss_prob must be in [0, 1]")
        self.cfg = cfg
        self.loss_prob = loss_prob
        self.rng = rng
        self.sink = sink
        self.keep_outcome_log = keep_outcome_log
        self.outcome_log: list[tuple] = []
        self.counts = {
            OUTCOME_DELIVERED: 0,
            OUTCOME_LOST_RANDOM: 0,
            OUTCOME_LOST_COLLISION: 0,
            OUTCOME_DEFERRED: 0,
        }
        self.node_counts: dict[int, dict[str, int]] = {}
        self._ledgers: dict[int, _NodeLedger] = {}
        self._pending: list[Transmission] = []  # kept sorted by arrival; short
        self._next_end = math.inf
        self._by_channel: dict[int, list[Transmission]] = {}
        self._airtime_cache: dict[int, float] = {}
        self._channel_buf = np.empty(0, dtype=np.int64)
        self._channel_pos = 0
        self._loss_buf = np.empty(0, dtype=np.float64)
        self._loss_pos = 0

    def register_node(self, node_id: int):
        self._ledgers.setdefault(node_id, _NodeLedger())
        self.node_counts.setdefault(
            node_id,
            {
                OUTCOME_DELIVERED: 0,
                OUTCOME_LOST_RANDOM: 0,
                OUTCOME_LOST_COLLISION: 0,
                OUTCOME_DEFERRED: 0,
            },
        )

    def _airtime(self, n: int) -> float:
        a = self._airtime_cache.get(n)
        if a is None:
            a = airtime(self.cfg, n)
            self._airtime_cache[n] = a
        return a

    def _draw_channel(self) -> int:
        # block draws: one Generator call per 1024 transmissions
        if self._channel_pos >= len(self._channel_buf):
            self._channel_buf = self.rng.integers(0, self.cfg.channels, 1024)
            self._channel_pos = 0
        c = int(self._channel_buf[self._channel_pos])
        self._channel_pos += 1
        return c

    def _draw_loss(self) -> float:
        if self._loss_pos >= len(self._loss_buf):
            self._loss_buf = self.rng.random(1024)
            self._loss_pos = 0
        u = float(self._loss_buf[self._loss_pos])
        self._loss_pos += 1
        return u

    def earliest_allowed(self, node_id: int, t: float, payload_len: int) -> float:
        """First compliant start time at or after ``t`` for this node."""
        led = self._ledgers.get(node_id)
        if led is None:
            raise UnknownNode(node_id)
        a = self._airtime(payload_len)
        limit = self.cfg.duty_cycle_limit
        # off-period model: silence of airtime*(1/limit - 1) after each send
        earliest = led.last_end + led.last_airtime * (1.0 / limit - 1.0)
        # trailing-window budget: enough old sends must have aged out
        led.prune(t, DUTY_WINDOW_S)
        budget = limit * DUTY_WINDOW_S
        if led.window_sum + a > budget:
            acc = led.window_sum
            for start, air in led.window:
                acc -= air
                if acc + a <= budget:
                    earliest = max(earliest, start + DUTY_WINDOW_S)
                    break
            else:  # cannot fit even after the whole window empties
                earliest = max(earliest, led.window[-1][0] + DUTY_WINDOW_S)
        return earliest if earliest > t else t

    def submit(self, node_id: int, frame: bytes, t: float, seq: int = 0):
        """Offer a frame at simulation time ``t``.

        Returns :class:`Accepted` with the scheduled transmission, or
        :class:`DeferredDutyCycle` carrying the earliest compliant start; a
        deferral is terminal for this frame and is logged as such.
        """
        self.advance(t)
        earliest = self.earliest_allowed(node_id, t, len(frame))
        led = self._ledgers[node_id]
        a = self._airtime(len(frame))
        if earliest > t:
            self._log(t, node_id, seq, -1, a, OUTCOME_DEFERRED)
            return DeferredDutyCycle(earliest)
        channel = self._draw_channel()
        tx = Transmission(
            node_id=node_id,
            frame=frame,
            start_time=t,
            airtime=a,
            channel=channel,
            sf=self.cfg.spreading_factor,
            seq=seq,
        )
        led.window.append((t, a))
        led.window_sum += a
        led.last_end = t + a
        led.last_airtime = a
        led.starts.append(t)
        led.airtimes.append(a)
        peers = self._by_channel.setdefault(channel, [])
        for other in peers:
            if other.sf == tx.sf and _overlap(other, tx):
                other._collided = True
                tx._collided = True
        peers.append(tx)
        self._pending.append(tx)
        end = t + a
        if end < self._next_end:
            self._next_end = end
        return Accepted(tx)

    def advance(self, t: float):
        """Resolve every transmission that finished at or before ``t``."""
        if t < self._next_end:
            return
        pending = self._pending
        due = [tx for tx in pending if tx.end_time <= t]
        due.sort(key=lambda tx: (tx.end_time, tx.node_id))
        remaining = [tx for tx in pending if tx.end_time > t]
        self._pending = remaining
        self._next_end = min((tx.end_time for tx in remaining), default=math.inf)
        for tx in due:
            self._by_channel[tx.channel].remove(tx)
            self._finalize(tx)

    def finish(self):
        self.advance(math.inf)

    def _finalize(self, tx: Transmission):
        assert tx.outcome is None
        if tx._collided:
            tx.outcome = OUTCOME_LOST_COLLISION
        elif self.loss_prob > 0.0 and self._draw_loss() < self.loss_prob:
            tx.outcome = OUTCOME_LOST_RANDOM
        else:
            tx.outcome = OUTCOME_DELIVERED
        self._log(tx.start_time, tx.node_id, tx.seq, tx.channel, tx.airtime, tx.outcome)
        if tx.outcome == OUTCOME_DELIVERED and self.sink is not None:
            self.sink(tx.frame, tx.end_time, tx.node_id)

    def _log(self, t, node_id, seq, channel, air, outcome):
        self.counts[outcome] += 1
        self.node_counts[node_id][outcome] += 1
        if self.keep_outcome_log:
            self.outcome_log.append(
                (t, node_id, seq, channel, self.cfg.spreading_factor, air, outcome)
            )

    def duty_history(self, node_id: int) -> tuple:
        """(starts, airtimes) arrays of every accepted transmission of a node."""
        led = self._ledgers.get(node_id)
        if led is None:
            raise UnknownNode(node_id)
        return led.starts, led.airtimes

    def export_csv(self, fileobj):
        writer = csv.writer(fileobj)
        writer.writerow(["time", "node_id", "seq", "channel", "sf", "airtime_s", "outcome"])
        for row in self.outcome_log:
            writer.writerow(row)


def resolve(transmissions, loss_prob: float, rng: np.random.Generator, sink=None):
    """Batch outcome assignment for already-scheduled transmissions.

    Overlapping pairs on the same (channel, sf) both become collisions;
    survivors independently lose with ``loss_prob``.  Loss draws happen in
    (end_time, node_id) order so a rerun with the same rng stream reproduces
    the outcomes exactly.
    """
    txs = sorted(transmissions, key=lambda tx: (tx.start_time, tx.node_id))
    for i, tx in enumerate(txs):
        for other in txs[i + 1 :]:
            if other.start_time >= tx.end_time:
                break
            if other.channel == tx.channel and other.sf == tx.sf:
                tx._collided = True
                other._collided = True
    for tx in sorted(txs, key=lambda tx: (tx.end_time, tx.node_id)):
        assert tx.outcome is None
        if tx._collided:
            tx.outcome = OUTCOME_LOST_COLLISION
        elif loss_prob > 0.0 and rng.random() < loss_prob:
            tx.outcome = OUTCOME_LOST_RANDOM
        else:
            tx.outcome = OUTCOME_DELIVERED
        if tx.outcome == OUTCOME_DELIVERED and sink is not None:
            sink(tx.frame, tx.end_time, tx.node_id)
    return txs


class StationLink:
    """Lossless short-range link from shed stations, fixed 2 ms latency."""

    def __init__(self, sink, latency_s: float = STATION_LATENCY_S):
        self.sink = sink
        self.latency_s = latency_s
        self.sent = 0

    def send(self, frame: bytes, t: float, station_id: int):
        self.sent += 1
        self.sink(frame, t + self.latency_s, station_id)
