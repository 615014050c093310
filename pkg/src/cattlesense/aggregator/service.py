"""Thread-safe shell around the engine plus the event fan-out for SSE.

Ingestion may arrive from several producers; every state mutation runs under
one lock, giving the total event order the engine's contract requires.
Reads take the same lock and therefore observe a consistent snapshot no
older than the last committed event.
"""

from __future__ import annotations

import queue
import threading
import time
from datetime import datetime, timezone

from cattlesense.aggregator.engine import Aggregator, EventRecord
from cattlesense.aggregator.eventlog import EventLog


def iso_utc(ts: float | None) -> str | None:
    if ts is None:
        return None
    return (
        datetime.fromtimestamp(ts, tz=timezone.utc).isoformat(timespec="milliseconds").replace(
            "+00:00", "Z"
        )
    )


def parse_when(value) -> float:
    """Accept epoch seconds or ISO-8601; None means the wall clock."""
    if value is None:
        return time.time()
    if isinstance(value, (int, float)):
        return float(value)
    text = str(value).replace("Z", "+00:00")
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


class EventHub:
    """Fan one record stream out to any number of subscriber queues."""

    def __init__(self, max_queue: int = 10_000):
        self._subscribers: set[queue.Queue] = set()
        self._lock = threading.Lock()
        self._max_queue = max_queue

    def publish(self, record: EventRecord):
        with self._lock:
            targets = list(self._subscribers)
        for q in targets:
            try:
                q.put_nowait(record)
            except queue.Full:
                pass  # slow consumer resynchronizes via snapshots

    def subscribe(self) -> queue.Queue:
        q = queue.Queue(self._max_queue)
        with self._lock:
            self._subscribers.add(q)
        return q

    def unsubscribe(self, q: queue.Queue):
        with self._lock:
            self._subscribers.discard(q)


class AggregatorService:
    """Single-writer facade: lock-serialized commands, snapshot reads."""

    def __init__(self, aggregator: Aggregator, log: EventLog | None = None):
        self.lock = threading.RLock()
        self.engine = aggregator
        self.log = log
        self.hub = EventHub()
        aggregator.set_sink(self._commit)

    def _commit(self, record: EventRecord):
        if self.log is not None:
            self.log.append(record)
        self.hub.publish(record)

    # -- commands ---------------------------------------------------------

    def ingest_uplink(self, data: bytes, t: float):
        with self.lock:
            return self.engine.ingest_uplink(data, t)

    def ingest_station(self, data: bytes, t: float):
        with self.lock:
            return self.engine.ingest_station(data, t)

    def register_profile(self, profile, t: float):
        with self.lock:
            return self.engine.register_profile(profile, t)

    def register_station(self, station_id, kind, activity_code, t: float):
        with self.lock:
            return self.engine.register_station(station_id, kind, activity_code, t)

    def set_fence(self, fence, t: float):
        with self.lock:
            return self.engine.set_fence(fence, t)

    def acknowledge_alert(self, alert_id: int, actor: str, t: float):
        with self.lock:
            return self.engine.acknowledge_alert(alert_id, actor, t)

    def advance_time(self, t: float):
        with self.lock:
            return self.engine.advance_time(t)

    # -- reads ------------------------------------------------------------

    def snapshot(self) -> dict:
        with self.lock:
            return self.engine.snapshot()

    def stats(self) -> dict:
        with self.lock:
            return self.engine.stats()

    def alerts(self, which: str = "all"):
        with self.lock:
            return [a.to_payload() for a in self.engine.alerts_by_state(which)]

    def rules(self) -> dict:
        return self.engine.rules.to_dict()

    def close(self):
        if self.log is not None:
            self.log.close()
