"""Append-only JSONL event log: the system's single source of truth.

One JSON object per line with exactly the record envelope fields (seq, ts,
kind, payload), canonically serialized (sorted keys, no whitespace) so two
runs of the same scenario produce byte-identical files.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass

FSYNC_PER_EVENT = "per-event"
FSYNC_PER_SECOND = "per-second"


class LogCorruption(Exception):
    """Replay stopped at an unreadable or out-of-sequence line."""

    def __init__(self, message: str, line_no: int, seq: int | None = None):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no
        self.seq = seq


class SequenceGap(LogCorruption):
    pass


class CorruptRecord(LogCorruption):
    pass


def dumps_record(record) -> str:
    return json.dumps(
        {"seq": record.seq, "ts": record.ts, "kind": record.kind, "payload": record.payload},
        sort_keys=True,
        separators=(",", ":"),
        allow_nan=False,
    )


class EventLog:
    """Writer half. fsync policy: per-event for durability, per-second for speed."""

    def __init__(self, path, fsync_policy: str = FSYNC_PER_SECOND):
        if fsync_policy not in (FSYNC_PER_EVENT, FSYNC_PER_SECOND):
            raise ValueError(f"unknown fsync policy {fsync_policy!r}")
        self.path = str(path)
        self.fsync_policy = fsync_policy
        self._fh = open(self.path, "a", encoding="utf-8", buffering=1 << 16)
        self._last_sync = 0.0

    def append(self, record):
        if record.kind == "FrameAccepted":
            # hand-rolled canonical form of the hottest record kind; kept
            # byte-identical to dumps_record (asserted in tests)
            p = record.payload
            line = '{"kind":"FrameAccepted","payload":{"hex":"%s","src":"%s"},"seq":%d,"ts":%r}' % (
                p["hex"],
                p["src"],
                record.seq,
                record.ts,
            )
            self._fh.write(line)
        else:
            self._fh.write(dumps_record(record))
        self._fh.write("\n")
        if self.fsync_policy == FSYNC_PER_EVENT:
            self._fh.flush()
            os.fsync(self._fh.fileno())
        else:
            now = time.monotonic()
            if now - self._last_sync >= 1.0:
                self._fh.flush()
                os.fsync(self._fh.fileno())
                self._last_sync = now

    def flush(self):
        if not self._fh.closed:
            self._fh.flush()

    def close(self):
        if not self._fh.closed:
            self._fh.flush()
            os.fsync(self._fh.fileno())
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def iter_log(path, start_seq: int = 1):
    """Yield EventRecord objects, enforcing a gap-free sequence.

    Raises CorruptRecord / SequenceGap naming the offending line, so callers
    can stop with a precise diagnostic.
    """
    from cattlesense.aggregator.engine import EventRecord

    expected = start_seq
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                record = EventRecord(
                    seq=obj["seq"], ts=obj["ts"], kind=obj["kind"], payload=obj["payload"]
                )
            except (ValueError, KeyError, TypeError) as e:
                raise CorruptRecord(f"unreadable record ({e})", line_no) from None
            if record.seq != expected:
                raise SequenceGap(
                    f"sequence jumped to {record.seq}, expected {expected}",
                    line_no,
                    seq=record.seq,
                )
            expected += 1
            yield record


def last_seq(path) -> int:
    """Highest sequence number in a well-formed log, 0 if empty or missing."""
    if not os.path.exists(path):
        return 0
    n = 0
    for record in iter_log(path):
        n = record.seq
    return n


@dataclass(slots=True)
class FanoutSink:
    """Compose several record consumers into one engine sink."""

    sinks: list

    def __call__(self, record):
        for sink in self.sinks:
            sink(record)
