"""Operator entry point.

Subcommands: simulate, serve, replay, decode-frame, gen-scenario.  Exit
codes: 0 success, 1 invalid input (scenario errors, undecodable frame),
2 I/O or bind failure, 3 log corruption or verification divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import struct
import sys
import threading
import time
from collections import Counter

from cattlesense import frames
from cattlesense.aggregator.engine import Aggregator, ReplayDivergence, replay_records
from cattlesense.aggregator.eventlog import EventLog, LogCorruption, iter_log
from cattlesense.aggregator.rules import RuleConfig
from cattlesense.herdsim import ScenarioError, gen_scenario, load_scenario, run


def _load_rules(path: str | None, uplink_period_s: float | None = None) -> RuleConfig:
    """Rules file > CATTLESENSE_RULES env > defaults (+ scenario-driven timeout)."""
    path = path or os.environ.get("CATTLESENSE_RULES")
    data = {}
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    if uplink_period_s is not None and "node_silence_timeout_s" not in data:
        data["node_silence_timeout_s"] = 5.0 * uplink_period_s
    return RuleConfig.from_dict(data)


def _summary_lines(report, engine: Aggregator) -> list[str]:
    lines = list(report.summary_lines()) if report is not None else []
    by_rule = Counter(a.rule.value for a in engine.alerts_by_state("all"))
    lines.append(f"alerts_total: {len(engine.alerts)}")
    for rule, count in sorted(by_rule.items()):
        lines.append(f"alerts.{rule}: {count}")
    stats = engine.stats()
    lines.append(f"frames_accepted: {sum(stats['accepted'].values())}")
    rejected = stats["rejected"]
    lines.append(f"frames_rejected: {sum(rejected.values())}")
    for cause, count in sorted(rejected.items()):
        lines.append(f"rejected.{cause}: {count}")
    lines.append(f"events: {stats['events']}")
    return lines


def _summary_json(report, engine: Aggregator) -> dict:
    by_rule = Counter(a.rule.value for a in engine.alerts_by_state("all"))
    out = {
        "alerts_by_rule": dict(sorted(by_rule.items())),
        "stats": engine.stats(),
    }
    if report is not None:
        out["report"] = {
            "scenario": report.name,
            "seed": report.seed,
            "simulated_s": report.duration_s,
            "cows": report.cows,
            "uplinks_generated": report.uplinks_generated,
            "uplinks_delivered": report.uplinks_delivered,
            "uplinks_lost_random": report.uplinks_lost_random,
            "uplinks_lost_collision": report.uplinks_lost_collision,
            "uplinks_deferred": report.uplinks_deferred,
            "delivery_ratio": report.delivery_ratio,
            "station_frames": report.station_frames,
            "rfid_events": report.rfid_events,
            "wall_seconds": report.wall_seconds,
        }
    return out


def _register_world(engine: Aggregator, spec):
    t0 = spec.epoch
    engine.set_fence(spec.fence, t0)
    for st in spec.stations:
        engine.register_station(st.station_id, st.kind, st.activity_code, t0)
    for cow in spec.herd:
        engine.register_profile(cow.profile(), t0)


def cmd_simulate(args) -> int:
    try:
        with open(args.scenario, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        print(f"error: cannot read scenario {args.scenario}: {e}", file=sys.stderr)
        return 2
    try:
        spec = load_scenario(text)
    except ScenarioError as e:
        print(f"scenario {args.scenario} is invalid:", file=sys.stderr)
        for err in e.errors:
            print(f"  - {err}", file=sys.stderr)
        return 1
    if args.seed is not None:
        spec = type(spec)(**{**_spec_dict(spec), "seed": args.seed})
    try:
        rules = _load_rules(args.rules, spec.uplink_period_s)
    except (OSError, ValueError) as e:
        print(f"error: cannot load rules config: {e}", file=sys.stderr)
        return 2

    try:
        if os.path.exists(args.out):
            os.remove(args.out)
        log = EventLog(args.out)
    except OSError as e:
        print(f"error: cannot open event log {args.out}: {e}", file=sys.stderr)
        return 2

    speed = 0.0 if args.as_fast_as_possible else args.speed
    epoch = spec.epoch
    sim_clock = [0.0]

    pacer = None
    if speed > 0:
        wall_start = time.monotonic()

        def pacer(sim_t, _start=wall_start, _speed=speed):
            sim_clock[0] = sim_t
            target = _start + sim_t / _speed
            delay = target - time.monotonic()
            if delay > 0:
                time.sleep(delay)
    elif args.serve:

        def pacer(sim_t):
            sim_clock[0] = sim_t

    server = None
    if args.serve:
        from cattlesense.aggregator.api import create_app
        from cattlesense.aggregator.service import AggregatorService

        engine = Aggregator(rules)
        service = AggregatorService(engine, log)
        _register_world(engine, spec)
        app = create_app(service, clock=lambda: epoch + sim_clock[0])
        server = _start_server_thread(app, args.host, args.port)
        if server is None:
            return 2
        uplink_sink = lambda data, t: service.ingest_uplink(data, epoch + t)
        station_sink = lambda data, t: service.ingest_station(data, epoch + t)
    else:
        engine = Aggregator(rules, sink=log.append)
        _register_world(engine, spec)
        uplink_sink = lambda data, t: engine.ingest_uplink(data, epoch + t)
        station_sink = lambda data, t: engine.ingest_station(data, epoch + t)

    report = run(spec, uplink_sink, station_sink, pacer=pacer)
    engine.advance_time(epoch + spec.duration_s)
    log.close()

    if args.json:
        print(json.dumps(_summary_json(report, engine), indent=2, sort_keys=True))
    else:
        for line in _summary_lines(report, engine):
            print(line)
    if server is not None:
        print("simulation finished; serving API until interrupted (Ctrl-C)")
        try:
            while True:
                time.sleep(0.5)
        except KeyboardInterrupt:
            pass
        server.should_exit = True
    return 0


def _spec_dict(spec) -> dict:
    return {f: getattr(spec, f) for f in spec.__dataclass_fields__}


def _start_server_thread(app, host: str, port: int):
    import uvicorn

    config = uvicorn.Config(app, host=host, port=port, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 10.0
    while time.monotonic() < deadline:
        if server.started:
            return server
        if not thread.is_alive():
            break
        time.sleep(0.02)
    print(f"error: could not bind {host}:{port}", file=sys.stderr)
    return None


def cmd_serve(args) -> int:
    try:
        rules = _load_rules(args.rules)
    except (OSError, ValueError) as e:
        print(f"error: cannot load rules config: {e}", file=sys.stderr)
        return 2
    engine = None
    if os.path.exists(args.log) and os.path.getsize(args.log) > 0:
        try:
            engine = replay_records(iter_log(args.log))
        except LogCorruption as e:
            print(f"error: event log corrupt at line {e.line_no}: {e}", file=sys.stderr)
            return 3
        except ReplayDivergence as e:
            print(f"error: event log unusable at seq {e.seq}: {e}", file=sys.stderr)
            return 3
        print(f"warm start: replayed {engine.last_seq} events from {args.log}")
        if args.rules and engine.rules != rules:
            print(
                "note: rules come from the log's RulesConfigured record; "
                "--rules ignored on warm start",
                file=sys.stderr,
            )
    if engine is None:
        engine = Aggregator(rules)
    try:
        log = EventLog(args.log, fsync_policy=args.fsync)
    except OSError as e:
        print(f"error: cannot open event log {args.log}: {e}", file=sys.stderr)
        return 2

    from cattlesense.aggregator.api import create_app
    from cattlesense.aggregator.service import AggregatorService

    service = AggregatorService(engine, log)
    ui_dir = args.ui if args.ui and os.path.isdir(args.ui) else None
    if args.ui and ui_dir is None:
        print(f"warning: ui directory {args.ui} not found, serving API only", file=sys.stderr)
    app = create_app(service, ui_dir=ui_dir)

    # time-driven rules (node silence, day rollup) need the clock to move
    # even when no frames arrive
    stop_ticker = threading.Event()
    if args.tick_interval > 0:

        def tick():
            while not stop_ticker.wait(args.tick_interval):
                service.advance_time(time.time())

        threading.Thread(target=tick, daemon=True).start()

    import uvicorn

    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    except (OSError, SystemExit) as e:
        print(f"error: could not serve on {args.host}:{args.port}: {e}", file=sys.stderr)
        return 2
    finally:
        stop_ticker.set()
        service.close()
    return 0


def cmd_replay(args) -> int:
    if not os.path.exists(args.log):
        print(f"error: no such log {args.log}", file=sys.stderr)
        return 2
    try:
        engine = replay_records(iter_log(args.log), verify=args.verify)
    except LogCorruption as e:
        print(f"error: log corrupt at line {e.line_no}: {e}", file=sys.stderr)
        return 3
    except ReplayDivergence as e:
        print(f"verification failed at seq {e.seq}: {e}", file=sys.stderr)
        return 3
    if args.json:
        print(json.dumps(_summary_json(None, engine), indent=2, sort_keys=True))
    else:
        for line in _summary_lines(None, engine):
            print(line)
        if args.verify:
            print("verify: OK")
    return 0


_UPLINK_FIELDS = (
    ("node_id", "", None),
    ("seq", "", None),
    ("timestamp", "s UTC", None),
    ("latitude", "deg", 1e-7),
    ("longitude", "deg", 1e-7),
    ("altitude", "m", 0.1),
    ("bpm", "BPM", None),
    ("flags", "", None),
)


def cmd_decode_frame(args) -> int:
    try:
        data = bytes.fromhex(args.hex)
    except ValueError:
        print("error: argument is not valid hex", file=sys.stderr)
        return 1
    if len(data) == frames.UPLINK_LEN:
        head = struct.unpack(">BHBIiihBB", data[:-2])
        (found,) = struct.unpack(">H", data[-2:])
        print("family: node-uplink (22 bytes)")
        print(f"version: {head[0] >> 4}")
        print(f"frame_type: 0x{head[0] & 0xF:X}")
        for (name, unit, scale), value in zip(_UPLINK_FIELDS, head[1:]):
            shown = value * scale if scale else value
            suffix = f" {unit}" if unit else ""
            print(f"{name}: {shown}{suffix}")
        print(f"gps_valid: {bool(head[8] & frames.FLAG_GPS_VALID)}")
        print(f"low_battery: {bool(head[8] & frames.FLAG_LOW_BATTERY)}")
    elif len(data) == frames.STATION_LEN:
        kind = data[0] & 0xF
        (found,) = struct.unpack(">H", data[-2:])
        print(f"family: station-{'environment' if kind == frames.ENV_TYPE else 'rfid'} (15 bytes)")
        print(f"version: {data[0] >> 4}")
        if kind == frames.ENV_TYPE:
            _, sid, seq, ts, temp, hum, audio = struct.unpack(">BHBIhBh", data[:-2])
            print(f"station_id: {sid}")
            print(f"seq: {seq}")
            print(f"timestamp: {ts} s UTC")
            print(f"temperature: {temp / 10.0} degC")
            print(f"humidity: {hum} %")
            print(f"audio_level: {audio / 10.0} dB")
        else:
            _, sid, seq, ts, tag, code = struct.unpack(">BHBIIB", data[:-2])
            print(f"station_id: {sid}")
            print(f"seq: {seq}")
            print(f"timestamp: {ts} s UTC")
            print(f"rfid_tag: 0x{tag:08X}")
            print(f"activity_code: {code}")
    else:
        print(f"error: BadLength: {len(data)} bytes is neither 22 (uplink) nor 15 (station)",
              file=sys.stderr)
        return 1
    expected = frames.crc16(data[:-2])
    if expected == found:
        print("crc: OK")
        return 0
    print(f"crc: MISMATCH (expected 0x{expected:04X}, found 0x{found:04X})")
    return 1


def cmd_gen_scenario(args) -> int:
    doc = gen_scenario(
        cows=args.cows,
        days=args.days,
        seed=args.seed,
        uplink_period_s=args.uplink_period,
        loss_prob=args.loss_prob,
    )
    text = json.dumps(doc, indent=2)
    load_scenario(text)  # self-check: the generator must emit valid documents
    try:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    except OSError as e:
        print(f"error: cannot write {args.out}: {e}", file=sys.stderr)
        return 2
    print(f"wrote {args.out} ({args.cows} cows, {args.days} day(s))")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cattlesense", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario through the radio into the aggregator")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--speed", type=float, default=0.0,
                   help="simulated-to-wall time factor; 0 = as fast as possible")
    p.add_argument("--as-fast-as-possible", action="store_true")
    p.add_argument("--out", default="events.jsonl", help="event log path (overwritten)")
    p.add_argument("--serve", action="store_true", help="expose the API during the run")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--rules", default=None, help="rules config JSON")
    p.add_argument("--json", action="store_true", help="machine-readable summary")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("serve", help="serve the aggregator API, warm-starting from a log")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--log", default="events.jsonl")
    p.add_argument("--rules", default=None)
    p.add_argument("--fsync", choices=["per-event", "per-second"], default="per-second")
    p.add_argument("--ui", default=None, help="static dashboard directory to mount at /")
    p.add_argument("--tick-interval", type=float, default=10.0,
                   help="seconds between clock sweeps for time-driven rules; 0 disables")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="rebuild state from an event log")
    p.add_argument("--log", required=True)
    p.add_argument("--verify", action="store_true",
                   help="recompute all rule transitions and fail on divergence")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("decode-frame", help="dump a radio frame from hex")
    p.add_argument("--hex", required=True)
    p.set_defaults(func=cmd_decode_frame)

    p = sub.add_parser("gen-scenario", help="emit a synthetic herd scenario")
    p.add_argument("--cows", type=int, required=True)
    p.add_argument("--days", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--uplink-period", type=float, default=60.0)
    p.add_argument("--loss-prob", type=float, default=0.01)
    p.set_defaults(func=cmd_gen_scenario)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
