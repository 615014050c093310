import json

import pytest

from cattlesense import frames
from cattlesense.aggregator.engine import (
    Aggregator,
    AlertNotFound,
    AlertNotOpen,
    EventRecord,
    RegistrationRejected,
    ReplayDivergence,
    replay_records,
)
from cattlesense.aggregator.eventlog import (
    CorruptRecord,
    EventLog,
    SequenceGap,
    dumps_record,
    iter_log,
)
from cattlesense.aggregator.rules import OPEN, RESOLVE, RuleConfig, evaluate_environment
from cattlesense.model import (
    ActivityCode,
    AlertRule,
    AlertState,
    CattleProfile,
    EnvSample,
    GeoFence,
    Severity,
)

T0 = 1_704_067_200.0  # 2024-01-01T00:00:00Z
FENCE = GeoFence([(47.0, 8.0), (47.0, 8.02), (47.015, 8.02), (47.015, 8.0)])


def profile(cid="cow-1", tag=100, node=1, expected=None):
    return CattleProfile(
        cattle_id=cid,
        rfid_tag=tag,
        node_id=node,
        expected_activity={ActivityCode.MILKING: 3} if expected is None else expected,
        heartbeat_band=(48.0, 84.0),
    )


def fresh(rules=None, sink=None):
    agg = Aggregator(rules or RuleConfig(), sink=sink)
    agg.set_fence(FENCE, T0)
    agg.register_station(1, "environment", None, T0)
    agg.register_station(2, "rfid", ActivityCode.MILKING, T0)
    agg.register_profile(profile(), T0)
    return agg


def uplink_bytes(t, lat=47.0075, lon=8.01, bpm=66, node=1, seq=0):
    frame = frames.NodeUplinkFrame.from_physical(node, seq, t, lat, lon, 10.0, bpm)
    return frames.encode_uplink(frame)


def env_bytes(t, humidity=55, temperature=22.0, audio=40.0, station=1, seq=0):
    return frames.encode_station(
        frames.StationFrame.environment(station, seq, t, temperature, humidity, audio)
    )


def rfid_bytes(t, tag=100, station=2, activity=ActivityCode.MILKING, seq=0):
    return frames.encode_station(frames.StationFrame.rfid(station, seq, t, tag, int(activity)))


class TestIngestUplink:
    def test_accepted_in_fence_in_band_no_alert(self):
        agg = fresh()
        result = agg.ingest_uplink(uplink_bytes(T0 + 60), T0 + 60)
        assert result.accepted
        assert agg.alerts == {}
        assert agg.cows["cow-1"].latest_bpm == 66
        assert agg.cows["cow-1"].in_fence is True

    def test_fix_outside_fence_opens_breach(self):
        agg = fresh()
        agg.ingest_uplink(uplink_bytes(T0 + 60, lat=48.5), T0 + 60)
        alerts = agg.alerts_by_state("open")
        assert len(alerts) == 1
        assert alerts[0].rule is AlertRule.GEOFENCE_BREACH
        assert alerts[0].severity is Severity.CRITICAL
        assert alerts[0].subject == "cow-1"

    def test_breach_resolves_on_return(self):
        agg = fresh()
        agg.ingest_uplink(uplink_bytes(T0 + 60, lat=48.5), T0 + 60)
        agg.ingest_uplink(uplink_bytes(T0 + 120), T0 + 120)
        assert agg.alerts_by_state("open") == []
        assert agg.alerts[1].state is AlertState.RESOLVED

    def test_corrupted_crc_rejected_and_counted(self):
        agg = fresh()
        data = bytearray(uplink_bytes(T0 + 60))
        data[-1] ^= 0xFF
        result = agg.ingest_uplink(bytes(data), T0 + 60)
        assert not result.accepted
        assert result.cause == "CrcMismatch"
        assert agg.stats()["rejected"]["CrcMismatch"] == 1

    def test_unknown_node_rejected(self):
        agg = fresh()
        result = agg.ingest_uplink(uplink_bytes(T0 + 60, node=99), T0 + 60)
        assert result.cause == "UnknownNode"

    def test_heartbeat_band_hysteresis(self):
        agg = fresh(RuleConfig(persistence_count=3))
        for i in range(2):
            agg.ingest_uplink(uplink_bytes(T0 + 60 * (i + 1), bpm=120, seq=i), T0 + 60 * (i + 1))
        assert agg.alerts_by_state("open") == []
        agg.ingest_uplink(uplink_bytes(T0 + 180, bpm=120, seq=2), T0 + 180)
        open_alerts = agg.alerts_by_state("open")
        assert [a.rule for a in open_alerts] == [AlertRule.HEARTBEAT_OUT_OF_BAND]
        for i in range(3):
            agg.ingest_uplink(uplink_bytes(T0 + 240 + 60 * i, bpm=70, seq=3 + i), T0 + 240 + 60 * i)
        assert agg.alerts_by_state("open") == []

    def test_bpm_zero_is_no_estimate(self):
        agg = fresh()
        agg.ingest_uplink(uplink_bytes(T0 + 60, bpm=0), T0 + 60)
        assert agg.cows["cow-1"].latest_bpm is None


class TestIngestStation:
    def test_env_updates_state_and_ring(self):
        agg = fresh()
        agg.ingest_station(env_bytes(T0 + 30), T0 + 30)
        st = agg.stations[1]
        assert st.latest.humidity == 55
        assert len(st.ring) == 1

    def test_high_humidity_persistence_open(self):
        agg = fresh(RuleConfig(persistence_count=3))
        for i in range(2):
            agg.ingest_station(env_bytes(T0 + 30 * (i + 1), humidity=85, seq=i), T0 + 30 * (i + 1))
        assert agg.alerts_by_state("open") == []
        agg.ingest_station(env_bytes(T0 + 90, humidity=85, seq=2), T0 + 90)
        alerts = agg.alerts_by_state("open")
        assert [a.rule for a in alerts] == [AlertRule.HUMIDITY_OUT_OF_RANGE]
        assert alerts[0].subject == "station:1"

    def test_humidity_alert_auto_resolves_after_three_in_range(self):
        agg = fresh(RuleConfig(persistence_count=3))
        for i in range(3):
            agg.ingest_station(env_bytes(T0 + 30 * (i + 1), humidity=85, seq=i), T0 + 30 * (i + 1))
        assert len(agg.alerts_by_state("open")) == 1
        for i in range(3):
            agg.ingest_station(env_bytes(T0 + 120 + 30 * i, humidity=55, seq=3 + i), T0 + 120 + 30 * i)
        assert agg.alerts_by_state("open") == []

    def test_unknown_tag_rejected(self):
        agg = fresh()
        result = agg.ingest_station(rfid_bytes(T0 + 10, tag=999), T0 + 10)
        assert result.cause == "UnknownTag"

    def test_unknown_station_rejected(self):
        agg = fresh()
        result = agg.ingest_station(env_bytes(T0 + 10, station=77), T0 + 10)
        assert result.cause == "UnknownStation"

    def test_ring_prunes_beyond_24h(self):
        agg = fresh()
        agg.ingest_station(env_bytes(T0 + 30), T0 + 30)
        agg.ingest_station(env_bytes(T0 + 30 + 86400.0, seq=1), T0 + 30 + 86400.0)
        assert len(agg.stations[1].ring) == 1


class TestEvaluateEnvironment:
    CFG = RuleConfig(persistence_count=3)

    @staticmethod
    def samples(values, field="humidity"):
        out = []
        for i, v in enumerate(values):
            kw = {"temperature": 22.0, "humidity": 55, "audio_level": 40.0}
            kw[field] = v
            out.append(EnvSample(timestamp=float(i), station_id=1, **kw))
        return out

    def test_three_consecutive_low_humidity_opens(self):
        *history, latest = self.samples([29, 29, 29])
        verdicts = evaluate_environment(latest, history, self.CFG)
        assert verdicts[AlertRule.HUMIDITY_OUT_OF_RANGE] == OPEN

    def test_boundary_is_inclusive(self):
        *history, latest = self.samples([30.0, 30.0, 30.0], field="temperature")
        verdicts = evaluate_environment(latest, history, self.CFG)
        assert verdicts[AlertRule.TEMPERATURE_OUT_OF_RANGE] == RESOLVE

    def test_non_consecutive_is_noop(self):
        *history, latest = self.samples([50.0, 41.0, 50.0], field="audio_level")
        verdicts = evaluate_environment(latest, history, self.CFG)
        assert verdicts[AlertRule.AUDIO_OUT_OF_RANGE] is None

    def test_short_history_is_noop(self):
        *history, latest = self.samples([29, 29])
        assert evaluate_environment(latest, history, self.CFG)[AlertRule.HUMIDITY_OUT_OF_RANGE] is None


class TestActivityCounters:
    def test_same_activity_increments(self):
        agg = fresh()
        agg.ingest_station(rfid_bytes(T0 + 10), T0 + 10)
        agg.ingest_station(rfid_bytes(T0 + 20, seq=1), T0 + 20)
        counter = agg.cows["cow-1"].counter
        assert counter.activity_code is ActivityCode.MILKING
        assert counter.current_count == 2

    def test_activity_change_resets_counter_and_logs(self):
        events = []
        agg = fresh(sink=events.append)
        agg.register_station(3, "rfid", ActivityCode.FEEDING, T0)
        agg.ingest_station(rfid_bytes(T0 + 10), T0 + 10)
        agg.ingest_station(
            rfid_bytes(T0 + 20, station=3, activity=ActivityCode.FEEDING, seq=1), T0 + 20
        )
        counter = agg.cows["cow-1"].counter
        assert counter.activity_code is ActivityCode.FEEDING
        assert counter.current_count == 1
        resets = [e for e in events if e.kind == "CounterReset"]
        assert len(resets) == 1
        assert resets[0].payload["activity"] == "MILKING"
        assert resets[0].payload["count"] == 1

    def test_first_event_starts_session(self):
        agg = fresh()
        agg.ingest_station(rfid_bytes(T0 + 10), T0 + 10)
        assert agg.cows["cow-1"].counter.current_count == 1

    def test_counter_conservation(self):
        events = []
        agg = fresh(sink=events.append)
        agg.register_station(3, "rfid", ActivityCode.FEEDING, T0)
        sequence = [ActivityCode.MILKING] * 3 + [ActivityCode.FEEDING] * 2 + [
            ActivityCode.MILKING
        ] * 4 + [ActivityCode.FEEDING]
        for i, code in enumerate(sequence):
            station = 2 if code is ActivityCode.MILKING else 3
            agg.ingest_station(
                rfid_bytes(T0 + 10 * (i + 1), station=station, activity=code, seq=i),
                T0 + 10 * (i + 1),
            )
        persisted = sum(
            e.payload["count"] for e in events if e.kind == "CounterReset"
        )
        current = agg.cows["cow-1"].counter.current_count
        assert persisted + current == len(sequence)
        # and the daily tallies catch every event per activity
        day = agg.cows["cow-1"].daily[19723]  # epoch day of 2024-01-01
        assert day[ActivityCode.MILKING] == 7
        assert day[ActivityCode.FEEDING] == 3


def open_deficits(agg):
    return [
        a
        for a in agg.alerts_by_state("open")
        if a.rule is AlertRule.ACTIVITY_FREQUENCY_DEFICIT
    ]


class TestDayRollup:
    def test_deficit_two_of_three_is_warning(self):
        agg = fresh()
        agg.ingest_station(rfid_bytes(T0 + 100), T0 + 100)
        agg.ingest_station(rfid_bytes(T0 + 200, seq=1), T0 + 200)
        agg.advance_time(T0 + 86400.0)
        alerts = open_deficits(agg)
        assert len(alerts) == 1
        assert alerts[0].severity is Severity.WARNING
        assert "2 of 3" in alerts[0].detail
        assert alerts[0].opened_at == T0 + 86400.0

    def test_expected_met_no_alert(self):
        agg = fresh()
        for i in range(3):
            agg.ingest_station(rfid_bytes(T0 + 100 * (i + 1), seq=i), T0 + 100 * (i + 1))
        agg.advance_time(T0 + 86400.0)
        assert open_deficits(agg) == []

    def test_zero_observed_is_critical(self):
        agg = fresh()
        agg.advance_time(T0 + 86400.0)
        alerts = open_deficits(agg)
        assert len(alerts) == 1
        assert alerts[0].severity is Severity.CRITICAL
        assert "0 of 3" in alerts[0].detail

    def test_deficit_resolves_after_good_day(self):
        agg = fresh()
        agg.advance_time(T0 + 86400.0)  # day 0 deficit
        assert len(open_deficits(agg)) == 1
        for i in range(3):
            agg.ingest_station(rfid_bytes(T0 + 86400 + 3600 * (i + 1), seq=i), T0 + 86400 + 3600 * (i + 1))
        agg.advance_time(T0 + 2 * 86400.0)
        assert open_deficits(agg) == []

    def test_rollup_event_carries_tallies(self):
        events = []
        agg = fresh(sink=events.append)
        agg.ingest_station(rfid_bytes(T0 + 100), T0 + 100)
        agg.advance_time(T0 + 86400.0)
        rollups = [e for e in events if e.kind == "DayRollup"]
        assert len(rollups) == 1
        assert rollups[0].payload["tallies"] == {"MILKING": 1}


class TestNodeSilence:
    def test_opens_after_timeout_and_resolves_on_uplink(self):
        agg = fresh(RuleConfig(node_silence_timeout_s=300.0))
        agg.ingest_uplink(uplink_bytes(T0 + 60), T0 + 60)
        agg.advance_time(T0 + 60 + 300.0 + 1.0)
        alerts = agg.alerts_by_state("open")
        assert [a.rule for a in alerts] == [AlertRule.NODE_SILENT]
        assert alerts[0].opened_at == T0 + 360.0  # anchor + timeout, not sweep time
        agg.ingest_uplink(uplink_bytes(T0 + 400, seq=1), T0 + 400)
        assert agg.alerts_by_state("open") == []

    def test_grace_period_for_never_heard_node(self):
        agg = fresh(RuleConfig(node_silence_timeout_s=300.0))
        agg.advance_time(T0 + 299.0)
        assert agg.alerts_by_state("open") == []
        agg.advance_time(T0 + 301.0)
        assert [a.rule for a in agg.alerts_by_state("open")] == [AlertRule.NODE_SILENT]

    def test_no_duplicate_silence_alerts(self):
        agg = fresh(RuleConfig(node_silence_timeout_s=300.0))
        agg.advance_time(T0 + 10_000.0)
        silents = [a for a in agg.alerts_by_state("all") if a.rule is AlertRule.NODE_SILENT]
        assert len(silents) == 1


class TestAlertLifecycle:
    def test_acknowledge_flow(self):
        agg = fresh()
        agg.ingest_uplink(uplink_bytes(T0 + 60, lat=48.5), T0 + 60)
        alert = agg.acknowledge_alert(1, "vet", T0 + 120)
        assert alert.state is AlertState.ACKNOWLEDGED
        assert alert.acknowledged_at == T0 + 120

    def test_double_ack_rejected(self):
        agg = fresh()
        agg.ingest_uplink(uplink_bytes(T0 + 60, lat=48.5), T0 + 60)
        agg.acknowledge_alert(1, "vet", T0 + 120)
        with pytest.raises(AlertNotOpen):
            agg.acknowledge_alert(1, "vet", T0 + 130)

    def test_unknown_alert(self):
        agg = fresh()
        with pytest.raises(AlertNotFound):
            agg.acknowledge_alert(42, "vet", T0 + 130)

    def test_dedup_one_unresolved_per_rule_subject(self):
        agg = fresh()
        for i in range(5):
            agg.ingest_uplink(uplink_bytes(T0 + 60 * (i + 1), lat=48.5, seq=i), T0 + 60 * (i + 1))
        breaches = [a for a in agg.alerts_by_state("all") if a.rule is AlertRule.GEOFENCE_BREACH]
        assert len(breaches) == 1

    def test_acknowledged_alert_still_blocks_reopen(self):
        agg = fresh()
        agg.ingest_uplink(uplink_bytes(T0 + 60, lat=48.5), T0 + 60)
        agg.acknowledge_alert(1, "vet", T0 + 70)
        agg.ingest_uplink(uplink_bytes(T0 + 120, lat=48.5, seq=1), T0 + 120)
        assert len(agg.alerts) == 1

    def test_timestamps_monotonic_within_alert(self):
        agg = fresh()
        agg.ingest_uplink(uplink_bytes(T0 + 60, lat=48.5), T0 + 60)
        agg.acknowledge_alert(1, "vet", T0 + 120)
        agg.ingest_uplink(uplink_bytes(T0 + 180, seq=1), T0 + 180)
        alert = agg.alerts[1]
        assert alert.opened_at <= alert.acknowledged_at <= alert.resolved_at


class TestRegistration:
    def test_duplicate_tag_rejected(self):
        agg = fresh()
        with pytest.raises(RegistrationRejected) as err:
            agg.register_profile(profile(cid="cow-2", tag=100, node=2), T0 + 10)
        assert "DuplicateTag" in err.value.errors

    def test_warning_for_empty_expectations(self):
        agg = fresh()
        warnings = agg.register_profile(profile(cid="cow-2", tag=101, node=2, expected={}), T0)
        assert "EmptyExpectedActivity" in warnings

    def test_duplicate_station_rejected(self):
        agg = fresh()
        with pytest.raises(ValueError):
            agg.register_station(1, "environment", None, T0 + 5)


class TestEventLogAndReplay:
    def test_event_sequence_gap_free(self):
        events = []
        agg = fresh(sink=events.append)
        agg.ingest_uplink(uplink_bytes(T0 + 60), T0 + 60)
        agg.ingest_station(env_bytes(T0 + 90), T0 + 90)
        seqs = [e.seq for e in events]
        assert seqs == list(range(1, len(seqs) + 1))

    def test_fast_path_dump_matches_canonical(self, tmp_path):
        record = EventRecord(5, T0 + 1.5, "FrameAccepted", {"hex": "a1b2", "src": "uplink"})
        path = tmp_path / "log.jsonl"
        with EventLog(path) as log:
            log.append(record)
        assert path.read_text().strip() == dumps_record(record)

    def run_scenario_with_log(self, path):
        log = EventLog(path)
        agg = fresh(RuleConfig(node_silence_timeout_s=300.0), sink=log.append)
        agg.ingest_uplink(uplink_bytes(T0 + 60), T0 + 60)
        agg.ingest_station(env_bytes(T0 + 90), T0 + 90)
        for i in range(2):
            agg.ingest_station(rfid_bytes(T0 + 120 + i * 30, seq=i), T0 + 120 + i * 30)
        bad = bytearray(uplink_bytes(T0 + 200))
        bad[-1] ^= 1
        agg.ingest_uplink(bytes(bad), T0 + 200)
        agg.ingest_uplink(uplink_bytes(T0 + 240, lat=48.5, seq=1), T0 + 240)
        agg.acknowledge_alert(agg.alerts_by_state("open")[0].alert_id, "vet", T0 + 250)
        agg.advance_time(T0 + 86400.0)
        log.close()
        return agg

    def test_replay_reproduces_live_state(self, tmp_path):
        path = tmp_path / "events.jsonl"
        live = self.run_scenario_with_log(path)
        replayed = replay_records(iter_log(path), verify=False)
        assert replayed.snapshot() == live.snapshot()

    def test_replay_verify_passes_on_own_log(self, tmp_path):
        path = tmp_path / "events.jsonl"
        self.run_scenario_with_log(path)
        replay_records(iter_log(path), verify=True)

    def test_mutated_alert_record_fails_verification(self, tmp_path):
        path = tmp_path / "events.jsonl"
        self.run_scenario_with_log(path)
        lines = path.read_text().splitlines()
        idx, mutated = next(
            (i, json.loads(line)) for i, line in enumerate(lines) if '"AlertOpened"' in line
        )
        mutated["payload"]["detail"] = "doctored detail"
        lines[idx] = json.dumps(mutated, sort_keys=True, separators=(",", ":"))
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ReplayDivergence) as err:
            replay_records(iter_log(path), verify=True)
        assert err.value.seq == mutated["seq"]

    def test_deleted_line_raises_sequence_gap(self, tmp_path):
        path = tmp_path / "events.jsonl"
        self.run_scenario_with_log(path)
        lines = path.read_text().splitlines()
        removed = json.loads(lines[4])
        del lines[4]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(SequenceGap) as err:
            list(iter_log(path))
        assert err.value.line_no == 5
        assert err.value.seq == removed["seq"] + 1

    def test_garbage_line_raises_corrupt_record(self, tmp_path):
        path = tmp_path / "events.jsonl"
        self.run_scenario_with_log(path)
        lines = path.read_text().splitlines()
        lines[2] = "{not json"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(CorruptRecord) as err:
            list(iter_log(path))
        assert err.value.line_no == 3

    def test_empty_log_gives_empty_state(self):
        agg = replay_records(iter([]))
        assert agg.snapshot()["cattle"] == {}
        assert agg.stats()["events"] == 0

    def test_replay_divergence_reports_engine_extra(self, tmp_path):
        # truncating the log mid-derivation leaves re-derived records unmatched
        path = tmp_path / "events.jsonl"
        self.run_scenario_with_log(path)
        lines = path.read_text().splitlines()
        # cut right after the FrameAccepted of the out-of-fence uplink,
        # dropping its derived AlertOpened
        cut = next(i for i, line in enumerate(lines) if '"AlertOpened"' in line)
        path.write_text("\n".join(lines[:cut]) + "\n")
        with pytest.raises(ReplayDivergence):
            replay_records(iter_log(path), verify=True)


class TestSnapshotShape:
    def test_snapshot_is_json_serializable(self):
        agg = fresh()
        agg.ingest_uplink(uplink_bytes(T0 + 60), T0 + 60)
        agg.ingest_station(env_bytes(T0 + 90), T0 + 90)
        agg.ingest_station(rfid_bytes(T0 + 95), T0 + 95)
        json.dumps(agg.snapshot())

    def test_stats_totals(self):
        agg = fresh()
        agg.ingest_uplink(uplink_bytes(T0 + 60), T0 + 60)
        bad = bytearray(uplink_bytes(T0 + 70))
        bad[-1] ^= 1
        agg.ingest_uplink(bytes(bad), T0 + 70)
        stats = agg.stats()
        assert stats["accepted"]["uplink"] == 1
        assert stats["rejected"]["CrcMismatch"] == 1
