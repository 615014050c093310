import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cattlesense import frames


def crc16_oracle(data: bytes) -> int:
    """Bitwise shift-register form: poly 0x1021, init 0xFFFF, no reflection."""
    crc = 0xFFFF
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            if crc & 0x8000:
                crc = ((crc << 1) ^ 0x1021) & 0xFFFF
            else:
                crc = (crc << 1) & 0xFFFF
    return crc


class TestCrc16:
    def test_empty_is_init_value(self):
        assert frames.crc16(b"") == 0xFFFF

    def test_standard_check_value(self):
        assert crc16_oracle(b"123456789") == 0x29B1
        assert frames.crc16(b"123456789") == 0x29B1

    def test_matches_oracle_on_random_messages(self):
        rng = np.random.default_rng(10)
        for _ in range(300):
            msg = bytes(rng.integers(0, 256, rng.integers(0, 64)).tolist())
            assert frames.crc16(msg) == crc16_oracle(msg)

    def test_appended_crc_self_check(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            msg = bytes(rng.integers(0, 256, 20).tolist())
            whole = msg + struct.pack(">H", crc16_oracle(msg))
            assert crc16_oracle(whole) == 0x0000
            assert frames.crc16(whole) == 0x0000


def make_uplink(**kw):
    defaults = dict(
        node_id=7,
        seq=3,
        timestamp=1_704_067_200,
        latitude_e7=481_173_000,
        longitude_e7=115_166_670,
        altitude_dm=5454,
        bpm=72,
        flags=frames.FLAG_GPS_VALID,
    )
    defaults.update(kw)
    return frames.NodeUplinkFrame(**defaults)


class TestUplinkCodec:
    def test_zero_frame_layout(self):
        frame = frames.NodeUplinkFrame(0, 0, 0, 0, 0, 0, 0, 0)
        data = frames.encode_uplink(frame)
        assert len(data) == 22
        assert data[0] == 0x11
        assert data[1:20] == bytes(19)
        assert data[20:22] == struct.pack(">H", crc16_oracle(data[:20]))
        assert frames.decode_uplink(data) == frame

    def test_latitude_fixed_point(self):
        assert round(48.1173 * 1e7) == 481_173_000
        frame = make_uplink()
        data = frames.encode_uplink(frame)
        assert data[8:12] == struct.pack(">i", 481_173_000)
        assert frames.decode_uplink(data).latitude == pytest.approx(48.1173, abs=1e-7)

    def test_from_physical_quantizes(self):
        frame = frames.NodeUplinkFrame.from_physical(
            1, 2, 1000.9, 48.1173, 11.516667, 545.4, 80
        )
        assert frame.latitude_e7 == 481_173_000
        assert frame.longitude_e7 == 115_166_670
        assert frame.altitude_dm == 5454
        assert frame.timestamp == 1000
        assert frame.gps_valid

    def test_no_gps_sentinel(self):
        frame = frames.NodeUplinkFrame.from_physical(1, 2, 0, None, None, None, 0)
        assert not frame.gps_valid
        assert frame.latitude_e7 == 0

    def test_bad_length(self):
        with pytest.raises(frames.BadLength):
            frames.decode_uplink(bytes(21))

    def test_crc_mismatch_on_flip(self):
        data = bytearray(frames.encode_uplink(make_uplink()))
        data[-1] ^= 0x01
        with pytest.raises(frames.CrcMismatch):
            frames.decode_uplink(bytes(data))

    def test_bad_version_and_type(self):
        data = bytearray(frames.encode_uplink(make_uplink()))
        data[0] = 0x21
        with pytest.raises(frames.BadVersion):
            frames.decode_uplink(bytes(data))
        data[0] = 0x12
        with pytest.raises(frames.BadType):
            frames.decode_uplink(bytes(data))

    def test_every_single_bit_corruption_rejected(self):
        data = frames.encode_uplink(make_uplink())
        for byte_idx in range(len(data)):
            for bit in range(8):
                mutated = bytearray(data)
                mutated[byte_idx] ^= 1 << bit
                with pytest.raises(frames.CodecError):
                    frames.decode_uplink(bytes(mutated))

    def test_field_overflow(self):
        with pytest.raises(frames.FieldOverflow, match="altitude"):
            frames.encode_uplink(make_uplink(altitude_dm=40_000))

    @given(
        st.integers(0, 0xFFFF),
        st.integers(0, 0xFF),
        st.integers(0, 0xFFFFFFFF),
        st.integers(-900_000_000, 900_000_000),
        st.integers(-1_800_000_000, 1_800_000_000),
        st.integers(-32768, 32767),
        st.integers(0, 255),
        st.integers(0, 255),
    )
    @settings(max_examples=300, deadline=None)
    def test_round_trip(self, node_id, seq, ts, lat, lon, alt, bpm, flags):
        frame = frames.NodeUplinkFrame(node_id, seq, ts, lat, lon, alt, bpm, flags)
        assert frames.decode_uplink(frames.encode_uplink(frame)) == frame


class TestStationCodec:
    def test_environment_fixed_point(self):
        frame = frames.StationFrame.environment(3, 1, 1000, 22.5, 55, 41.0)
        assert frame.temperature_x10 == 225
        assert frame.humidity == 55
        assert frame.audio_x10 == 410
        data = frames.encode_station(frame)
        assert len(data) == 15
        assert data[0] == 0x12
        assert frames.decode_station(data) == frame

    def test_rfid_round_trip(self):
        frame = frames.StationFrame.rfid(4, 9, 2000, 0xDEADBEEF, 1)
        data = frames.encode_station(frame)
        assert len(data) == 15 <= 32
        assert data[0] == 0x13
        back = frames.decode_station(data)
        assert back.rfid_tag == 0xDEADBEEF
        assert back == frame

    def test_oversize_input_rejected(self):
        with pytest.raises(frames.BadLength):
            frames.decode_station(bytes(33))

    def test_unknown_activity_rejected_both_ways(self):
        with pytest.raises(frames.BadField):
            frames.encode_station(frames.StationFrame.rfid(4, 9, 2000, 1, 77))
        good = bytearray(frames.encode_station(frames.StationFrame.rfid(4, 9, 2000, 1, 2)))
        good[12] = 77
        good[13:15] = struct.pack(">H", crc16_oracle(bytes(good[:13])))
        with pytest.raises(frames.BadField):
            frames.decode_station(bytes(good))

    def test_negative_temperature(self):
        frame = frames.StationFrame.environment(3, 1, 1000, -12.5, 40, 35.0)
        assert frames.decode_station(frames.encode_station(frame)).temperature == -12.5

    @given(
        st.integers(0, 0xFFFF),
        st.integers(0, 0xFF),
        st.integers(0, 0xFFFFFFFF),
        st.integers(-1000, 1000),
        st.integers(0, 100),
        st.integers(-500, 1200),
    )
    @settings(max_examples=200, deadline=None)
    def test_environment_round_trip(self, sid, seq, ts, t10, hum, a10):
        frame = frames.StationFrame(
            frame_type=frames.ENV_TYPE,
            station_id=sid,
            seq=seq,
            timestamp=ts,
            temperature_x10=t10,
            humidity=hum,
            audio_x10=a10,
        )
        assert frames.decode_station(frames.encode_station(frame)) == frame

    @given(
        st.integers(0, 0xFFFF),
        st.integers(0, 0xFF),
        st.integers(0, 0xFFFFFFFF),
        st.integers(0, 0xFFFFFFFF),
        st.integers(1, 4),
    )
    @settings(max_examples=200, deadline=None)
    def test_rfid_round_trip_property(self, sid, seq, ts, tag, code):
        frame = frames.StationFrame(
            frame_type=frames.RFID_TYPE,
            station_id=sid,
            seq=seq,
            timestamp=ts,
            rfid_tag=tag,
            activity_code=code,
        )
        assert frames.decode_station(frames.encode_station(frame)) == frame

    def test_decode_never_aborts_on_garbage(self):
        rng = np.random.default_rng(14)
        for _ in range(3000):
            blob = bytes(rng.integers(0, 256, rng.integers(0, 40)).tolist())
            for decoder in (frames.decode_uplink, frames.decode_station):
                try:
                    decoder(blob)
                except frames.CodecError:
                    pass
