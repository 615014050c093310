"""Binary radio payload codecs.

Two frame families, both big-endian with a trailing CRC-16/CCITT-FALSE:

Node uplink (collar -> aggregator, LoRa path), exactly 22 bytes::

    offset  size  field
    0       1     version (high nibble, =1) | frame type (low nibble, =1)
    1       2     node_id            u16
    3       1     seq                u8, wrapping
    4       4     timestamp          u32, UTC seconds
    8       4     latitude           i32, degrees * 1e7
    12      4     longitude          i32, degrees * 1e7
    16      2     altitude           i16, metres * 10
    18      1     bpm                u8, 0 = no estimate
    19      1     flags              u8: bit0 gps_valid, bit1 low_battery
    20      2     crc                CRC-16/CCITT-FALSE over bytes 0..19

Station frame (shed -> aggregator, NRF24L01 path), exactly 15 bytes, which
sits well inside the transceiver's 32-byte payload ceiling::

    offset  size  field
    0       1     0x12 environment | 0x13 rfid
    1       2     station_id         u16
    3       1     seq                u8
    4       4     timestamp          u32
    8       5     body (below)
    13      2     crc over bytes 0..12

    environment body: temperature i16 (degC * 10), humidity u8 (%),
                      audio i16 (dB * 10)
    rfid body:        rfid_tag u32, activity_code u8

Values live in the dataclasses as the wire integers so that
``decode(encode(f)) == f`` holds exactly; physical-unit accessors do the
fixed-point conversion.
"""

from __future__ import annotations

import binascii
import struct
from dataclasses import dataclass

from cattlesense.model import ActivityCode

PROTOCOL_VERSION = 1
UPLINK_TYPE = 0x1
ENV_TYPE = 0x2
RFID_TYPE = 0x3
UPLINK_LEN = 22
STATION_LEN = 15
NRF_PAYLOAD_CEILING = 32

FLAG_GPS_VALID = 0x01
FLAG_LOW_BATTERY = 0x02

_UPLINK = struct.Struct(">BHBIiihBB")
_ENV = struct.Struct(">BHBIhBh")
_RFID = struct.Struct(">BHBIIB")
_CRC = struct.Struct(">H")


class CodecError(ValueError):
    """Base for encode/decode failures; ``cause`` names the failure mode."""

    cause = "CodecError"


class BadLength(CodecError):
    cause = "BadLength"


class BadVersion(CodecError):
    cause = "BadVersion"


class BadType(CodecError):
    cause = "BadType"


class CrcMismatch(CodecError):
    cause = "CrcMismatch"


class BadField(CodecError):
    cause = "BadField"


class FieldOverflow(CodecError):
    cause = "FieldOverflow"


def crc16(data: bytes) -> int:
    """CRC-16/CCITT-FALSE: polynomial 0x1021, init 0xFFFF, no reflection."""
    return binascii.crc_hqx(data, 0xFFFF)


@dataclass(frozen=True, slots=True)
class NodeUplinkFrame:
    node_id: int
    seq: int
    timestamp: int
    latitude_e7: int
    longitude_e7: int
    altitude_dm: int
    bpm: int
    flags: int

    @property
    def latitude(self) -> float:
        return self.latitude_e7 / 1e7

    @property
    def longitude(self) -> float:
        return self.longitude_e7 / 1e7

    @property
    def altitude(self) -> float:
        return self.altitude_dm / 10.0

    @property
    def gps_valid(self) -> bool:
        return bool(self.flags & FLAG_GPS_VALID)

    @property
    def low_battery(self) -> bool:
        return bool(self.flags & FLAG_LOW_BATTERY)

    @staticmethod
    def from_physical(
        node_id: int,
        seq: int,
        timestamp: float,
        latitude: float | None,
        longitude: float | None,
        altitude: float | None,
        bpm: int,
        low_battery: bool = False,
    ) -> "NodeUplinkFrame":
        """Quantize physical units onto the wire grid; None position = no GPS."""
        flags = 0
        lat_e7 = lon_e7 = alt_dm = 0
        if latitude is not None and longitude is not None:
            flags |= FLAG_GPS_VALID
            lat_e7 = round(latitude * 1e7)
            lon_e7 = round(longitude * 1e7)
            alt_dm = 0 if altitude is None else round(altitude * 10.0)
        if low_battery:
            flags |= FLAG_LOW_BATTERY
        return NodeUplinkFrame(
            node_id=node_id,
            seq=seq & 0xFF,
            timestamp=int(timestamp),
            latitude_e7=lat_e7,
            longitude_e7=lon_e7,
            altitude_dm=alt_dm,
            bpm=bpm,
            flags=flags,
        )


@dataclass(frozen=True, slots=True)
class StationFrame:
    frame_type: int  # ENV_TYPE or RFID_TYPE
    station_id: int
    seq: int
    timestamp: int
    # environment body
    temperature_x10: int = 0
    humidity: int = 0
    audio_x10: int = 0
    # rfid body
    rfid_tag: int = 0
    activity_code: int = 0

    @property
    def is_environment(self) -> bool:
        return self.frame_type == ENV_TYPE

    @property
    def temperature(self) -> float:
        return self.temperature_x10 / 10.0

    @property
    def audio_db(self) -> float:
        return self.audio_x10 / 10.0

    @staticmethod
    def environment(
        station_id: int,
        seq: int,
        timestamp: float,
        temperature: float,
        humidity: int,
        audio_db: float,
    ) -> "StationFrame":
        return StationFrame(
            frame_type=ENV_TYPE,
            station_id=station_id,
            seq=seq & 0xFF,
            timestamp=int(timestamp),
            temperature_x10=round(temperature * 10.0),
            humidity=int(humidity),
            audio_x10=round(audio_db * 10.0),
        )

    @staticmethod
    def rfid(
        station_id: int,
        seq: int,
        timestamp: float,
        rfid_tag: int,
        activity_code: int,
    ) -> "StationFrame":
        return StationFrame(
            frame_type=RFID_TYPE,
            station_id=station_id,
            seq=seq & 0xFF,
            timestamp=int(timestamp),
            rfid_tag=rfid_tag,
            activity_code=int(activity_code),
        )


def _check(name: str, value: int, lo: int, hi: int):
    if not lo <= value <= hi:
        raise FieldOverflow(f"{name}={value} outside [{lo}, {hi}]")


def encode_uplink(frame: NodeUplinkFrame) -> bytes:
    """22 bytes, big-endian, CRC appended last."""
    try:
        head = _UPLINK.pack(
            (PROTOCOL_VERSION << 4) | UPLINK_TYPE,
            frame.node_id,
            frame.seq,
            frame.timestamp,
            frame.latitude_e7,
            frame.longitude_e7,
            frame.altitude_dm,
            frame.bpm,
            frame.flags,
        )
    except struct.error:
        # report which field overflowed, not just that one did
        _check("node_id", frame.node_id, 0, 0xFFFF)
        _check("seq", frame.seq, 0, 0xFF)
        _check("timestamp", frame.timestamp, 0, 0xFFFFFFFF)
        _check("latitude_e7", frame.latitude_e7, -(2**31), 2**31 - 1)
        _check("longitude_e7", frame.longitude_e7, -(2**31), 2**31 - 1)
        _check("altitude_dm", frame.altitude_dm, -(2**15), 2**15 - 1)
        _check("bpm", frame.bpm, 0, 0xFF)
        _check("flags", frame.flags, 0, 0xFF)
        raise
    return head + _CRC.pack(crc16(head))


def decode_uplink(data: bytes) -> NodeUplinkFrame:
    """Inverse of :func:`encode_uplink`; rejects with a distinct cause per check."""
    if len(data) != UPLINK_LEN:
        raise BadLength(f"uplink frame is {len(data)} bytes, expected {UPLINK_LEN}")
    first = data[0]
    if first >> 4 != PROTOCOL_VERSION:
        raise BadVersion(f"version {first >> 4}, expected {PROTOCOL_VERSION}")
    if first & 0x0F != UPLINK_TYPE:
        raise BadType(f"frame type 0x{first & 0x0F:X}, expected 0x{UPLINK_TYPE:X}")
    (found,) = _CRC.unpack_from(data, UPLINK_LEN - 2)
    expected = crc16(data[: UPLINK_LEN - 2])
    if found != expected:
        raise CrcMismatch(f"expected 0x{expected:04X}, found 0x{found:04X}")
    (_, node_id, seq, ts, lat, lon, alt, bpm, flags) = _UPLINK.unpack_from(data)
    return NodeUplinkFrame(node_id, seq, ts, lat, lon, alt, bpm, flags)


def encode_station(frame: StationFrame) -> bytes:
    """15 bytes; environment and rfid bodies discriminated by the type nibble."""
    _check("station_id", frame.station_id, 0, 0xFFFF)
    _check("seq", frame.seq, 0, 0xFF)
    _check("timestamp", frame.timestamp, 0, 0xFFFFFFFF)
    first = (PROTOCOL_VERSION << 4) | frame.frame_type
    if frame.frame_type == ENV_TYPE:
        _check("temperature_x10", frame.temperature_x10, -(2**15), 2**15 - 1)
        _check("humidity", frame.humidity, 0, 100)
        _check("audio_x10", frame.audio_x10, -(2**15), 2**15 - 1)
        head = _ENV.pack(
            first,
            frame.station_id,
            frame.seq,
            frame.timestamp,
            frame.temperature_x10,
            frame.humidity,
            frame.audio_x10,
        )
    elif frame.frame_type == RFID_TYPE:
        _check("rfid_tag", frame.rfid_tag, 0, 0xFFFFFFFF)
        try:
            ActivityCode(frame.activity_code)
        except ValueError:
            raise BadField(f"unknown activity code {frame.activity_code}") from None
        head = _RFID.pack(
            first,
            frame.station_id,
            frame.seq,
            frame.timestamp,
            frame.rfid_tag,
            frame.activity_code,
        )
    else:
        raise BadType(f"unknown station frame type 0x{frame.frame_type:X}")
    out = head + _CRC.pack(crc16(head))
    assert len(out) <= NRF_PAYLOAD_CEILING
    return out


def decode_station(data: bytes) -> StationFrame:
    if len(data) != STATION_LEN:
        raise BadLength(f"station frame is {len(data)} bytes, expected {STATION_LEN}")
    first = data[0]
    if first >> 4 != PROTOCOL_VERSION:
        raise BadVersion(f"version {first >> 4}, expected {PROTOCOL_VERSION}")
    ftype = first & 0x0F
    if ftype not in (ENV_TYPE, RFID_TYPE):
        raise BadType(f"frame type 0x{ftype:X} is not environment or rfid")
    (found,) = _CRC.unpack_from(data, STATION_LEN - 2)
    expected = crc16(data[: STATION_LEN - 2])
    if found != expected:
        raise CrcMismatch(f"expected 0x{expected:04X}, found 0x{found:04X}")
    if ftype == ENV_TYPE:
        (_, station_id, seq, ts, temp, hum, audio) = _ENV.unpack_from(data)
        if hum > 100:
            raise BadField(f"humidity {hum} outside [0, 100]")
        return StationFrame(
            frame_type=ENV_TYPE,
            station_id=station_id,
            seq=seq,
            timestamp=ts,
            temperature_x10=temp,
            humidity=hum,
            audio_x10=audio,
        )
    (_, station_id, seq, ts, tag, activity) = _RFID.unpack_from(data)
    try:
        ActivityCode(activity)
    except ValueError:
        raise BadField(f"unknown activity code {activity}") from None
    return StationFrame(
        frame_type=RFID_TYPE,
        station_id=station_id,
        seq=seq,
        timestamp=ts,
        rfid_tag=tag,
        activity_code=activity,
    )
