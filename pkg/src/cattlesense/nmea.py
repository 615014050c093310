"""NMEA-0183 sentence handling for the Neo-6M class of GPS receivers.

Byte-exact both ways: ``parse_sentence`` accepts arbitrary input and either
returns a structured sentence or raises a specific :class:`NmeaError`;
``serialize_gga`` emits framing- and checksum-valid lines terminated with
CRLF.  Only GGA and RMC are interpreted; other well-formed sentence types
parse fine and are flagged unsupported instead of failing, so a future
sentence type never breaks ingestion.
"""

from __future__ import annotations

from dataclasses import dataclass

from cattlesense.model import FixQuality, GeoFix

SUPPORTED_TYPES = frozenset({"GGA", "RMC"})


class NmeaError(ValueError):
    """Base class for sentence-level failures."""


class BadFraming(NmeaError):
    pass


class ChecksumMismatch(NmeaError):
    def __init__(self, expected: str, found: str):
        super().__init__(f"checksum mismatch: expected {expected}, found {found}")
        self.expected = expected
        self.found = found


class NonAsciiPayload(NmeaError):
    pass


class MalformedNumber(NmeaError):
    pass


class UnsupportedSentence(NmeaError):
    pass


class NoFixUnserializable(NmeaError):
    pass


@dataclass(frozen=True, slots=True)
class NmeaSentence:
    talker: str
    type_code: str
    fields: tuple[str, ...]
    checksum: str

    @property
    def supported(self) -> bool:
        """False for well-formed sentence types this system does not interpret."""
        return self.type_code in SUPPORTED_TYPES


def checksum(body) -> str:
    """XOR-fold of all body bytes as exactly two uppercase hex digits.

    ``body`` is the sentence text strictly between ``$`` and ``*``; the
    function itself is total over any bytes/str.
    """
    if isinstance(body, str):
        body = body.encode("latin-1")  # any str folds; framing checks ascii-ness
    pad = -len(body) % 8
    if pad:
        body = body + b"\x00" * pad
    acc = 0
    for word in memoryview(body).cast("Q"):  # 8-byte folds, then collapse
        acc ^= word
    acc ^= acc >> 32
    acc ^= acc >> 16
    acc ^= acc >> 8
    return "%02X" % (acc & 0xFF)


def parse_sentence(line) -> NmeaSentence:
    """Parse one sentence, tolerant of a missing trailing CRLF.

    Raises BadFraming / NonAsciiPayload / ChecksumMismatch; never aborts on
    arbitrary byte input.
    """
    if isinstance(line, (bytes, bytearray)):
        try:
            line = line.decode("ascii")
        except UnicodeDecodeError as e:
            raise NonAsciiPayload(f"non-ascii byte at offset {e.start}") from None
    elif not isinstance(line, str):
        raise BadFraming(f"expected text, got {type(line).__name__}")
    line = line.rstrip("\r\n")
    if not line.startswith("$"):
        raise BadFraming("missing leading '$'")
    star = line.rfind("*")
    if star < 0:
        raise BadFraming("missing '*' checksum delimiter")
    body = line[1:star]
    tail = line[star + 1 :]
    if len(tail) != 2 or any(c not in "0123456789abcdefABCDEF" for c in tail):
        raise BadFraming(f"checksum field {tail!r} is not two hex digits")
    if not body.isascii():
        raise NonAsciiPayload("payload contains non-ascii characters")
    expected = checksum(body)
    if expected != tail.upper():
        raise ChecksumMismatch(expected, tail.upper())
    parts = body.split(",")
    address = parts[0]
    if len(address) != 5 or not address.isalnum():
        raise BadFraming(f"address field {address!r} is not a 5-character identifier")
    return NmeaSentence(
        talker=address[:2],
        type_code=address[2:],
        fields=tuple(parts[1:]),
        checksum=tail.upper(),
    )


def _parse_coordinate(raw: str, hemisphere: str, axis: str) -> float:
    dot = raw.find(".")
    split = (dot if dot >= 0 else len(raw)) - 2
    if split < 1:
        raise MalformedNumber(f"{axis} field {raw!r} too short for ddmm form")
    try:
        degrees = int(raw[:split])
        minutes = float(raw[split:])
    except ValueError:
        raise MalformedNumber(f"unparseable {axis} field {raw!r}") from None
    if minutes >= 60.0 or minutes < 0.0 or degrees < 0:
        raise MalformedNumber(f"{axis} minutes {minutes} out of range")
    value = degrees + minutes / 60.0
    if hemisphere in ("S", "W"):
        return -value
    if hemisphere in ("N", "E"):
        return value
    raise MalformedNumber(f"bad hemisphere {hemisphere!r} for {axis}")


def _parse_time_of_day(raw: str) -> float:
    if not raw:
        return 0.0
    try:
        h = int(raw[0:2])
        m = int(raw[2:4])
        s = float(raw[4:])
    except ValueError:
        raise MalformedNumber(f"unparseable time field {raw!r}") from None
    return h * 3600.0 + m * 60.0 + s


_GGA_QUALITY = {"0": FixQuality.NO_FIX, "1": FixQuality.STANDARD, "2": FixQuality.DIFFERENTIAL}


def to_fix(sentence: NmeaSentence, day_epoch: float = 0.0) -> GeoFix:
    """Extract a GeoFix from a GGA or RMC sentence.

    GGA quality 0, RMC status V, or empty position fields all yield a NO_FIX
    result rather than an error.  ``day_epoch`` (UTC seconds at 00:00 of the
    sentence's day) anchors the time-of-day field to an absolute timestamp;
    sentences only carry time of day.
    """
    if not sentence.supported:
        raise UnsupportedSentence(f"cannot extract a fix from {sentence.type_code}")
    f = sentence.fields
    if sentence.type_code == "GGA":
        if len(f) < 9:
            raise MalformedNumber(f"GGA carries {len(f)} fields, expected 14")
        ts = day_epoch + _parse_time_of_day(f[0])
        quality = _GGA_QUALITY.get(f[5], FixQuality.STANDARD if f[5] else FixQuality.NO_FIX)
        if quality is FixQuality.NO_FIX or not f[1] or not f[3]:
            return GeoFix(None, None, None, FixQuality.NO_FIX, ts)
        lat = _parse_coordinate(f[1], f[2], "latitude")
        lon = _parse_coordinate(f[3], f[4], "longitude")
        alt = None
        if f[8]:
            try:
                alt = float(f[8])
            except ValueError:
                raise MalformedNumber(f"unparseable altitude {f[8]!r}") from None
        return GeoFix(lat, lon, alt, quality, ts)
    # RMC
    if len(f) < 6:
        raise MalformedNumber(f"RMC carries {len(f)} fields, expected 12")
    ts = day_epoch + _parse_time_of_day(f[0])
    if f[1] != "A" or not f[2] or not f[4]:
        return GeoFix(None, None, None, FixQuality.NO_FIX, ts)
    lat = _parse_coordinate(f[2], f[3], "latitude")
    lon = _parse_coordinate(f[4], f[5], "longitude")
    return GeoFix(lat, lon, None, FixQuality.STANDARD, ts)


def _quantize_minutes(mag: float) -> tuple[int, float]:
    """Split |coordinate| into degrees and minutes on the 1e-4 minute grid."""
    degrees = int(mag)
    minutes = round((mag - degrees) * 60.0 * 10000.0) / 10000.0
    if minutes >= 60.0:
        minutes = 0.0
        degrees += 1
    return degrees, minutes


def quantize_coord(value: float) -> float:
    """A coordinate as it survives the ddmm.mmmm wire grid (4 decimal minutes).

    Matches serialize -> parse exactly, so callers can pre-check where a
    position will land after the GPS leg.
    """
    negative = value < 0
    degrees, minutes = _quantize_minutes(-value if negative else value)
    out = degrees + minutes / 60.0
    return -out if negative else out


def _format_coordinate(value: float, width: int) -> tuple[str, bool]:
    """ddmm.mmmm text with 4 decimal minute digits; returns (text, negative)."""
    negative = value < 0
    degrees, minutes = _quantize_minutes(-value if negative else value)
    return "%0*d%07.4f" % (width, degrees, minutes), negative


def serialize_gga(fix: GeoFix, utc_seconds_of_day: float) -> str:
    """Emit a checksum-valid GGA line for a positioned fix, CRLF-terminated.

    Coordinates carry 4 decimal minute digits, so a parse round trip agrees
    with the input to within ~0.19 m of latitude.
    """
    if fix.quality is FixQuality.NO_FIX:
        raise NoFixUnserializable("cannot serialize a fix without coordinates")
    t = utc_seconds_of_day % 86400.0
    h = int(t // 3600)
    m = int(t % 3600 // 60)
    s = t % 60.0
    lat_text, lat_neg = _format_coordinate(fix.latitude, 2)
    lon_text, lon_neg = _format_coordinate(fix.longitude, 3)
    quality = "2" if fix.quality is FixQuality.DIFFERENTIAL else "1"
    alt_text = "" if fix.altitude is None else "%.1f" % fix.altitude
    body = "GPGGA,%02d%02d%05.2f,%s,%s,%s,%s,%s,08,1.0,%s,M,0.0,M,," % (
        h,
        m,
        s,
        lat_text,
        "S" if lat_neg else "N",
        lon_text,
        "W" if lon_neg else "E",
        quality,
        alt_text,
    )
    return "$%s*%s\r\n" % (body, checksum(body))
