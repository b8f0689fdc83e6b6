"""
Alert events, their fixed binary layout and the line-oriented ingest format.

An ingest line is a JSON object with exactly these keys::

    {"ts":1000,"gen":1,"sig":109,"src":"10.0.0.1","dst":"10.0.0.2",
     "sport":1024,"dport":31337,"proto":17,"tos":0,"payload":"ce63"}

The binary layout (little-endian, 32 bytes + payload) is what the log stores
for the first alert of every record, and its length is the "uncompressed"
size that compression ratios are measured against.
"""

from __future__ import annotations

import enum
import ipaddress
import json
import struct
from dataclasses import dataclass

from .errors import AlertParseError

ALERT_HEADER = struct.Struct("<QIIIIHHBBH")
ALERT_HEADER_SIZE = ALERT_HEADER.size  # 32
MAX_PAYLOAD = 0xFFFF

_U64 = 0xFFFFFFFFFFFFFFFF
_U32 = 0xFFFFFFFF
_U16 = 0xFFFF
_U8 = 0xFF


class FieldId(enum.IntEnum):
    """Alert fields a delta entry may change. Codes are part of the on-disk format."""

    SRC_ADDR = 1
    DST_ADDR = 2
    SRC_PORT = 3
    DST_PORT = 4
    PROTOCOL = 5
    TOS = 6
    PAYLOAD = 7

    @property
    def attr(self) -> str:
        return self.name.lower()


@dataclass(frozen=True, slots=True)
class Alert:
    timestamp_ms: int
    generator_id: int
    signature_id: int
    src_addr: int
    dst_addr: int
    src_port: int
    dst_port: int
    protocol: int
    tos: int
    payload: bytes = b""

    @property
    def size(self) -> int:
        """Length of :func:`serialize_alert` output."""
        return ALERT_HEADER_SIZE + len(self.payload)


def serialize_alert(alert: Alert) -> bytes:
    return ALERT_HEADER.pack(
        alert.timestamp_ms,
        alert.generator_id,
        alert.signature_id,
        alert.src_addr,
        alert.dst_addr,
        alert.src_port,
        alert.dst_port,
        alert.protocol,
        alert.tos,
        len(alert.payload),
    ) + alert.payload


def deserialize_alert(buf, offset: int = 0) -> tuple[Alert, int]:
    """Decode one alert from ``buf`` at ``offset``.

    Returns the alert and the offset just past it. Raises ``ValueError`` if
    the buffer is too short.
    """
    if len(buf) - offset < ALERT_HEADER_SIZE:
        raise ValueError("buffer too short for alert header")
    (ts, gen, sig, src, dst, sport, dport, proto, tos, plen) = ALERT_HEADER.unpack_from(
        buf, offset
    )
    start = offset + ALERT_HEADER_SIZE
    end = start + plen
    if end > len(buf):
        raise ValueError("buffer too short for alert payload")
    alert = Alert(ts, gen, sig, src, dst, sport, dport, proto, tos, bytes(buf[start:end]))
    return alert, end


# ingest key -> (Alert attribute, max value); None marks non-integer keys
_INGEST_KEYS = {
    "ts": ("timestamp_ms", _U64),
    "gen": ("generator_id", _U32),
    "sig": ("signature_id", _U32),
    "src": ("src_addr", None),
    "dst": ("dst_addr", None),
    "sport": ("src_port", _U16),
    "dport": ("dst_port", _U16),
    "proto": ("protocol", _U8),
    "tos": ("tos", _U8),
    "payload": ("payload", None),
}


def _parse_addr(value, key, lineno) -> int:
    if not isinstance(value, str):
        raise AlertParseError(f"{key!r} must be a dotted-quad string", key, lineno)
    try:
        return int(ipaddress.IPv4Address(value))
    except ipaddress.AddressValueError as exc:
        raise AlertParseError(f"{key!r} is not an IPv4 address: {exc}", key, lineno) from None


def _parse_payload(value, lineno) -> bytes:
    if not isinstance(value, str) or value != value.lower():
        raise AlertParseError("'payload' must be a lowercase hex string", "payload", lineno)
    try:
        payload = bytes.fromhex(value)
    except ValueError:
        raise AlertParseError("'payload' is not valid hex", "payload", lineno) from None
    if len(payload) > MAX_PAYLOAD:
        raise AlertParseError("'payload' longer than 65535 bytes", "payload", lineno)
    return payload


def parse_alert(line: str, lineno: int | None = None) -> Alert:
    """Parse one ingest-format line into an :class:`Alert`.

    Every error is an :class:`AlertParseError` carrying the offending key
    and ``lineno``.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise AlertParseError(f"not a JSON object: {exc.msg}", None, lineno) from None
    if not isinstance(obj, dict):
        raise AlertParseError("not a JSON object", None, lineno)

    for key in obj:
        if key not in _INGEST_KEYS:
            raise AlertParseError(f"unknown key {key!r}", key, lineno)

    fields = {}
    for key, (attr, limit) in _INGEST_KEYS.items():
        if key not in obj:
            raise AlertParseError(f"missing key {key!r}", key, lineno)
        value = obj[key]
        if key in ("src", "dst"):
            fields[attr] = _parse_addr(value, key, lineno)
        elif key == "payload":
            fields[attr] = _parse_payload(value, lineno)
        else:
            if not isinstance(value, int) or isinstance(value, bool):
                raise AlertParseError(f"{key!r} must be an integer", key, lineno)
            if not 0 <= value <= limit:
                raise AlertParseError(f"{key!r} out of range: {value}", key, lineno)
            fields[attr] = value
    return Alert(**fields)


def format_alert(alert: Alert) -> str:
    """Render ``alert`` as one ingest-format line (no trailing newline)."""
    return json.dumps(
        {
            "ts": alert.timestamp_ms,
            "gen": alert.generator_id,
            "sig": alert.signature_id,
            "src": str(ipaddress.IPv4Address(alert.src_addr)),
            "dst": str(ipaddress.IPv4Address(alert.dst_addr)),
            "sport": alert.src_port,
            "dport": alert.dst_port,
            "proto": alert.protocol,
            "tos": alert.tos,
            "payload": alert.payload.hex(),
        },
        separators=(",", ":"),
    )


def read_alerts(lines, start_lineno: int = 1):
    """Yield alerts from an iterable of ingest lines, skipping blank lines."""
    for lineno, line in enumerate(lines, start_lineno):
        if line.strip():
            yield parse_alert(line, lineno)
