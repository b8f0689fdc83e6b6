"""
Append-only binary alert log (``.atl``).

File layout, all integers little-endian::

    header   magic b"ATL1" | version u16 = 1 | reserved 2 bytes
    record*  record_len u32 | run_count u32 | mode u8 | reserved 7 bytes
             | first alert (32 + payload_len bytes)
             | (run_count - 1) delta entries when mode = 1

    delta    ts_delta u16 | change_count u8 | change*
    change   field_id u8 | value (addr 4, port 2, protocol/tos 1,
                                  payload: length u16 + bytes)

``record_len`` covers the whole record including itself, so a reader can
skip or localise a damaged frame.

Writes are buffered: storage is touched only when the buffer grows past
its size, on :meth:`LogWriter.sync`, or on close. Never once per record.
"""

from __future__ import annotations

import enum
import os
import struct
from dataclasses import dataclass
from typing import BinaryIO, NamedTuple, Union

from .alert import ALERT_HEADER_SIZE, Alert, FieldId, deserialize_alert, serialize_alert
from .errors import LogFormatError, LogWriteError, RecordTooLargeError

MAGIC = b"ATL1"
VERSION = 1
FILE_HEADER = struct.Struct("<4sH2x")
FILE_HEADER_SIZE = FILE_HEADER.size  # 8
RECORD_HEADER = struct.Struct("<IIB7x")
RECORD_HEADER_SIZE = RECORD_HEADER.size  # 16
DELTA_HEADER = struct.Struct("<HB")
DELTA_HEADER_SIZE = DELTA_HEADER.size  # 3

MAX_RECORD_LEN = 0xFFFFFFFF
MAX_RUN_COUNT = 0xFFFFFFFF
MAX_TS_DELTA = 0xFFFF
DEFAULT_BUFFER_SIZE = 64 * 1024

# fixed-width change values; PAYLOAD is variable
_FIELD_FORMATS = {
    FieldId.SRC_ADDR: struct.Struct("<I"),
    FieldId.DST_ADDR: struct.Struct("<I"),
    FieldId.SRC_PORT: struct.Struct("<H"),
    FieldId.DST_PORT: struct.Struct("<H"),
    FieldId.PROTOCOL: struct.Struct("<B"),
    FieldId.TOS: struct.Struct("<B"),
}
_PAYLOAD_LEN = struct.Struct("<H")


class RecordMode(enum.IntEnum):
    RLE_ONLY = 0
    RLE_DELTA = 1


class FieldChange(NamedTuple):
    field: FieldId
    value: Union[int, bytes]

    @property
    def size(self) -> int:
        if self.field is FieldId.PAYLOAD:
            return 1 + 2 + len(self.value)
        return 1 + _FIELD_FORMATS[self.field].size


class DeltaEntry(NamedTuple):
    ts_delta_ms: int
    changes: tuple = ()

    @property
    def size(self) -> int:
        return DELTA_HEADER_SIZE + sum(c.size for c in self.changes)


def encode_delta(entry: DeltaEntry) -> bytes:
    if not 0 <= entry.ts_delta_ms <= MAX_TS_DELTA:
        raise ValueError(f"timestamp delta {entry.ts_delta_ms} does not fit 16 bits")
    parts = [DELTA_HEADER.pack(entry.ts_delta_ms, len(entry.changes))]
    seen = set()
    for change in entry.changes:
        fid = FieldId(change.field)
        if fid in seen:
            raise ValueError(f"field {fid.name} changed twice in one delta entry")
        seen.add(fid)
        parts.append(bytes((fid,)))
        if fid is FieldId.PAYLOAD:
            parts.append(_PAYLOAD_LEN.pack(len(change.value)))
            parts.append(bytes(change.value))
        else:
            parts.append(_FIELD_FORMATS[fid].pack(change.value))
    return b"".join(parts)


def decode_delta(buf, offset: int) -> tuple[DeltaEntry, int]:
    ts_delta, nchanges = DELTA_HEADER.unpack_from(buf, offset)
    offset += DELTA_HEADER_SIZE
    changes = []
    for _ in range(nchanges):
        try:
            fid = FieldId(buf[offset])
        except ValueError:
            raise ValueError(f"unknown field id {buf[offset]}") from None
        offset += 1
        if fid is FieldId.PAYLOAD:
            (plen,) = _PAYLOAD_LEN.unpack_from(buf, offset)
            offset += 2
            if offset + plen > len(buf):
                raise ValueError("payload change runs past end of record")
            value = bytes(buf[offset : offset + plen])
            offset += plen
        else:
            fmt = _FIELD_FORMATS[fid]
            (value,) = fmt.unpack_from(buf, offset)
            offset += fmt.size
        changes.append(FieldChange(fid, value))
    return DeltaEntry(ts_delta, tuple(changes)), offset


@dataclass(frozen=True)
class LogRecord:
    """One composite record: the first alert of a run, its count and deltas.

    A single alert is just a record with ``run_count == 1``.
    """

    first_alert: Alert
    run_count: int = 1
    mode: RecordMode = RecordMode.RLE_DELTA
    deltas: tuple = ()

    def __post_init__(self):
        if not 1 <= self.run_count <= MAX_RUN_COUNT:
            raise ValueError(f"run_count {self.run_count} out of range")
        if self.mode is RecordMode.RLE_ONLY and self.deltas:
            raise ValueError("RLE_ONLY records carry no delta entries")
        if self.mode is RecordMode.RLE_DELTA and len(self.deltas) != self.run_count - 1:
            raise ValueError(
                f"RLE_DELTA record with run_count {self.run_count} needs "
                f"{self.run_count - 1} delta entries, got {len(self.deltas)}"
            )

    @property
    def record_len(self) -> int:
        return (
            RECORD_HEADER_SIZE
            + self.first_alert.size
            + sum(d.size for d in self.deltas)
        )

    def encode(self) -> bytes:
        record_len = self.record_len
        if record_len > MAX_RECORD_LEN:
            raise RecordTooLargeError(
                f"record of {record_len} bytes exceeds the 32-bit length field"
            )
        parts = [
            RECORD_HEADER.pack(record_len, self.run_count, self.mode),
            serialize_alert(self.first_alert),
        ]
        parts.extend(encode_delta(d) for d in self.deltas)
        return b"".join(parts)


def decode_record(frame) -> LogRecord:
    """Decode one complete record frame. Raises ``ValueError`` on bad content."""
    if len(frame) < RECORD_HEADER_SIZE + ALERT_HEADER_SIZE:
        raise ValueError("record shorter than its fixed header")
    record_len, run_count, mode = RECORD_HEADER.unpack_from(frame, 0)
    if record_len != len(frame):
        raise ValueError(f"record_len {record_len} does not match frame size {len(frame)}")
    try:
        mode = RecordMode(mode)
    except ValueError:
        raise ValueError(f"unknown record mode {mode}") from None
    if frame[9:16] != bytes(7):
        raise ValueError("reserved header bytes are not zero")
    first, offset = deserialize_alert(frame, RECORD_HEADER_SIZE)
    deltas = []
    if mode is RecordMode.RLE_DELTA:
        for _ in range(run_count - 1):
            try:
                entry, offset = decode_delta(frame, offset)
            except (struct.error, IndexError):
                raise ValueError("delta entries run past end of record") from None
            deltas.append(entry)
    if offset != record_len:
        raise ValueError(f"record has {record_len - offset} trailing bytes")
    return LogRecord(first, run_count, mode, tuple(deltas))


class LogWriter:
    """Buffered appender for ``.atl`` logs.

    ``target`` is a path or an already-open binary stream. With a path the
    file is opened unbuffered, so every storage write is one ``write`` call
    on the raw file.
    """

    def __init__(self, target: Union[str, os.PathLike, BinaryIO], buffer_size=DEFAULT_BUFFER_SIZE):
        if buffer_size < 1:
            raise ValueError("buffer_size must be positive")
        if isinstance(target, (str, os.PathLike)):
            self._storage = open(target, "wb", buffering=0)
            self._owns_storage = True
        else:
            self._storage = target
            self._owns_storage = False
        self.buffer_size = buffer_size
        self._buffer = bytearray(FILE_HEADER.pack(MAGIC, VERSION))
        self.bytes_appended = FILE_HEADER_SIZE
        self.bytes_flushed = 0
        self.records_appended = 0
        self.storage_writes = 0
        self.closed = False

    def append(self, record: LogRecord) -> int:
        """Buffer one record; returns its encoded length."""
        if self.closed:
            raise ValueError("append to closed log")
        data = record.encode()
        self._buffer += data
        self.bytes_appended += len(data)
        self.records_appended += 1
        if len(self._buffer) > self.buffer_size:
            self._drain()
        return len(data)

    def _drain(self) -> None:
        view = memoryview(self._buffer)
        done = 0
        try:
            while done < len(view):
                n = self._storage.write(view[done:])
                self.storage_writes += 1
                if not n:
                    raise OSError("storage accepted no bytes")
                done += n
        except OSError as exc:
            # rebind rather than resize: the traceback may still hold views
            self._buffer = self._buffer[done:]
            self.bytes_flushed += done
            raise LogWriteError(f"log write failed: {exc}", self.bytes_flushed) from exc
        self._buffer = bytearray()
        self.bytes_flushed += done

    def sync(self) -> None:
        """Push buffered bytes to storage and ask the OS to make them durable."""
        if self._buffer:
            self._drain()
        flush = getattr(self._storage, "flush", None)
        if flush is not None:
            flush()
        try:
            os.fsync(self._storage.fileno())
        except (AttributeError, OSError, ValueError):
            pass

    def close(self) -> None:
        if self.closed:
            return
        try:
            if self._buffer:
                self._drain()
            flush = getattr(self._storage, "flush", None)
            if flush is not None:
                flush()
        finally:
            self.closed = True
            if self._owns_storage:
                self._storage.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _read_exact(stream, n: int) -> bytes:
    chunks = []
    while n:
        chunk = stream.read(n)
        if not chunk:
            break
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def iter_frames(stream: BinaryIO):
    """Yield ``(offset, frame_bytes)`` for each record after validating the header."""
    header = _read_exact(stream, FILE_HEADER_SIZE)
    if len(header) < FILE_HEADER_SIZE:
        raise LogFormatError("truncated file header", 0)
    magic, version = FILE_HEADER.unpack(header)
    if magic != MAGIC:
        raise LogFormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise LogFormatError(f"unsupported version {version}", 4)
    offset = FILE_HEADER_SIZE
    while True:
        prefix = _read_exact(stream, 4)
        if not prefix:
            return
        if len(prefix) < 4:
            raise LogFormatError("truncated record length", offset)
        (record_len,) = struct.unpack("<I", prefix)
        if record_len < RECORD_HEADER_SIZE + ALERT_HEADER_SIZE:
            raise LogFormatError(f"implausible record_len {record_len}", offset)
        rest = _read_exact(stream, record_len - 4)
        if len(rest) < record_len - 4:
            raise LogFormatError(
                f"truncated record: {record_len} bytes declared, "
                f"{len(rest) + 4} present",
                offset,
            )
        yield offset, prefix + rest
        offset += record_len


def iter_records(stream: BinaryIO, with_offsets: bool = False):
    for offset, frame in iter_frames(stream):
        try:
            record = decode_record(frame)
        except (ValueError, struct.error) as exc:
            raise LogFormatError(f"corrupt record: {exc}", offset) from None
        yield (offset, record) if with_offsets else record


def read_records(path, with_offsets: bool = False):
    """Yield the records of the log at ``path`` in append order."""
    with open(path, "rb") as f:
        yield from iter_records(f, with_offsets)
