"""
Run-length and delta coding of over-limit alerts.

A run starts with the first over-limit alert seen by a bucket. Every later
over-limit alert bumps the count and, in ``RLE_DELTA`` mode, appends a delta
entry: the 16-bit millisecond gap since the previous alert plus the full new
value of every field that changed. Decoding replays the deltas, so a run
can be expanded back into the exact alerts that formed it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .alert import Alert, FieldId
from .errors import CorruptRunError, RecordTooLargeError, RunOrderError
from .logstore import (
    MAX_RECORD_LEN,
    MAX_RUN_COUNT,
    MAX_TS_DELTA,
    RECORD_HEADER_SIZE,
    DeltaEntry,
    FieldChange,
    LogRecord,
    RecordMode,
)

# (FieldId, Alert attribute), in on-disk code order
_DELTA_FIELDS = tuple((fid, fid.attr) for fid in FieldId)
_IDENTICAL_DELTA_SIZE = 3


class RunMode(enum.Enum):
    DROP = "drop"
    RLE_ONLY = "rle"
    RLE_DELTA = "delta"


def diff_fields(prev: Alert, cur: Alert) -> tuple:
    """Field changes turning ``prev`` into ``cur`` (timestamp excluded)."""
    return tuple(
        FieldChange(fid, getattr(cur, attr))
        for fid, attr in _DELTA_FIELDS
        if getattr(cur, attr) != getattr(prev, attr)
    )


def apply_changes(alert: Alert, ts: int, changes) -> Alert:
    values = {fid.attr: value for fid, value in changes}
    return Alert(
        ts,
        alert.generator_id,
        alert.signature_id,
        values.get("src_addr", alert.src_addr),
        values.get("dst_addr", alert.dst_addr),
        values.get("src_port", alert.src_port),
        values.get("dst_port", alert.dst_port),
        values.get("protocol", alert.protocol),
        values.get("tos", alert.tos),
        values.get("payload", alert.payload),
    )


def expand(first_alert: Alert, count: int, mode: RecordMode, deltas) -> list[Alert]:
    """Reconstruct the alerts of a run.

    RLE_ONLY runs come back as ``count`` copies of the first alert: the
    timing of the rest was never stored.
    """
    if mode is RecordMode.RLE_ONLY:
        if deltas:
            raise CorruptRunError("RLE_ONLY run carries delta entries")
        return [first_alert] * count
    if len(deltas) != count - 1:
        raise CorruptRunError(
            f"run of {count} alerts has {len(deltas)} delta entries, expected {count - 1}"
        )
    alerts = [first_alert]
    cur = first_alert
    for entry in deltas:
        ts = cur.timestamp_ms + entry.ts_delta_ms
        if entry.changes:
            cur = apply_changes(cur, ts, entry.changes)
        else:
            cur = Alert(
                ts, cur.generator_id, cur.signature_id, cur.src_addr, cur.dst_addr,
                cur.src_port, cur.dst_port, cur.protocol, cur.tos, cur.payload,
            )
        alerts.append(cur)
    return alerts


def expand_record(record: LogRecord) -> list[Alert]:
    return expand(record.first_alert, record.run_count, record.mode, record.deltas)


@dataclass
class Run:
    first_alert: Alert
    mode: RunMode = RunMode.RLE_DELTA
    count: int = 1
    deltas: list = field(default_factory=list)
    last_alert: Alert = None
    encoded_size: int = 0

    def __post_init__(self):
        if self.last_alert is None:
            self.last_alert = self.first_alert
        if not self.encoded_size:
            self.encoded_size = RECORD_HEADER_SIZE + self.first_alert.size

    @classmethod
    def begin(cls, alert: Alert, mode: RunMode = RunMode.RLE_DELTA) -> Run:
        return cls(alert, mode)

    @property
    def record_mode(self) -> RecordMode:
        return RecordMode.RLE_DELTA if self.mode is RunMode.RLE_DELTA else RecordMode.RLE_ONLY

    def accepts(self, alert: Alert) -> bool:
        """Whether ``alert`` belongs to the same rule as this run."""
        first = self.first_alert
        return (
            alert.generator_id == first.generator_id
            and alert.signature_id == first.signature_id
        )

    def extend(self, alert: Alert) -> bool:
        """Add ``alert`` to the run.

        Returns False, leaving the run untouched, when the alert cannot be
        represented: its gap from the previous alert exceeds 65535 ms, the
        counter is saturated, or the record would outgrow its length field.
        The caller then flushes this run and begins a new one.
        """
        if not self.accepts(alert):
            raise ValueError(
                "alerts of a run must share generator_id and signature_id"
            )
        gap = alert.timestamp_ms - self.last_alert.timestamp_ms
        if gap < 0:
            raise RunOrderError(
                f"alert at {alert.timestamp_ms} ms precedes the run's last alert "
                f"at {self.last_alert.timestamp_ms} ms"
            )
        if gap > MAX_TS_DELTA or self.count >= MAX_RUN_COUNT:
            return False
        if self.mode is RunMode.RLE_DELTA:
            changes = diff_fields(self.last_alert, alert)
            entry = DeltaEntry(gap, changes)
            size = entry.size if changes else _IDENTICAL_DELTA_SIZE
            if self.encoded_size + size > MAX_RECORD_LEN:
                return False
            self.deltas.append(entry)
            self.encoded_size += size
        self.count += 1
        self.last_alert = alert
        return True

    def decode(self) -> list[Alert]:
        return expand(self.first_alert, self.count, self.record_mode, self.deltas)

    def to_record(self) -> LogRecord:
        """The log record for this run; DROP runs keep only first alert and count."""
        if self.mode is RunMode.RLE_DELTA:
            record = LogRecord(self.first_alert, self.count, RecordMode.RLE_DELTA, tuple(self.deltas))
        else:
            record = LogRecord(self.first_alert, self.count, RecordMode.RLE_ONLY)
        if record.record_len > MAX_RECORD_LEN:
            raise RecordTooLargeError(
                f"run of {self.count} alerts encodes to {record.record_len} bytes"
            )
        return record


def run_begin(alert: Alert, mode: RunMode = RunMode.RLE_DELTA) -> Run:
    return Run.begin(alert, mode)


def run_extend(run: Run, alert: Alert) -> bool:
    return run.extend(alert)


def run_decode(run: Run) -> list[Alert]:
    return run.decode()


def run_flush(run: Run) -> LogRecord:
    return run.to_record()
