"""
Alert stream -> filter hierarchy -> drop/compress -> log.

Passing alerts are logged at once as single-alert records. Over-limit alerts
are dropped or folded into a run held on the bucket that denied them. A
bucket's run is flushed when a later alert on that bucket passes, when the
run cannot take the next alert (65535 ms gap, saturated counter, oversize
record), or at end of stream.
"""

from __future__ import annotations

import gzip
import io
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

from .alert import Alert, serialize_alert
from .errors import AlertThrottleError, PipelineError, RunOrderError
from .logstore import LogRecord, LogWriter
from .runcodec import Run, RunMode
from .throttle import FilterHierarchy, OverLimitPolicy

KB = 1024


@dataclass
class PipelineStats:
    alerts_in: int = 0
    passed: int = 0
    over_limit: int = 0
    dropped: int = 0
    compressed: int = 0
    records_written: int = 0
    bytes_uncompressed: int = 0
    bytes_logged: int = 0
    runs_flushed: int = 0
    max_run_length: int = 0
    mode: RunMode = RunMode.RLE_DELTA

    @property
    def compression_ratio(self) -> Fraction | None:
        if not self.bytes_logged or not self.alerts_in:
            return None
        return Fraction(self.bytes_uncompressed, self.bytes_logged)


class Pipeline:
    """Single-stream processor. Feed alerts in timestamp order, then :meth:`finish`."""

    def __init__(self, hierarchy: FilterHierarchy, log: LogWriter, mode: RunMode = RunMode.RLE_DELTA):
        if mode is RunMode.DROP:
            raise ValueError("use the 'drop' over-limit policy to discard alerts")
        self.hierarchy = hierarchy
        self.log = log
        self.mode = mode
        self.stats = PipelineStats(mode=mode)
        self._last_ts = None

    def _write(self, record: LogRecord) -> None:
        self.log.append(record)
        self.stats.records_written += 1

    def _flush_run(self, node) -> None:
        run = node.active_run
        node.active_run = None
        self._write(run.to_record())
        self.stats.runs_flushed += 1
        if run.count > self.stats.max_run_length:
            self.stats.max_run_length = run.count

    def feed(self, alert: Alert) -> None:
        stats = self.stats
        if self._last_ts is not None and alert.timestamp_ms < self._last_ts:
            raise RunOrderError(
                f"alert at {alert.timestamp_ms} ms arrived after one at {self._last_ts} ms"
            )
        chain = self.hierarchy.chain(alert)
        decision = self.hierarchy.classify(alert, chain)
        self._last_ts = alert.timestamp_ms
        stats.alerts_in += 1
        stats.bytes_uncompressed += alert.size

        if decision.passed:
            stats.passed += 1
            for node in chain:
                if node.active_run is not None:
                    self._flush_run(node)
            self._write(LogRecord(alert))
            return

        stats.over_limit += 1
        node = decision.limiting_node
        if node.overlimit is OverLimitPolicy.DROP:
            stats.dropped += 1
            return
        stats.compressed += 1
        run = node.active_run
        if run is not None and run.accepts(alert) and run.extend(alert):
            return
        if run is not None:
            self._flush_run(node)
        node.active_run = Run.begin(alert, self.mode)

    def finish(self) -> PipelineStats:
        """Flush every open run. Does not close the log."""
        for node in self.hierarchy.nodes():
            if node.active_run is not None:
                self._flush_run(node)
        self.stats.bytes_logged = self.log.bytes_appended
        return self.stats


def process(alerts, hierarchy: FilterHierarchy, log: LogWriter, mode=RunMode.RLE_DELTA) -> PipelineStats:
    """Run ``alerts`` through the pipeline and return the stream's stats.

    On failure a :class:`PipelineError` is raised with the partial stats
    attached as ``.stats``; the original error is its ``__cause__``.
    """
    pipe = Pipeline(hierarchy, log, mode)
    try:
        for alert in alerts:
            pipe.feed(alert)
        return pipe.finish()
    except (AlertThrottleError, OSError) as exc:
        pipe.stats.bytes_logged = log.bytes_appended
        raise PipelineError(str(exc), pipe.stats) from exc


# --- reporting ---------------------------------------------------------------

MODE_LABELS = {
    RunMode.RLE_ONLY: "RLE Only",
    RunMode.RLE_DELTA: "RLE With Timestamp Delta",
}


def format_kb(nbytes: int) -> str:
    return f"{(Decimal(nbytes) / KB).quantize(Decimal('0.001'), ROUND_HALF_UP)}"


def format_ratio(ratio: Fraction | None) -> str:
    if ratio is None:
        return "—"
    value = Decimal(ratio.numerator) / Decimal(ratio.denominator)
    return f"{value.quantize(Decimal('0.001'), ROUND_HALF_UP)}"


def format_table(rows) -> str:
    """Fixed-width table of ``(label, size_bytes, ratio)`` rows."""
    header = ("Algorithm", "Data Size (Kilo Bytes)", "Compression")
    cells = [header] + [(label, format_kb(size), format_ratio(ratio)) for label, size, ratio in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(3)]
    lines = []
    for n, (label, size, ratio) in enumerate(cells):
        lines.append(f"{label:<{widths[0]}}  {size:>{widths[1]}}  {ratio:>{widths[2]}}")
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def stats_report(stats: PipelineStats) -> str:
    """Counters plus a size/compression table for one pipeline run."""
    if stats.alerts_in:
        uncompressed_ratio = Fraction(1)
    else:
        uncompressed_ratio = None
    label = MODE_LABELS.get(stats.mode, stats.mode.value)
    if stats.dropped and not stats.compressed:
        label = "Token Bucket (drop)"
    table = format_table(
        [
            ("Uncompressed", stats.bytes_uncompressed, uncompressed_ratio),
            (label, stats.bytes_logged, stats.compression_ratio),
        ]
    )
    counters = (
        f"alerts in:       {stats.alerts_in}\n"
        f"passed:          {stats.passed}\n"
        f"over limit:      {stats.over_limit} "
        f"(dropped {stats.dropped}, compressed {stats.compressed})\n"
        f"records written: {stats.records_written}\n"
        f"runs flushed:    {stats.runs_flushed}\n"
        f"max run length:  {stats.max_run_length}\n"
    )
    return counters + "\n" + table + "\n"


def compare_techniques(alerts, make_hierarchy) -> str:
    """Table of log sizes for the same stream under each technique.

    ``make_hierarchy`` builds a fresh hierarchy per pass (buckets are
    stateful). The gzip row compresses the uncompressed alert serialisation
    with default settings, for reference only.
    """
    alerts = list(alerts)
    raw = b"".join(serialize_alert(a) for a in alerts)
    rows = [("Uncompressed", len(raw), Fraction(1) if alerts else None)]
    for mode in (RunMode.RLE_ONLY, RunMode.RLE_DELTA):
        log = LogWriter(io.BytesIO())
        stats = process(alerts, make_hierarchy(), log, mode)
        log.close()
        rows.append((MODE_LABELS[mode], stats.bytes_logged, stats.compression_ratio))
    zipped = len(gzip.compress(raw, mtime=0))
    rows.append(("Gzip", zipped, Fraction(len(raw), zipped) if alerts else None))
    return format_table(rows) + "\n"
