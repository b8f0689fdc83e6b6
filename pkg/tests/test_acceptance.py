"""Exit criteria for the build. Run with ``pytest tests/test_acceptance.py``;
a PASS/FAIL line per criterion is printed in the terminal summary.

Expected byte counts are frozen from layout arithmetic over the scalar
token bucket oracle (tests/oracle.py), never from the package itself.
"""

import io
import math
import random
import struct
import time
from pathlib import Path

import pytest

from alertthrottle.alert import Alert, FieldId
from alertthrottle.cli import main
from alertthrottle.floodgen import DEFAULT_BASE_ALERT, FloodSpec, generate
from alertthrottle.logstore import LogRecord, LogWriter, iter_records
from alertthrottle.pipeline import process
from alertthrottle.runcodec import RunMode
from alertthrottle.throttle import BucketConfig, FilterHierarchy, OverLimitPolicy, TokenBucket, Verdict

import make_golden
import oracle

GOLDEN = Path(__file__).parent / "golden"
FILE_HEADER = 8
RECORD_OVERHEAD = 16


def flood_hierarchy(policy=OverLimitPolicy.COMPRESS):
    # token rate 1/s, bucket 10, applied to the flooded signature
    h = FilterHierarchy()
    h.add_signature(DEFAULT_BASE_ALERT.generator_id, DEFAULT_BASE_ALERT.signature_id,
                    BucketConfig(1, 1, 10), policy)
    return h


def flood(count, payload=b""):
    base = Alert(0, 1, 109, 0x0A000001, 0x0A000002, 1024, 31337, 17, 0, payload)
    return generate(FloodSpec(count=count, duration_ms=80_000, base_alert=base, seed=7))


def run_stream(alerts, hierarchy, mode=RunMode.RLE_DELTA):
    storage = io.BytesIO()
    log = LogWriter(storage)
    stats = process(alerts, hierarchy, log, mode)
    log.close()
    return stats, storage.getvalue()


# --- 1 -------------------------------------------------------------------------

@pytest.mark.criterion("1", "throttling: 300,000-alert/80 s flood at 1/s, bucket 10 -> exactly 90 PASS, < 30 s")
def test_criterion_1_throttling():
    start = time.perf_counter()
    alerts = list(flood(300_000))
    stats, data = run_stream(alerts, flood_hierarchy(OverLimitPolicy.DROP))
    elapsed = time.perf_counter() - start

    expected = sum(oracle.bucket_verdicts([a.timestamp_ms for a in alerts], 1, 1, 10))
    assert expected == 90
    assert stats.passed == expected
    assert stats.over_limit == 300_000 - 90
    assert stats.alerts_in / stats.passed > 1000
    assert elapsed < 30, f"took {elapsed:.1f} s"


# --- 2 -------------------------------------------------------------------------

# 90 passes and 80 over-limit runs for both flood sizes (oracle)
RLE_ONLY_OVERLIMIT_BYTES = 80 * 48  # 3,840
DELTA_BYTES_32 = 907_658  # 8 + 90*48 + sum(48 + 3*(n-1)) over runs
DELTA_BYTES_288 = 951_178  # same with a 256-byte payload


@pytest.mark.criterion("2a", "compression: RLE_ONLY over-limit bytes identical for 300k and 600k floods")
def test_criterion_2a_rle_only_independent_of_length():
    sizes = {}
    for count in (300_000, 600_000):
        stats, data = run_stream(flood(count), flood_hierarchy(), RunMode.RLE_ONLY)
        assert stats.passed == 90
        overlimit = len(data) - FILE_HEADER - stats.passed * 48
        sizes[count] = overlimit
    assert sizes[300_000] == sizes[600_000] == RLE_ONLY_OVERLIMIT_BYTES


@pytest.mark.criterion("2b-i", "compression: RLE_DELTA ratio >= 10 for 32-byte alerts, exact bytes")
def test_criterion_2b_delta_ratio_minimal_alert():
    stats, data = run_stream(flood(300_000), flood_hierarchy())
    assert len(data) == stats.bytes_logged == DELTA_BYTES_32
    assert stats.bytes_uncompressed == 300_000 * 32
    assert stats.compression_ratio >= 10


@pytest.mark.criterion("2b-ii", "compression: RLE_DELTA ratio >= 100 with a 256-byte payload, exact bytes")
def test_criterion_2b_delta_ratio_256_byte_payload():
    payload = bytes(range(256))
    stats, data = run_stream(flood(300_000, payload), flood_hierarchy())
    assert len(data) == stats.bytes_logged == DELTA_BYTES_288
    assert stats.bytes_uncompressed == 300_000 * 288
    assert stats.compression_ratio >= 100, (
        f"ratio {float(stats.compression_ratio):.3f}: each repeat costs 3 bytes against "
        f"288 uncompressed, so no 256-byte flood can exceed 96"
    )


# --- 3 -------------------------------------------------------------------------

ALL_FIELDS = ",".join(["src", "dst", "sport", "dport", "proto", "tos", "payload"])


@pytest.mark.criterion("3", "lossless drill-down: 1,000 random streams gen -> run -> drill --expand byte-identical")
def test_criterion_3_lossless_drill_down(tmp_path):
    rng = random.Random(20031)
    flood_path = tmp_path / "flood.ndjson"
    log_path = tmp_path / "run.atl"
    cfg_path = tmp_path / "h.yml"
    mismatches = []
    for case in range(1000):
        count = rng.randint(1, 500)
        duration = rng.randint(0, 65_535 * max(count - 1, 0))
        gen_args = ["gen", "--count", str(count), "--duration-ms", str(duration),
                    "--seed", str(rng.getrandbits(64)), "--modulate", ALL_FIELDS,
                    "--start-ms", str(rng.randint(0, 2**40)),
                    "--payload", rng.randbytes(rng.randint(0, 24)).hex(),
                    "--out", str(flood_path)]
        if rng.random() < 0.1:
            gen_args.append("--front-loaded")
        assert main(gen_args, io.StringIO()) == 0
        cfg_path.write_text(
            f"- {{scope: 'sig:1:109', rate: {rng.randint(0, 50)}/{rng.randint(1, 10)}, "
            f"bucket: {rng.randint(1, 12)}, overlimit: compress}}\n"
        )
        assert main(["run", "--config", str(cfg_path), "--in", str(flood_path),
                     "--log", str(log_path), "--mode", "delta"], io.StringIO()) == 0
        out = io.StringIO()
        assert main(["drill", "--log", str(log_path), "--expand"], out) == 0
        if out.getvalue() != flood_path.read_text():
            mismatches.append(case)
    assert mismatches == []


# --- 4 -------------------------------------------------------------------------

@pytest.mark.criterion("4", "rate bound: 1,000 random traces, every window PASS <= B + floor(r*(t1-t0))")
def test_criterion_4_rate_bound():
    rng = random.Random(1986)
    violations = 0
    for _ in range(1000):
        num, den, size = rng.randint(0, 5000), rng.randint(1, 1000), rng.randint(1, 20)
        n = rng.randint(1, 200)
        t, times = rng.randint(0, 10**9), []
        for _ in range(n):
            t += rng.choice((0, rng.randint(0, 50), rng.randint(0, 5000)))
            times.append(t)
        bucket = TokenBucket(BucketConfig(num, den, size), last_refill_ms=times[0])
        got = [bucket.try_consume(x) is Verdict.PASS for x in times]
        assert got == oracle.bucket_verdicts(times, num, den, size, start_ms=times[0])
        passes = [x for x, ok in zip(times, got) if ok]
        if passes and oracle.worst_window_excess(passes, num, den, size) > 0:
            violations += 1
    assert violations == 0


# --- 5 -------------------------------------------------------------------------

@pytest.mark.criterion("5", "run split: 65,535 ms gap stays in one run, 65,536 ms splits")
def test_criterion_5_run_split_boundary():
    h = FilterHierarchy()
    h.add_signature(1, 109, BucketConfig(0, 1, 1), OverLimitPolicy.COMPRESS)
    t1 = 1000
    t2 = t1 + 65_535
    t3 = t2 + 65_536
    alerts = [Alert(t, 1, 109, 1, 2, 3, 4, 17, 0) for t in (0, t1, t2, t3)]
    stats, data = run_stream(alerts, h)
    records = list(iter_records(io.BytesIO(data)))
    assert [(r.first_alert.timestamp_ms, r.run_count) for r in records] == [
        (0, 1), (t1, 2), (t3, 1)
    ]
    assert records[1].deltas[0].ts_delta_ms == 65_535


# --- 6 -------------------------------------------------------------------------

class CountingStorage(io.RawIOBase):
    def __init__(self):
        self.writes = 0
        self.size = 0

    def writable(self):
        return True

    def write(self, b):
        self.writes += 1
        self.size += len(b)
        return len(b)


@pytest.mark.criterion("6", "flush discipline: 10,000 small records -> <= ceil(bytes/65536) + 2 writes")
def test_criterion_6_flush_discipline():
    storage = CountingStorage()
    log = LogWriter(storage, buffer_size=64 * 1024)
    for i in range(10_000):
        log.append(LogRecord(Alert(i, 1, 109, 1, 2, 3, 4, 17, 0)))
    log.sync()
    log.close()
    assert storage.size == 8 + 10_000 * 48
    assert storage.writes <= math.ceil(storage.size / 65536) + 2


# --- 7 -------------------------------------------------------------------------

@pytest.mark.criterion("7", "format stability: golden .atl fixtures byte-compare")
def test_criterion_7_golden_fixtures(tmp_path):
    make_golden.build(tmp_path / "a")
    make_golden.build(tmp_path / "b")
    for path in sorted(GOLDEN.iterdir()):
        if path.suffix in (".atl", ".ndjson"):
            fresh = (tmp_path / "a" / path.name).read_bytes()
            assert fresh == path.read_bytes(), path.name
            assert fresh == (tmp_path / "b" / path.name).read_bytes()


@pytest.mark.criterion("7", "format stability: golden .atl fixtures byte-compare")
def test_criterion_7_hand_assembled_log():
    # pass, then a 3-alert run: identical repeat, then a src/tos change
    h = FilterHierarchy()
    h.add_signature(1, 109, BucketConfig(0, 1, 1), OverLimitPolicy.COMPRESS)
    base = dict(generator_id=1, signature_id=109, src_addr=0x0A000001, dst_addr=0x0A000002,
                src_port=1024, dst_port=31337, protocol=17, tos=0, payload=b"\xce\x63")
    a0 = Alert(1000, **base)
    a1 = Alert(1010, **base)
    a2 = Alert(1010 + 300, **base)
    a3 = Alert(1310 + 65535, **{**base, "src_addr": 0xC0A80001, "tos": 4})
    _, data = run_stream([a0, a1, a2, a3], h)

    def alert_bytes(ts, src, tos):
        return struct.pack("<QIIIIHHBBH", ts, 1, 109, src, 0x0A000002, 1024, 31337, 17, tos, 2) + b"\xce\x63"

    rec1 = struct.pack("<IIB7x", 16 + 34, 1, 1) + alert_bytes(1000, 0x0A000001, 0)
    deltas = struct.pack("<HB", 300, 0) + struct.pack("<HB", 65535, 2) + b"\x01" + struct.pack("<I", 0xC0A80001) + b"\x06\x04"
    rec2 = struct.pack("<IIB7x", 16 + 34 + len(deltas), 3, 1) + alert_bytes(1010, 0x0A000001, 0) + deltas
    assert data == b"ATL1" + struct.pack("<H", 1) + b"\x00\x00" + rec1 + rec2


# --- 8 -------------------------------------------------------------------------

@pytest.mark.criterion("8", "original CPU/elapsed timings: hardware-specific, not reproducible")
def test_criterion_8_timings_not_gated():
    pytest.skip("absolute timings depend on the host; throughput is covered by criteria 1-2")
