"""
Command line front end.

    alertthrottle gen   --count N --duration-ms D --seed S [--modulate src,dst] [--out FILE]
    alertthrottle run   --config HIER.yml --in FILE --log OUT.atl [--stats] [--mode rle|delta]
    alertthrottle drill --log FILE [--record K] [--expand]
    alertthrottle compare --config HIER.yml --in FILE

Exit status: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import ipaddress
import sys
from contextlib import nullcontext

from . import __version__
from .alert import Alert, FieldId, format_alert, read_alerts
from .errors import AlertThrottleError, PipelineError
from .floodgen import DEFAULT_BASE_ALERT, Arrival, FloodSpec, generate
from .logstore import LogWriter, read_records
from .pipeline import compare_techniques, process, stats_report
from .runcodec import RunMode, expand_record
from .throttle import load_hierarchy

FIELD_NAMES = {
    "src": FieldId.SRC_ADDR,
    "dst": FieldId.DST_ADDR,
    "sport": FieldId.SRC_PORT,
    "dport": FieldId.DST_PORT,
    "proto": FieldId.PROTOCOL,
    "tos": FieldId.TOS,
    "payload": FieldId.PAYLOAD,
}


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _nonneg_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _ipv4(text):
    try:
        return int(ipaddress.IPv4Address(text))
    except ipaddress.AddressValueError:
        raise argparse.ArgumentTypeError(f"not an IPv4 address: {text!r}") from None


def _hex(text):
    try:
        return bytes.fromhex(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a hex string: {text!r}") from None


def _field_list(text):
    fields = set()
    for name in filter(None, (part.strip() for part in text.split(","))):
        if name not in FIELD_NAMES:
            raise argparse.ArgumentTypeError(
                f"unknown field {name!r}; choose from {', '.join(FIELD_NAMES)}"
            )
        fields.add(FIELD_NAMES[name])
    return frozenset(fields)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alertthrottle",
        description="Throttle and compress IDS alert floods.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    base = DEFAULT_BASE_ALERT
    gen = sub.add_parser("gen", help="generate a synthetic alert flood")
    gen.add_argument("--count", type=_positive_int, required=True)
    gen.add_argument("--duration-ms", type=_nonneg_int, required=True)
    gen.add_argument("--seed", type=_nonneg_int, default=0)
    gen.add_argument("--modulate", type=_field_list, default=frozenset(),
                     help="comma-separated fields to randomise: " + ",".join(FIELD_NAMES))
    gen.add_argument("--front-loaded", action="store_true",
                     help="emit every alert at the start time")
    gen.add_argument("--start-ms", type=_nonneg_int, default=0)
    gen.add_argument("--gen", dest="gen_id", type=_nonneg_int, default=base.generator_id)
    gen.add_argument("--sig", type=_nonneg_int, default=base.signature_id)
    gen.add_argument("--src", type=_ipv4, default=base.src_addr)
    gen.add_argument("--dst", type=_ipv4, default=base.dst_addr)
    gen.add_argument("--sport", type=_nonneg_int, default=base.src_port)
    gen.add_argument("--dport", type=_nonneg_int, default=base.dst_port)
    gen.add_argument("--proto", type=_nonneg_int, default=base.protocol)
    gen.add_argument("--tos", type=_nonneg_int, default=base.tos)
    gen.add_argument("--payload", type=_hex, default=base.payload, help="template payload as hex")
    gen.add_argument("--out", help="output file (default: stdout)")

    run = sub.add_parser("run", help="filter an alert stream into a log")
    run.add_argument("--config", required=True, help="filter hierarchy config (YAML/JSON)")
    run.add_argument("--in", dest="infile", required=True, help="ingest-format alert file")
    run.add_argument("--log", required=True, help="output .atl log")
    run.add_argument("--mode", choices=[RunMode.RLE_DELTA.value, RunMode.RLE_ONLY.value],
                     default=RunMode.RLE_DELTA.value,
                     help="what compressed runs keep: per-alert deltas or just the count")
    run.add_argument("--buffer-size", type=_positive_int, default=64 * 1024)
    run.add_argument("--stats", action="store_true", help="print the statistics table")

    drill = sub.add_parser("drill", help="inspect or expand a log")
    drill.add_argument("--log", required=True)
    drill.add_argument("--record", type=_nonneg_int, help="0-based record index")
    drill.add_argument("--expand", action="store_true",
                       help="print every reconstructed alert in ingest format")

    compare = sub.add_parser("compare", help="tabulate log sizes per compression technique")
    compare.add_argument("--config", required=True)
    compare.add_argument("--in", dest="infile", required=True)
    return parser


def _check_ranges(args, parser):
    limits = {"gen_id": 0xFFFFFFFF, "sig": 0xFFFFFFFF, "sport": 0xFFFF,
              "dport": 0xFFFF, "proto": 0xFF, "tos": 0xFF}
    for name, limit in limits.items():
        if getattr(args, name) > limit:
            parser.error(f"--{name.replace('_id', '')} out of range")
    if len(args.payload) > 0xFFFF:
        parser.error("--payload longer than 65535 bytes")


def cmd_gen(args, out) -> int:
    base = Alert(args.start_ms, args.gen_id, args.sig, args.src, args.dst,
                 args.sport, args.dport, args.proto, args.tos, args.payload)
    spec = FloodSpec(
        count=args.count,
        duration_ms=args.duration_ms,
        base_alert=base,
        modulate=args.modulate,
        seed=args.seed,
        arrival=Arrival.FRONT_LOADED if args.front_loaded else Arrival.UNIFORM,
    )
    target = open(args.out, "w") if args.out else nullcontext(out)
    with target as f:
        f.writelines(format_alert(a) + "\n" for a in generate(spec))
    return 0


def cmd_run(args, out) -> int:
    hierarchy = load_hierarchy(args.config)
    with open(args.infile) as f, LogWriter(args.log, args.buffer_size) as log:
        stats = process(read_alerts(f), hierarchy, log, RunMode(args.mode))
    if args.stats:
        out.write(stats_report(stats))
    return 0


def composite_line(record) -> str:
    line = format_alert(record.first_alert)
    if record.run_count > 1:
        line += f" repeated {record.run_count} times"
    return line


def cmd_drill(args, out) -> int:
    found = False
    for index, record in enumerate(read_records(args.log)):
        if args.record is not None and index != args.record:
            continue
        found = True
        if args.expand:
            out.writelines(format_alert(a) + "\n" for a in expand_record(record))
        else:
            out.write(f"{index}\t{composite_line(record)}\n")
        if args.record is not None:
            break
    if args.record is not None and not found:
        raise AlertThrottleError(f"no such record: {args.record}")
    return 0


def cmd_compare(args, out) -> int:
    with open(args.infile) as f:
        alerts = list(read_alerts(f))
    out.write(compare_techniques(alerts, lambda: load_hierarchy(args.config)))
    return 0


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "drill": cmd_drill, "compare": cmd_compare}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    if args.command == "gen":
        try:
            _check_ranges(args, parser)
        except SystemExit as exc:
            return exc.code
    try:
        return COMMANDS[args.command](args, out)
    except FileNotFoundError as exc:
        print(f"alertthrottle: no such file: {exc.filename}", file=sys.stderr)
    except PipelineError as exc:
        print(f"alertthrottle: {exc} (after {exc.stats.alerts_in} alerts)", file=sys.stderr)
    except (AlertThrottleError, OSError) as exc:
        print(f"alertthrottle: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
