"""Token bucket throttling and run-length/delta compression of IDS alert floods."""

from .alert import Alert, FieldId, format_alert, parse_alert, serialize_alert
from .floodgen import Arrival, FloodSpec, generate
from .logstore import LogRecord, LogWriter, RecordMode, read_records
from .pipeline import Pipeline, PipelineStats, process, stats_report
from .runcodec import Run, RunMode, expand_record
from .throttle import (
    BucketConfig,
    FilterHierarchy,
    OverLimitPolicy,
    TokenBucket,
    UnmatchedPolicy,
    Verdict,
    load_hierarchy,
)

__version__ = "0.1.0"
