"""
Token bucket filters and a global/generator/signature hierarchy of them.

Credit is kept as integer millitokens so verdicts are bit-for-bit
reproducible. Buckets refill lazily from alert event time; there are no
timers. A hierarchy is conjunctive: an alert passes only if every bucket on
its chain has a whole token, and then one token is taken from each.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .alert import Alert
from .errors import ClockRegressionError, ConfigError

MILLI = 1000
DEFAULT_RATE = (1, 1)
DEFAULT_BUCKET_SIZE = 10


class Verdict(enum.Enum):
    PASS = "pass"
    OVER_LIMIT = "over_limit"


class OverLimitPolicy(enum.Enum):
    DROP = "drop"
    COMPRESS = "compress"


class UnmatchedPolicy(enum.Enum):
    # alerts with no generator or signature node bypass the filter entirely
    PASS_UNMATCHED = "pass_unmatched"
    # alerts with no generator or signature node are governed by the root alone
    ROOT_ONLY = "root_only"


@dataclass(frozen=True)
class BucketConfig:
    """Token rate as ``rate_num / rate_den`` tokens per second, plus capacity."""

    rate_num: int = DEFAULT_RATE[0]
    rate_den: int = DEFAULT_RATE[1]
    bucket_size: int = DEFAULT_BUCKET_SIZE

    def __post_init__(self):
        if self.rate_num < 0 or self.rate_den < 1:
            raise ValueError("token rate must be >= 0 with a positive denominator")
        if self.bucket_size < 1:
            raise ValueError("bucket_size must be >= 1")

    @property
    def capacity_millitokens(self) -> int:
        return self.bucket_size * MILLI

    def millitokens_for(self, elapsed_ms: int) -> int:
        # tokens/s * ms = millitokens
        return self.rate_num * elapsed_ms // self.rate_den


@dataclass(eq=False)
class TokenBucket:
    """One live token bucket. New buckets start full."""

    config: BucketConfig = field(default_factory=BucketConfig)
    credit_millitokens: int | None = None
    last_refill_ms: int = 0
    name: str = "bucket"
    overlimit: OverLimitPolicy = OverLimitPolicy.DROP
    # run of over-limit alerts accumulating against this bucket (see runcodec)
    active_run: Any = None

    def __post_init__(self):
        if self.credit_millitokens is None:
            self.credit_millitokens = self.config.capacity_millitokens

    @property
    def tokens(self) -> int:
        return self.credit_millitokens // MILLI

    def refill(self, now_ms: int) -> None:
        if now_ms < self.last_refill_ms:
            raise ClockRegressionError(
                f"{self.name}: event time {now_ms} ms precedes last refill at "
                f"{self.last_refill_ms} ms"
            )
        added = self.config.millitokens_for(now_ms - self.last_refill_ms)
        self.credit_millitokens = min(
            self.config.capacity_millitokens, self.credit_millitokens + added
        )
        self.last_refill_ms = now_ms

    def has_token(self) -> bool:
        return self.credit_millitokens >= MILLI

    def take(self) -> None:
        self.credit_millitokens -= MILLI

    def try_consume(self, alert_ts_ms: int) -> Verdict:
        self.refill(alert_ts_ms)
        if self.has_token():
            self.take()
            return Verdict.PASS
        return Verdict.OVER_LIMIT


@dataclass(frozen=True)
class FilterDecision:
    verdict: Verdict
    limiting_node: TokenBucket | None = None

    @property
    def passed(self) -> bool:
        return self.verdict is Verdict.PASS


GLOBAL = "global"


def node_name(generator_id: int | None = None, signature_id: int | None = None) -> str:
    if signature_id is not None:
        return f"sig:{generator_id}:{signature_id}"
    if generator_id is not None:
        return f"gen:{generator_id}"
    return GLOBAL


class FilterHierarchy:
    """Global root, per-generator nodes and per-signature leaves.

    ``root=None`` is an unlimited root: it never denies and holds no state.
    """

    def __init__(
        self,
        root: TokenBucket | None = None,
        default_policy: UnmatchedPolicy = UnmatchedPolicy.ROOT_ONLY,
    ):
        self.root = root
        self.generator_nodes: dict[int, TokenBucket] = {}
        self.signature_nodes: dict[tuple[int, int], TokenBucket] = {}
        self.default_policy = default_policy
        if root is not None:
            root.name = GLOBAL

    def set_root(self, config: BucketConfig, overlimit=OverLimitPolicy.DROP) -> TokenBucket:
        self.root = TokenBucket(config, name=GLOBAL, overlimit=overlimit)
        return self.root

    def add_generator(
        self, generator_id: int, config: BucketConfig, overlimit=OverLimitPolicy.DROP
    ) -> TokenBucket:
        node = TokenBucket(config, name=node_name(generator_id), overlimit=overlimit)
        self.generator_nodes[generator_id] = node
        return node

    def add_signature(
        self,
        generator_id: int,
        signature_id: int,
        config: BucketConfig,
        overlimit=OverLimitPolicy.DROP,
    ) -> TokenBucket:
        node = TokenBucket(
            config, name=node_name(generator_id, signature_id), overlimit=overlimit
        )
        self.signature_nodes[(generator_id, signature_id)] = node
        return node

    def nodes(self):
        if self.root is not None:
            yield self.root
        yield from self.generator_nodes.values()
        yield from self.signature_nodes.values()

    def chain(self, alert: Alert) -> list[TokenBucket]:
        """Buckets that govern ``alert``, leaf first."""
        chain = []
        sig = self.signature_nodes.get((alert.generator_id, alert.signature_id))
        if sig is not None:
            chain.append(sig)
        gen = self.generator_nodes.get(alert.generator_id)
        if gen is not None:
            chain.append(gen)
        if not chain and self.default_policy is UnmatchedPolicy.PASS_UNMATCHED:
            return chain
        if self.root is not None:
            chain.append(self.root)
        return chain

    def classify(self, alert: Alert, chain: list[TokenBucket] | None = None) -> FilterDecision:
        if chain is None:
            chain = self.chain(alert)
        ts = alert.timestamp_ms
        # check every node before refilling any, so a regression leaves no trace
        for node in chain:
            if ts < node.last_refill_ms:
                raise ClockRegressionError(
                    f"{node.name}: event time {ts} ms precedes last refill at "
                    f"{node.last_refill_ms} ms"
                )
        for node in chain:
            node.refill(ts)
        for node in chain:
            if not node.has_token():
                return FilterDecision(Verdict.OVER_LIMIT, node)
        for node in chain:
            node.take()
        return FilterDecision(Verdict.PASS)


# --- configuration -----------------------------------------------------------

_SCOPE_RE = re.compile(r"^(?:(global)|gen:(\d+)|sig:(\d+):(\d+))$")
_RATE_RE = re.compile(r"^\s*(\d+)\s*(?:/\s*(\d+)\s*)?$")
_ENTRY_KEYS = {"scope", "rate", "bucket", "overlimit"}


def parse_rate(value) -> tuple[int, int]:
    """Parse ``"num/den"`` or a bare integer into a (num, den) pair."""
    if isinstance(value, bool):
        raise ConfigError(f"bad rate {value!r}")
    if isinstance(value, int):
        num, den = value, 1
    else:
        m = _RATE_RE.match(str(value))
        if not m:
            raise ConfigError(f"bad rate {value!r}; expected <num>/<den>")
        num, den = int(m.group(1)), int(m.group(2) or 1)
    if den == 0 or num > 0xFFFFFFFF or den > 0xFFFFFFFF:
        raise ConfigError(f"bad rate {value!r}")
    return num, den


def hierarchy_from_entries(
    entries, default_policy: UnmatchedPolicy = UnmatchedPolicy.ROOT_ONLY
) -> FilterHierarchy:
    if not isinstance(entries, list):
        raise ConfigError("hierarchy config must be a list of filter entries")
    hierarchy = FilterHierarchy(default_policy=default_policy)
    seen = set()
    for i, entry in enumerate(entries):
        where = f"entry {i}"
        if not isinstance(entry, dict):
            raise ConfigError(f"{where}: not a mapping")
        unknown = set(entry) - _ENTRY_KEYS
        if unknown:
            raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
        if "scope" not in entry:
            raise ConfigError(f"{where}: missing 'scope'")
        m = _SCOPE_RE.match(str(entry["scope"]))
        if not m:
            raise ConfigError(f"{where}: bad scope {entry['scope']!r}")
        try:
            num, den = parse_rate(entry.get("rate", "1/1"))
            bucket = entry.get("bucket", DEFAULT_BUCKET_SIZE)
            if not isinstance(bucket, int) or isinstance(bucket, bool):
                raise ConfigError(f"bad bucket {bucket!r}")
            config = BucketConfig(num, den, bucket)
            policy = OverLimitPolicy(entry.get("overlimit", "drop"))
        except ConfigError as exc:
            raise ConfigError(f"{where}: {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None

        scope = m.group(0)
        if scope in seen:
            raise ConfigError(f"{where}: duplicate scope {scope!r}")
        seen.add(scope)
        if m.group(1):
            hierarchy.set_root(config, policy)
        elif m.group(2):
            hierarchy.add_generator(int(m.group(2)), config, policy)
        else:
            hierarchy.add_signature(int(m.group(3)), int(m.group(4)), config, policy)
    return hierarchy


def load_hierarchy(path, default_policy=UnmatchedPolicy.ROOT_ONLY) -> FilterHierarchy:
    """Load a hierarchy config (YAML or JSON list of filter entries)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        entries = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return hierarchy_from_entries(entries or [], default_policy)
