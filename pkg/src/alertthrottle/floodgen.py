"""
Synthetic alert floods.

Floods are either identical repeats of a template alert or, like the
Stick/Snot tools, repeats with some fields randomised per alert. The random
source is a plain 64-bit LCG (Knuth's MMIX constants) so the same seed gives
the same flood on any platform and in any language::

    state = state * 6364136223846793005 + 1442695040888963407  (mod 2**64)

Each draw advances the state once and uses its high 32 bits.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .alert import Alert, FieldId

LCG_MULTIPLIER = 6364136223846793005
LCG_INCREMENT = 1442695040888963407
_MASK64 = (1 << 64) - 1

# payload length used when modulating a template with an empty payload
DEFAULT_MODULATED_PAYLOAD = 16

_FIELD_BITS = {
    FieldId.SRC_ADDR: 32,
    FieldId.DST_ADDR: 32,
    FieldId.SRC_PORT: 16,
    FieldId.DST_PORT: 16,
    FieldId.PROTOCOL: 8,
    FieldId.TOS: 8,
}


class Lcg64:
    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next32(self) -> int:
        self.state = (self.state * LCG_MULTIPLIER + LCG_INCREMENT) & _MASK64
        return self.state >> 32


class Arrival(enum.Enum):
    UNIFORM = "uniform"
    FRONT_LOADED = "front_loaded"


DEFAULT_BASE_ALERT = Alert(
    timestamp_ms=0,
    generator_id=1,
    signature_id=109,
    src_addr=0x0A000001,  # 10.0.0.1
    dst_addr=0x0A000002,  # 10.0.0.2
    src_port=1024,
    dst_port=31337,
    protocol=17,
    tos=0,
)


@dataclass(frozen=True)
class FloodSpec:
    count: int
    duration_ms: int = 0
    base_alert: Alert = DEFAULT_BASE_ALERT
    modulate: frozenset = field(default_factory=frozenset)
    seed: int = 0
    arrival: Arrival = Arrival.UNIFORM

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.duration_ms < 0:
            raise ValueError("duration_ms must be >= 0")
        object.__setattr__(self, "modulate", frozenset(FieldId(f) for f in self.modulate))


def timestamps(count: int, duration_ms: int, start_ms: int = 0, arrival=Arrival.UNIFORM):
    """Event times for ``count`` alerts spanning ``duration_ms``.

    UNIFORM spacing puts alert ``i`` at ``start + i * duration // (count - 1)``,
    so the first and last alerts sit exactly on the span's ends and the
    integer remainder is spread by flooring.
    """
    if arrival is Arrival.FRONT_LOADED or count == 1:
        for _ in range(count):
            yield start_ms
        return
    span = count - 1
    for i in range(count):
        yield start_ms + i * duration_ms // span


def _draw(rng: Lcg64, fid: FieldId, base: Alert):
    if fid is FieldId.PAYLOAD:
        n = len(base.payload) or DEFAULT_MODULATED_PAYLOAD
        out = bytearray()
        while len(out) < n:
            out += rng.next32().to_bytes(4, "little")
        return bytes(out[:n])
    return rng.next32() >> (32 - _FIELD_BITS[fid])


def generate(spec: FloodSpec):
    """Yield the alerts of ``spec`` in timestamp order."""
    base = spec.base_alert
    rng = Lcg64(spec.seed)
    modulated = sorted(spec.modulate)
    for ts in timestamps(spec.count, spec.duration_ms, base.timestamp_ms, spec.arrival):
        if not modulated:
            yield Alert(
                ts, base.generator_id, base.signature_id, base.src_addr, base.dst_addr,
                base.src_port, base.dst_port, base.protocol, base.tos, base.payload,
            )
            continue
        values = {
            "src_addr": base.src_addr,
            "dst_addr": base.dst_addr,
            "src_port": base.src_port,
            "dst_port": base.dst_port,
            "protocol": base.protocol,
            "tos": base.tos,
            "payload": base.payload,
        }
        for fid in modulated:
            values[fid.attr] = _draw(rng, fid, base)
        yield Alert(ts, base.generator_id, base.signature_id, **values)
