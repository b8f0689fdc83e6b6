from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from alertthrottle.alert import Alert, FieldId
from alertthrottle.floodgen import (
    DEFAULT_BASE_ALERT,
    Arrival,
    FloodSpec,
    Lcg64,
    generate,
    timestamps,
)

import oracle


def test_lcg_reference_values():
    # state_1 = 0 * a + c; output is the high half
    rng = Lcg64(0)
    assert rng.next32() == 1442695040888963407 >> 32
    s2 = (1442695040888963407 * 6364136223846793005 + 1442695040888963407) % 2**64
    assert rng.next32() == s2 >> 32


def test_even_spacing():
    out = list(generate(FloodSpec(count=3, duration_ms=2000)))
    assert [a.timestamp_ms for a in out] == [0, 1000, 2000]
    assert len({(a.src_addr, a.dst_addr, a.payload) for a in out}) == 1


def test_remainder_spread_and_start_offset():
    ts = list(timestamps(4, 10, start_ms=100))
    assert ts == [100, 103, 106, 110]


def test_front_loaded():
    base = Alert(5000, 1, 1, 1, 1, 1, 1, 1, 1)
    out = list(generate(FloodSpec(count=5, duration_ms=9999, base_alert=base, arrival=Arrival.FRONT_LOADED)))
    assert [a.timestamp_ms for a in out] == [5000] * 5


def test_table1_shaped_flood():
    out = list(generate(FloodSpec(count=300_000, duration_ms=80_000, seed=7)))
    assert len(out) == 300_000
    assert out[0].timestamp_ms == 0 and out[-1].timestamp_ms == 80_000
    assert [a.timestamp_ms for a in out[:: 10_000]] == oracle.uniform_times(300_000, 80_000)[:: 10_000]
    assert all(replace(a, timestamp_ms=0) == DEFAULT_BASE_ALERT for a in out)


def test_seeded_determinism():
    spec = FloodSpec(count=500, duration_ms=1000, modulate={FieldId.SRC_ADDR, FieldId.PAYLOAD}, seed=42)
    assert list(generate(spec)) == list(generate(spec))
    other = FloodSpec(count=500, duration_ms=1000, modulate={FieldId.SRC_ADDR, FieldId.PAYLOAD}, seed=43)
    assert list(generate(spec)) != list(generate(other))


def test_modulated_values_fit_their_fields():
    spec = FloodSpec(count=2000, duration_ms=0, modulate=set(FieldId), seed=1)
    out = list(generate(spec))
    assert max(a.src_port for a in out) <= 0xFFFF
    assert max(a.protocol for a in out) <= 0xFF
    assert {len(a.payload) for a in out} == {16}
    assert len({a.dst_addr for a in out}) > 1900


@pytest.mark.parametrize("bad", [dict(count=0), dict(count=1, duration_ms=-1)])
def test_bad_spec(bad):
    with pytest.raises(ValueError):
        FloodSpec(**bad)


@given(
    st.integers(1, 300),
    st.integers(0, 10**6),
    st.sets(st.sampled_from(list(FieldId))),
    st.integers(0, 2**64 - 1),
    st.sampled_from(list(Arrival)),
)
def test_flood_invariants(count, duration, modulate, seed, arrival):
    out = list(generate(FloodSpec(count, duration, DEFAULT_BASE_ALERT, modulate, seed, arrival)))
    assert len(out) == count
    ts = [a.timestamp_ms for a in out]
    assert ts == sorted(ts)
    if arrival is Arrival.UNIFORM and count > 1:
        assert ts[0] == 0 and ts[-1] == duration
    untouched = {f.attr for f in FieldId} - {f.attr for f in modulate}
    for a in out:
        for attr in untouched | {"generator_id", "signature_id"}:
            assert getattr(a, attr) == getattr(DEFAULT_BASE_ALERT, attr)


def test_src_only_modulation_differs_only_in_src():
    for a in generate(FloodSpec(count=200, duration_ms=100, modulate={FieldId.SRC_ADDR}, seed=3)):
        assert replace(a, timestamp_ms=0, src_addr=DEFAULT_BASE_ALERT.src_addr) == DEFAULT_BASE_ALERT
