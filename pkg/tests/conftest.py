import pytest
from hypothesis import strategies as st

from alertthrottle.alert import Alert

u8 = st.integers(0, 0xFF)
u16 = st.integers(0, 0xFFFF)
u32 = st.integers(0, 0xFFFFFFFF)


@st.composite
def alerts(draw, ts=st.integers(0, 2**64 - 1), max_payload=64):
    return Alert(
        timestamp_ms=draw(ts),
        generator_id=draw(u32),
        signature_id=draw(u32),
        src_addr=draw(u32),
        dst_addr=draw(u32),
        src_port=draw(u16),
        dst_port=draw(u16),
        protocol=draw(u8),
        tos=draw(u8),
        payload=draw(st.binary(max_size=max_payload)),
    )


@st.composite
def alert_runs(draw, max_size=40, max_gap=0xFFFF):
    """Alerts of one rule with non-decreasing timestamps and random field churn."""
    first = draw(alerts(ts=st.integers(0, 2**40), max_payload=16))
    out = [first]
    for _ in range(draw(st.integers(0, max_size - 1))):
        prev = out[-1]
        gap = draw(st.integers(0, max_gap))
        fresh = draw(alerts(max_payload=16))
        keep = draw(st.lists(st.booleans(), min_size=7, max_size=7))
        attrs = ["src_addr", "dst_addr", "src_port", "dst_port", "protocol", "tos", "payload"]
        values = {a: getattr(prev if k else fresh, a) for a, k in zip(attrs, keep)}
        out.append(Alert(prev.timestamp_ms + gap, first.generator_id, first.signature_id, **values))
    return out


# --- acceptance criterion reporting ------------------------------------------

_criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "N/A"}[report.outcome]
        prev = _criteria.get(number)
        if prev is None or prev[1] == "PASS":
            _criteria[number] = (title, status)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, status = _criteria[number]
        terminalreporter.write_line(f"criterion {number}: {status:4}  {title}")
