import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# criterion id -> (passed, detail); filled by the acceptance tests
ACCEPTANCE = {}


@pytest.fixture
def record(request):
    """Store an acceptance outcome; ``check(ok, detail)`` records then asserts."""
    cid = request.node.get_closest_marker("criterion").args[0]

    def check(ok, detail):
        ACCEPTANCE[cid] = (bool(ok), detail)
        assert ok, f"{cid}: {detail}"

    return check


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id): acceptance criterion identifier")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[cid]
        word = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        terminalreporter.write_line(f"{word} {cid}: {detail}")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    cid = marker.args[0]
    if rep.skipped:
        reason = rep.longrepr[2] if isinstance(rep.longrepr, tuple) else "skipped"
        ACCEPTANCE.setdefault(cid, (None, reason))
    elif rep.when != "call":
        return
    elif rep.failed and cid not in ACCEPTANCE:
        ACCEPTANCE[cid] = (False, f"error: {call.excinfo.typename}: {call.excinfo.value}"[:300])
