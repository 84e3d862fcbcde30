"""Collects one verdict line per acceptance criterion and prints them after the run."""
import pytest

VERDICTS = {}


@pytest.fixture
def verdict(request):
    """Record ``PASS``/``FAIL`` for the criterion named in the test's ``criterion`` marker."""
    marker = request.node.get_closest_marker("criterion")
    number, title = marker.args
    VERDICTS[number] = (title, "FAIL", "")
    details = {}
    yield details
    failed = getattr(request.node, "rep_call", None) is None or request.node.rep_call.failed
    VERDICTS[number] = (title, "FAIL" if failed else "PASS", details.get("note", ""))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        title, status, note = VERDICTS[number]
        line = f"criterion {number} {status}: {title}"
        terminalreporter.write_line(line + (f" ({note})" if note else ""))
