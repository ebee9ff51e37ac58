import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# criterion number -> (status, detail), filled by the acceptance tests
ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line: call with ``(number, passed, detail)``."""

    def record(number, passed, detail=""):
        ACCEPTANCE[number] = ("PASS" if passed else "FAIL", detail)
        assert passed, f"criterion {number}: {detail}"

    return record


def pytest_runtest_logreport(report):
    # a test that errors or skips before recording still gets a line
    if "test_acceptance.py" not in report.nodeid or report.when != "call" and not report.skipped:
        return
    marker = report.nodeid.rsplit("::", 1)[-1]
    if not marker.startswith("test_criterion_"):
        return
    number = int(marker.split("_")[2])
    if report.skipped:
        reason = report.longrepr[2] if isinstance(report.longrepr, tuple) else "skipped"
        ACCEPTANCE[number] = ("SKIP", reason.removeprefix("Skipped: "))
    elif report.failed and number not in ACCEPTANCE:
        ACCEPTANCE[number] = ("FAIL", "raised before completing")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {detail}")
