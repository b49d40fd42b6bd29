import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

_acceptance = {}
_notes = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def note(request):
    """Attach a measured value to this test's line in the acceptance summary."""
    return lambda text: _notes.setdefault(request.node.name, []).append(text)


def pytest_runtest_logreport(report):
    if "test_acceptance.py::" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in sorted(_acceptance.items()):
        mark = "PASS" if outcome == "passed" else "FAIL"
        extra = "; ".join(_notes.get(name, []))
        terminalreporter.write_line(f"{mark}  {name}" + (f"  ({extra})" if extra else ""))
