"""Collects one verdict line per acceptance check and prints them at the end."""
import pytest

_VERDICTS = {}


class Verdict:
    def __init__(self, label):
        self.label = label
        self.ok = None
        self.detail = ""

    def record(self, ok, detail=""):
        self.ok = bool(ok)
        self.detail = detail
        print(f"{'PASS' if ok else 'FAIL'}  {self.label}  {detail}")
        return self.ok


@pytest.fixture
def verdict(request):
    """``verdict.record(ok, detail)`` stores a pass/fail line for this test."""
    v = Verdict(request.node.get_closest_marker("acceptance").args[0])
    _VERDICTS[request.node.nodeid] = v
    return v


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(label): acceptance check with a summary line")


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    tr = terminalreporter
    tr.section("acceptance summary")
    for v in _VERDICTS.values():
        state = "FAIL" if not v.ok else "PASS"
        tr.write_line(f"{state}  {v.label}  {v.detail}")
