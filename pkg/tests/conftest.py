"""Collects acceptance verdicts and prints one line per criterion at the end."""
import time

import pytest

VERDICTS = {}


class Recorder:
    def __init__(self, key, limit):
        self.key = key
        self.limit = limit
        self.t0 = time.perf_counter()

    def __call__(self, passed: bool, detail: str = ""):
        elapsed = time.perf_counter() - self.t0
        in_time = self.limit is None or elapsed <= self.limit
        ok = bool(passed) and in_time
        note = "" if in_time else f" (runtime {elapsed:.1f}s over {self.limit:g}s)"
        VERDICTS[self.key] = f"{self.key}: {'PASS' if ok else 'FAIL'} [{elapsed:.1f}s] {detail}{note}"
        print(VERDICTS[self.key])
        return ok


@pytest.fixture
def criterion(request):
    """``criterion(key, limit)`` returns a recorder; call it with the verdict."""
    def make(key, limit=None):
        return Recorder(key, limit)
    return make


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(VERDICTS, key=lambda k: int(k[1:])):
        terminalreporter.write_line(VERDICTS[key])
