import pytest

_REPORT = []


class Gate:
    """Records one pass/fail line per acceptance criterion."""

    def check(self, cid, ok, detail, seconds=None):
        ok = bool(ok)
        timing = f" [{seconds:.1f} s]" if seconds is not None else ""
        line = f"{'PASS' if ok else 'FAIL'}  {cid}: {detail}{timing}"
        _REPORT.append(line)
        print(line)
        assert ok, line


@pytest.fixture
def gate():
    return Gate()


def pytest_terminal_summary(terminalreporter):
    if _REPORT:
        terminalreporter.section("acceptance criteria")
        for line in _REPORT:
            terminalreporter.write_line(line)
