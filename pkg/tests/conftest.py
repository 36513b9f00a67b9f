import pytest

_ACCEPTANCE_LINES = []


@pytest.fixture
def report(capsys):
    """Print and record one PASS/FAIL line, then assert the outcome."""

    def _report(number, title, ok, detail):
        line = f"[acceptance {number:2d}] {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
