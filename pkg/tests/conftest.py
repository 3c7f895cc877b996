import sys

import pytest

_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(name: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        _VERDICTS.append(line)
        print(line, file=sys.__stdout__, flush=True)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
