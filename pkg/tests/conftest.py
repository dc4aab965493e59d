from __future__ import annotations

import pytest

_REPORT: dict[int, tuple[str, str]] = {}


@pytest.fixture
def acceptance():
    """Record one verdict line per acceptance criterion; printed in the terminal summary."""

    def record(number: int, passed: bool | None, detail: str) -> None:
        status = "REPORT" if passed is None else ("PASS" if passed else "FAIL")
        _REPORT[number] = (status, detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_REPORT):
        status, detail = _REPORT[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status:6s} {detail}")
