"""Shared test plumbing: collects acceptance verdicts and prints them at the end."""

import pytest

ACCEPTANCE: list[tuple[int, str, str]] = []


@pytest.fixture
def verdict():
    """Record one acceptance line; returns the pass flag so tests can assert on it."""

    def record(number: int, passed: bool, detail: str) -> bool:
        ACCEPTANCE.append((number, "PASS" if passed else "FAIL", detail))
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}")
        return passed

    return record


def record_skip(number: int, detail: str) -> None:
    ACCEPTANCE.append((number, "SKIP-OPTIONAL-DATA", detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, status, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:2d}: {status} | {detail}")
