"""Collects acceptance outcomes and prints one line per criterion at the end of the run."""

import pytest

ACCEPTANCE: dict[str, tuple[str, str]] = {}


def record(criterion: str, passed: bool | None, detail: str = "") -> None:
    status = {True: "PASS", False: "FAIL", None: "SKIP"}[passed]
    ACCEPTANCE[criterion] = (status, detail)
    print(f"[acceptance] {criterion}: {status} {detail}".rstrip())


@pytest.fixture
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{name}: {status} {detail}".rstrip())
