from __future__ import annotations

import pytest

# criterion number -> (title, passed, detail), filled by the acceptance tests
ACCEPTANCE: dict = {}


@pytest.fixture
def acceptance():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {num:2d}. {title}: {detail}")
