import os

import pytest

# Acceptance outcomes reported at the end of the session: {criterion: (passed, detail)}
ACCEPTANCE = {}


def record_criterion(number, title, passed, detail=""):
    ACCEPTANCE[number] = (title, bool(passed), detail)


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d}. {title}: {detail}")


os.environ.setdefault("MPLBACKEND", "Agg")
