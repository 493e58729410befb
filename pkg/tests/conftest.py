import contextlib

import pytest

ACCEPTANCE_LINES = {}


class _Outcome:
    def __init__(self):
        self.detail = ""


@contextlib.contextmanager
def criterion(number, title):
    """Record a pass/fail line for an acceptance criterion; failures still raise."""
    outcome = _Outcome()
    try:
        yield outcome
    except BaseException as exc:
        ACCEPTANCE_LINES[number] = f"criterion {number:2d} FAIL  {title}: {type(exc).__name__}: {exc}".splitlines()[0]
        print(ACCEPTANCE_LINES[number])
        raise
    ACCEPTANCE_LINES[number] = f"criterion {number:2d} PASS  {title}" + (f" ({outcome.detail})" if outcome.detail else "")
    print(ACCEPTANCE_LINES[number])


@pytest.fixture
def accept():
    return criterion


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
