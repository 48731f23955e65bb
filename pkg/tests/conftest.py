import re

import pytest

ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def _order(key: str):
    m = re.match(r"(\d+)(\w*)", key)
    return int(m.group(1)), m.group(2)


@pytest.fixture
def criterion():
    """Record one pass/fail line for an acceptance criterion."""

    def record(key, ok, detail=""):
        ACCEPTANCE[str(key)] = (bool(ok), detail)
        print(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=_order):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
