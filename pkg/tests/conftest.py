"""Shared pytest hooks: the acceptance summary printed after every session."""

import pytest

# criterion number -> list of (part, passed, detail)
_ACCEPTANCE: dict[int, list] = {}


@pytest.fixture
def record():
    """``record(criterion, part, passed, detail)`` adds one line to the acceptance summary."""

    def add(criterion: int, part: str, passed: bool, detail: str = "") -> bool:
        _ACCEPTANCE.setdefault(criterion, []).append((part, bool(passed), detail))
        return bool(passed)

    return add


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        parts = _ACCEPTANCE[number]
        verdict = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        tr.write_line(f"criterion {number}: {verdict}")
        for part, ok, detail in parts:
            tr.write_line(f"    [{'pass' if ok else 'FAIL'}] {part}" + (f": {detail}" if detail else ""))
