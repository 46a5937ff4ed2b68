import pytest

CRITERIA = []


@pytest.fixture
def record():
    """Collects one summary line per acceptance criterion."""
    def add(label, reports, ok=None):
        ok = all(r.passed for r in reports) if ok is None else ok
        CRITERIA.append(f"[{'PASS' if ok else 'FAIL'}] {label}")
        for r in reports:
            CRITERIA.append(f"    {r.line()}")
        return ok
    return add


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)
