import pytest

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record a one-line verdict for an acceptance criterion: ``criterion(k, ok, detail)``."""

    def record(number: int, ok: bool, detail: str) -> bool:
        _ACCEPTANCE[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
