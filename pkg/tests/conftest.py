import pytest

_CRITERIA: dict = {}


@pytest.fixture
def criterion():
    """criterion(k, ok, detail) records one acceptance line."""

    def note(k: int, ok: bool, detail: str) -> bool:
        _CRITERIA[k] = (bool(ok), detail)
        return bool(ok)

    return note


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        ok, detail = _CRITERIA[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
