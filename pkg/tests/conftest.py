import os

import pytest

os.environ.setdefault("DRS_WORKERS", "2")

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def verdict():
    """Record one acceptance line: verdict(k, ok, detail)."""
    def record(k: int, ok: bool, detail: str) -> bool:
        _ACCEPTANCE[k] = f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[k])
