from collections import defaultdict

import pytest
from hypothesis import HealthCheck, settings

# numba compilation on first call can exceed hypothesis' default deadline
settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE = defaultdict(list)


@pytest.fixture
def criterion():
    """record(number, ok, detail) for the acceptance summary."""

    def record(number, ok, detail):
        _ACCEPTANCE[number].append((bool(ok), detail))
        print(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        entries = _ACCEPTANCE[number]
        ok = all(e[0] for e in entries)
        failed = [d for good, d in entries if not good]
        detail = "; ".join(failed) if failed else "; ".join(d for _, d in entries)
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
