import logging
import time

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=100,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

_CRITERIA = pytest.StashKey[dict]()
_START = pytest.StashKey[float]()


def pytest_configure(config):
    config.stash[_CRITERIA] = {}
    config.stash[_START] = time.perf_counter()


SUITE_BUDGET_S = 180.0
# criteria whose verdict also depends on the whole session finishing in budget
_TIMED = {8}


@pytest.fixture
def criterion(request):
    """Record the single verdict line of one acceptance criterion."""
    verdicts = request.config.stash[_CRITERIA]

    def record(number: int, ok: bool, detail: str) -> bool:
        verdicts[number] = (bool(ok), detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    verdicts = config.stash[_CRITERIA]
    elapsed = time.perf_counter() - config.stash[_START]
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(verdicts):
        ok, detail = verdicts[number]
        if number in _TIMED:
            ok = ok and elapsed < SUITE_BUDGET_S
            detail += f"; full session {elapsed:.1f} s (budget {SUITE_BUDGET_S:.0f} s)"
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    terminalreporter.write_line(f"session wall time {elapsed:.1f} s")


@pytest.fixture(autouse=True)
def _quiet_widening(caplog):
    caplog.set_level(logging.ERROR, logger="gsamp.spectral")
