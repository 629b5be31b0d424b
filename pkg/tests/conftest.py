import numpy as np
import pytest

from pilotwave import _backend
from pilotwave.wavepacket import PhysicalParams

BACKENDS = sorted(_backend.BACKENDS)


@pytest.fixture
def params():
    return PhysicalParams()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    number, title = mark.args
    if rep.failed or rep.when == "call":
        passed, _, details = _CRITERIA.get(number, (True, title, []))
        details += [f"{k}={v}" for k, v in item.user_properties]
        _CRITERIA[number] = (passed and rep.passed, title, details)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, title, details = _CRITERIA[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number} {title}: {'; '.join(details)}")
