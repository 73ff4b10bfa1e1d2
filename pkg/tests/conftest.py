import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("qoed", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("qoed")

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = "; ".join(str(v) for k, v in rep.user_properties if k == "detail")
        if rep.failed and not detail:
            detail = rep.longreprtext.strip().splitlines()[-1][:160] if rep.longreprtext else ""
        _CRITERIA[n] = (title, rep.outcome, detail, getattr(rep, "duration", 0.0))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, outcome, detail, secs = _CRITERIA[n]
        tag = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        tr.write_line(f"criterion {n:>2} {tag}  {title} [{secs:.1f} s]"
                      + (f" :: {detail}" if detail else ""))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

