import os
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from santalo_lab.geometry import TruncationWarning

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(autouse=True)
def _quiet_truncation():
    # truncation diagnostics are asserted explicitly where they matter
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary ---------------------------------------------------------

_ACCEPTANCE = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion; fill ``rec["detail"]`` with the measured numbers."""
    rec = {"number": None, "title": "", "detail": ""}
    yield rec
    rep = getattr(request.node, "rep_call", None)
    ok = rep is not None and rep.passed
    if not ok and rep is not None and not rec["detail"]:
        rec["detail"] = str(rep.longrepr).strip().splitlines()[-1][:160]
    _ACCEPTANCE.append((rec["number"], rec["title"], ok, rec["detail"]))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(_ACCEPTANCE, key=lambda r: r[0] or 0):
        terminalreporter.write_line(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
