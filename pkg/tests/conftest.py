import os
import sys
from collections import OrderedDict

import pytest
from hypothesis import HealthCheck, settings

# make tests/oracles.py importable
sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# criterion id -> list of (test id, outcome)
_CRITERIA = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion covered by a test")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _CRITERIA.setdefault(m.args[0], [])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        if hasattr(rep, "wasxfail"):
            status = "xfail" if rep.skipped else "xpass"
        else:
            status = rep.outcome
        _CRITERIA[m.args[0]].append((item.name, status))


def pytest_terminal_summary(terminalreporter):
    if not any(_CRITERIA.values()):
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    key = lambda s: int(s[1:]) if s[1:].isdigit() else 0  # noqa: E731
    for name in sorted(_CRITERIA, key=key):
        res = _CRITERIA[name]
        if not res:
            continue
        ok = all(s == "passed" for _, s in res)
        bad = [f"{t} ({s})" for t, s in res if s != "passed"]
        line = f"{name} {'PASS' if ok else 'FAIL'}"
        if bad:
            line += "  -- " + "; ".join(bad)
        tr.write_line(line)
