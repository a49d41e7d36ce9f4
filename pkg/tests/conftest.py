import os
import sys

import pytest
from hypothesis import HealthCheck, settings

from dhcsp.parser import parse

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
MODELS = os.path.join(ROOT, "models")
GOLDEN = os.path.join(os.path.dirname(os.path.abspath(__file__)), "golden")

# the case-study parameters
WT = dict(eps=0.2, T=10.0, r=0.1, lb=4.1, ub=5.9, d0=4.5, v0=1.0)


@pytest.fixture(scope="session")
def wt_source():
    with open(os.path.join(MODELS, "watertank.dhcsp")) as fh:
        return fh.read()


@pytest.fixture(scope="session")
def wt(wt_source):
    return parse(wt_source)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in mod.LINES:
            terminalreporter.write_line(line)
