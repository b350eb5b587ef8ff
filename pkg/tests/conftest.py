import sys
import warnings

import numpy as np
import pytest

from doublediv.geometry import make_domain

# Closed-form (rho*, A, b) triples used for manufactured solutions.
TRIPLES = [
    ("exp(-x1^2-x2^2)", [["1", "0"], ["0", "1"]], ["1", "1"]),
    ("1+x1^2+0.5*sin(2*x2)", [["2+x1*x2", "0.3*x1"], ["0.3*x1", "1.5+0.5*cos(x2)"]],
     ["x2", "sin(x1)"]),
    ("2+cos(x1)*x2", [["1+0.5*x1^2", "0.2"], ["0.2", "1"]], ["-x1", "-2*x2"]),
]


@pytest.fixture
def omega2():
    return make_domain("disk", center=(0.0, 0.0), radius=2.0)


@pytest.fixture
def disk(omega2):
    return make_domain("disk", center=(0.0, 0.0), radius=1.0, container=omega2)


@pytest.fixture
def omega1():
    return make_domain("interval", alpha=-1.0, beta=2.0)


@pytest.fixture
def interval(omega1):
    return make_domain("interval", alpha=0.0, beta=1.0, container=omega1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_runtime_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(lines):
        terminalreporter.write_line(lines[k])
