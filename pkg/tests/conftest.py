import os
import sys
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def di_bundle():
    from sbcontract import controllability_gramian, make_system

    return controllability_gramian(make_system("double_integrator", 0.5))


@pytest.fixture(scope="session")
def example1(di_bundle):
    from sbcontract.scenario import example1_supports

    X0, X1 = example1_supports(di_bundle)
    return di_bundle, X0, X1


# -- acceptance bookkeeping ---------------------------------------------------------------

_ACCEPTANCE = []


class _Criterion:
    """Times one acceptance criterion and records PASS/FAIL with a detail line."""

    def __init__(self, number, title, budget=None):
        self.number, self.title, self.budget = number, title, budget
        self.detail = ""

    def __enter__(self):
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.runtime = time.perf_counter() - self._t0
        over = self.budget is not None and self.runtime > self.budget
        self.passed = exc_type is None and not over
        if exc_type is not None and not self.detail:
            self.detail = f"{exc_type.__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        budget = f" / {self.budget:g} s" if self.budget is not None else ""
        line = (
            f"criterion {self.number:>2} {'PASS' if self.passed else 'FAIL'}  {self.title}"
            f"  [{self.runtime:.2f} s{budget}]  {self.detail}"
        )
        _ACCEPTANCE.append((self.number, line))
        print(line)
        if exc_type is None and over:
            raise AssertionError(f"runtime {self.runtime:.2f} s exceeds {self.budget:g} s")
        return False


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
