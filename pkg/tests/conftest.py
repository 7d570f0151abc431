import numpy as np
import pytest

from isrs_nli.core import FiberParams, LinkConfig, ModelOptions, build_nyquist_plan
from isrs_nli.units import dbm_to_watt


@pytest.fixture
def fiber():
    return FiberParams.from_engineering()


@pytest.fixture
def desk_plan():
    return build_nyquist_plan(5, 40e9, float(dbm_to_watt(0.0)))


@pytest.fixture
def wide_plan():
    return build_nyquist_plan(15, 100e9, float(dbm_to_watt(4.0)))


@pytest.fixture
def opts():
    return ModelOptions()


def uniform_link(fiber, n_spans=1, length=80e3, **changes):
    fib = fiber.with_(**changes) if changes else fiber
    return LinkConfig.uniform(fib, n_spans, length)


def db(x):
    return 10 * np.log10(x)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
