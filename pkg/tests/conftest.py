import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from schauder_lab.anisotropy import ChainDims
from schauder_lab.catalog import make_problem

settings.register_profile("lab", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")

VERDICTS: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> str:
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS.append(line)
    print(line)
    return line


@pytest.fixture
def verdict():
    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS):
            terminalreporter.write_line(line)


@pytest.fixture
def dims2():
    return ChainDims(2, 1, 0.5, 1.0)


@pytest.fixture
def l0():
    return make_problem("kolmogorov", {})


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
