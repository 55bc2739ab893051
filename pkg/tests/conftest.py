import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from epiregion.grid import assemble_robin_laplacian, build_domain, build_kernel, make_region
from epiregion.integrator import Operators
from epiregion.models import ForceOfInfection, ModelSpec

settings.register_profile("ci", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def line_ops(n=64, d1=0.1, alpha=1.0, family="gaussian", sigma=0.1, amplitude=1.0):
    domain = build_domain(1, [1.0], [n])
    lap = assemble_robin_laplacian(domain, d1, alpha)
    return Operators(domain, lap, build_kernel(domain, family, sigma, amplitude))


def linear_model(a11=1.0, a22=1.0, a21=2.0, tag="core", gamma=0.0):
    return ModelSpec(tag, a11=a11, a22=a22, gamma=gamma, foi=ForceOfInfection("linear", k=a21))


@pytest.fixture
def ops64():
    return line_ops()


@pytest.fixture
def centered_region(ops64):
    return make_region(ops64.domain, "interval", [0.5], 0.1)


def bump(domain, center, width, height=1.0):
    x = domain.coords
    return height * np.exp(-np.sum((x - np.asarray(center)) ** 2, axis=1) / width**2)
