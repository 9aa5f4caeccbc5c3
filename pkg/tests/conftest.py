"""Shared fixtures: small models that fit in milliseconds."""

import numpy as np
import pytest

from shotmix.mixture import MixtureComponent, MixtureModel
from shotmix.valuation import PostXgModel

# Checklist lines collected by the acceptance tests, echoed after the run.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_component(y, z, var=0.25, lam=1.0):
    return MixtureComponent(np.array([y, z]), np.array([[var, 0.0], [0.0, var]]), lam)


@pytest.fixture
def two_component_model():
    """Two well-separated components, weights (0.7, 0.3)."""
    comps = [make_component(-2.5, 0.3), make_component(2.5, 1.5)]
    return MixtureModel(components=comps, weights=np.array([0.7, 0.3]))


@pytest.fixture
def three_component_model():
    comps = [
        make_component(-2.5, 0.3),
        make_component(0.0, 1.8),
        make_component(2.5, 0.5),
    ]
    return MixtureModel(components=comps, weights=np.array([0.5, 0.2, 0.3]))


@pytest.fixture(scope="session")
def demo_pair():
    """The built-in sparse generator (mixture, postxg) on the full grid."""
    from shotmix.simulate import default_generator

    return default_generator()


@pytest.fixture
def flat_postxg():
    """Constant goal probability logistic(-1) everywhere on frame."""
    return PostXgModel(coefficients=np.array([-1.0, 0, 0, 0, 0, 0, 0]), ridge=1e-4)
