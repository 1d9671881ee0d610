import numpy as np
import pytest

from pestov_lab import manifold as mf
from pestov_lab.measure import random_frame_points

CURVED = [
    mf.round_sphere(2),
    mf.round_sphere(3),
    mf.hyperbolic_ball(3),
    mf.perturbed_hyperbolic(3, eps=0.05),
]
ALL_MODELS = [mf.flat_torus(2), mf.flat_torus(3)] + CURVED


def model_id(model):
    return model.label


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def points(model, count, seed=0):
    """Random frame points away from chart edges."""
    return random_frame_points(model, np.random.default_rng(seed), count)


def chart_points(model, count, seed=0):
    """Random chart coordinates inside the sampling region of ``model``."""
    return points(model, count, seed).x


ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    """Register one acceptance line; they are printed together at the end of the run."""
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
