import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from geomc import HamiltonianSystem, make_banana, make_desk_logreg, make_gaussian  # noqa: E402

# Fixed d=5 test Gaussian with distinct frequencies.
GAUSS5_COV = np.diag([1.0, 0.8, 0.6, 0.4, 0.2])


def builtin_targets():
    """(label, target) pairs covering every built-in family."""
    return [
        ("gaussian2", make_gaussian(np.array([0.5, -1.0]), np.array([[2.0, 0.6], [0.6, 0.5]]))),
        ("gaussian5", make_gaussian(np.zeros(5), GAUSS5_COV)),
        ("banana", make_banana(0.1, 100.0)),
        ("banana_mild", make_banana(0.5, 1.0)),
        ("logreg", make_desk_logreg()),
    ]


def random_positions(target, rng, n):
    """Positions spread around the region where each target has mass."""
    if target.name == "banana":
        b, s = target.kernel.b, target.kernel.sigma1_sq
        x1 = rng.normal(0, min(np.sqrt(s), 3.0), n)
        x2 = -b * x1**2 + s * b + rng.normal(0, 1, n)
        return np.column_stack([x1, x2])
    return rng.normal(0, 1, (n, target.dim))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def oscillator():
    return HamiltonianSystem.euclidean(make_gaussian([0.0], [[1.0]]))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
