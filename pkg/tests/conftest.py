import numpy as np
import pytest

from fmvma.survival import SurvivalDataset

_ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one summary line; all lines are printed after the run."""
    def add(line):
        _ACCEPTANCE_LINES.append(line)
        print(line)
    return add


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_dataset(seed, n=50, p=5, censor=0.3, transform="log"):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    t = np.exp(x[:, 0] + 0.5 * rng.standard_normal(n))
    c = rng.exponential(1.0 / censor, n) if censor > 0 else np.full(n, np.inf)
    y = np.minimum(t, c)
    delta = (t <= c).astype(int)
    return SurvivalDataset(y, delta, x, transform)


@pytest.fixture
def small_data():
    return make_dataset(0)
