import numpy as np
import pytest

from dphawkes.discretize import BinConfig, BinSeries, build_design


def random_design(rng, d=None, p=None, n=None, rate=(0.5, 3.0)):
    """A design built from i.i.d. Poisson counts (not a Hawkes series)."""
    d = int(rng.integers(1, 4)) if d is None else d
    p = int(rng.integers(1, 6)) if p is None else p
    n = int(rng.integers(p + 40, 201)) if n is None else n
    X = rng.poisson(rng.uniform(*rate, size=d), size=(n, d))
    return build_design(BinSeries(X, BinConfig(1.0, float(n), p)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    lines = getattr(terminalreporter.config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
