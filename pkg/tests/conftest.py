import math

import numpy as np
import pytest

from lamelab.grid import GridSpec, State
from lamelab.integrator import SchemeConfig, stable_dt
from lamelab.model import ForcingSymbol, ModelSpec, Nonlinearity, TimeCoefficient

ONE = TimeCoefficient.constant(1.0)


def benchmark_model(grid, c=1.0, forcing="periodic", mu=1.0, lam=0.0):
    """mu=1, lambda=0, alpha=kappa=1, f = c|u|u, g = sin(pi x) sin(2 pi t)."""
    x = grid.axes()[0]
    if forcing == "periodic":
        g = ForcingSymbol("time-periodic", np.sin(np.pi * x), (1.0,))
    elif forcing == "static":
        g = ForcingSymbol("static", np.sin(np.pi * x))
    else:
        g = ForcingSymbol.zero(grid)
    f = Nonlinearity("power", c, 2.0, 1.0, 0.0) if c else Nonlinearity()
    return ModelSpec(mu, lam, ONE, ONE, f, g)


def benchmark_state(grid, t=0.0):
    x = grid.axes()[0]
    u = np.array([np.sin(np.pi * x) + 0.5 * np.sin(2 * np.pi * x)])
    return State(t, u, np.zeros_like(u), np.zeros_like(x), grid)


def unit_dt(grid, model, cfl=0.5):
    """Largest stable dt dividing 1."""
    return 1.0 / math.ceil(1.0 / stable_dt(grid, model, cfl))


def random_state(grid, rng, t=0.0):
    return State(t, rng.standard_normal(grid.vshape), rng.standard_normal(grid.vshape),
                 rng.standard_normal(grid.shape), grid)


def measured_orders(errors):
    return [math.log2(errors[k] / errors[k + 1]) for k in range(len(errors) - 1)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid31():
    return GridSpec.uniform(1, 31)


@pytest.fixture
def scheme31(grid31):
    return SchemeConfig(unit_dt(grid31, benchmark_model(grid31)))


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
