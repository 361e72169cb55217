import sys
import warnings
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ergorisk.ergodic import solve_ergodic  # noqa: E402
from ergorisk.grid import Grid1D  # noqa: E402
from ergorisk.model import (CappedLinearTheta, ConstantTheta, ModelSpec, OUDrift,  # noqa: E402
                            figure_model)

SMALL = Grid1D(-10.0, 10.0, 201)


def quiet_ergodic(model, grid):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return solve_ergodic(model, grid)


@pytest.fixture(scope="session")
def default_grid():
    return Grid1D()


@pytest.fixture(scope="session")
def small_grid():
    return SMALL


@pytest.fixture(scope="session")
def constant_model():
    return ModelSpec(gamma=1.0, kappa=(0.6, 0.8), eta=OUDrift(0.5), theta=ConstantTheta(0.5))


@pytest.fixture(scope="session")
def constant_ergodic_small(constant_model):
    return quiet_ergodic(constant_model, SMALL)


@pytest.fixture(scope="session")
def mixed_model():
    """|kappa| = 1, both loadings nonzero, capped-linear theta."""
    return ModelSpec(gamma=1.5, kappa=(0.6, 0.8), eta=OUDrift(0.4), theta=CappedLinearTheta(3.0))


@pytest.fixture(scope="session")
def mixed_ergodic_small(mixed_model):
    return quiet_ergodic(mixed_model, SMALL)


@pytest.fixture(scope="session")
def figure_ergodic(default_grid):
    """Ergodic solutions of the three figure scenarios on the default grid."""
    return {sc: quiet_ergodic(figure_model(sc), default_grid) for sc in (1, 2, 3)}


@pytest.fixture
def rng():
    return np.random.default_rng(20260)


# ---------------------------------------------------------------------------
# acceptance report: one line per criterion, repeated in the terminal summary

_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """``record(tag, ok, detail)`` prints a PASS/FAIL line and keeps it for the summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(tag, ok, detail):
        line = f"{tag} {'PASS' if ok else 'FAIL'}: {detail}"
        print(line)
        lines.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
