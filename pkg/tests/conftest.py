import pytest

from titeica_lab.domain import RadialDisc
from titeica_lab.titeica import NEWTON, TiteicaProblem, constant_Q_for_M, solve


@pytest.fixture(scope="session")
def disc_solution_54():
    """Converged radial solve at max ||U||^2 = 1/54 (N_r = 2048)."""
    d = RadialDisc(n_r=2048)
    Q = constant_Q_for_M(d, 1.0 / 54.0)
    return solve(TiteicaProblem(d, Q, method=NEWTON)), Q


@pytest.fixture(scope="session")
def disc_solution_54_coarse():
    d = RadialDisc(n_r=1024)
    Q = constant_Q_for_M(d, 1.0 / 54.0)
    return solve(TiteicaProblem(d, Q, method=NEWTON)), Q


#: one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
