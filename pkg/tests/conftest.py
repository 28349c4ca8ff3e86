from __future__ import annotations

import pytest

from logkpp.model import make_params
from logkpp.pde import run_fronts

# filled by test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(scope="session")
def fronts_r5():
    """r=5, A=1, t_end=2000, dx=0.1 at three levels (about one minute)."""
    return run_fronts(make_params(5.0, 1.0), 2000.0, levels=(0.3, 0.5, 0.7), dx=0.1)


@pytest.fixture(scope="session")
def fronts_r5_fine():
    """Same run at dx=0.05 (several minutes)."""
    return run_fronts(make_params(5.0, 1.0), 2000.0, levels=(0.5,), dx=0.05)


@pytest.fixture(scope="session")
def fronts_r3():
    return run_fronts(make_params(3.0, 2.0), 2000.0, levels=(0.3, 0.5, 0.7), dx=0.1)


@pytest.fixture(scope="session")
def fronts_r2():
    return run_fronts(make_params(2.0, 1.0), 3000.0, levels=(0.5,), dx=0.1)


@pytest.fixture(scope="session")
def theta_lattice():
    """Both routes on the (r, A) test lattice: {(r, A): (terminal, bisection)}."""
    from logkpp.profile import compute_theta_bisection, solve_phi_terminal

    out = {}
    for r in (1.2, 1.5, 2.0, 2.5, 2.9):
        for A in (0.5, 1.0, 2.0, 4.0):
            p = make_params(r, A)
            _, term = solve_phi_terminal(p)
            bis = compute_theta_bisection(p, tol=1e-9)
            out[(r, A)] = (term.theta, bis.theta)
    return out
