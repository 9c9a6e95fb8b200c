"""Session fixtures: solved problems that several test modules share."""

import pytest

from dgac import solve_forward

from _helpers import make_run


@pytest.fixture(scope="session")
def solved_default():
    """Manufactured 1-d run at moderate resolution, solved once."""
    run = make_run(epsilon=0.5, T=1.0, n=16, N=8, k=1, l=1,
                   manufactured="expsine")
    sol = solve_forward(run.problem, run.ops, run.partition, run.basis)
    return run, sol


@pytest.fixture(scope="session")
def interface_solved():
    """Interface initial data, no forcing, moderately small epsilon."""
    run = make_run(epsilon=0.25, T=0.1, n=32, N=8, k=1, l=1,
                   initial_profile="interface")
    sol = solve_forward(run.problem, run.ops, run.partition, run.basis)
    return run, sol
