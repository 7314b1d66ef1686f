import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from berknash.discretize import FiniteSMDP, discretize_smdp  # noqa: E402
from berknash.examples import make_example  # noqa: E402

# 2-state, 2-action, 2-parameter problem whose unique equilibrium has a mixed belief
HAND_Q = np.array([[[0.19, 0.81], [0.92, 0.08]], [[0.21, 0.79], [0.5, 0.5]]])
HAND_QM = np.array(
    [
        [[[0.25, 0.75], [0.37, 0.63]], [[0.94, 0.06], [0.82, 0.18]]],
        [[[0.34, 0.66], [0.25, 0.75]], [[0.23, 0.77], [0.13, 0.87]]],
    ]
)
HAND_R = np.array([[[0.0, 2.0], [2.0, 1.0]], [[-1.0, 1.0], [-2.0, 2.0]]])
HAND_DELTA = 0.5


def ar1_document(a0=0.5, b0=1.0, cells=41, radius=5.0, a_points=11, b_points=4):
    return (
        "state.bounds = unbounded\n"
        f"state.cells = {cells}\n"
        f"state.radius = {radius}\n"
        "action.values = 0\n"
        f"theta.grid.0 = grid(0, 1, {a_points})\n"
        f"theta.grid.1 = grid(0.25, 1, {b_points})\n"
        "kernel.true.family = gaussian-linear\n"
        f"kernel.true.a = {a0}\n"
        f"kernel.true.b = {b0}\n"
        "kernel.model.family = gaussian-linear\n"
        "kernel.model.a = param[0]\n"
        "kernel.model.b = param[1]\n"
        "payoff.kind = constant\n"
        "payoff.value = 0\n"
        "solve.discount = 0.9\n"
    )


@pytest.fixture(scope="session")
def hand():
    return FiniteSMDP.from_dense(HAND_Q, HAND_QM, HAND_R, HAND_DELTA)


@pytest.fixture(scope="session")
def ar1_full():
    """The default AR(1) example grid (401 cells on [-10, 10], 21 x 10 parameters)."""
    return discretize_smdp(make_example("ar1"))


@pytest.fixture(scope="session")
def ar1_small():
    from berknash.model import build_smdp

    return discretize_smdp(build_smdp(ar1_document()))


def dense_true(f):
    return f.Q_true.dense()


def dense_model(f):
    return f.Q_model.dense()
