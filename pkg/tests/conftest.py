import numpy as np
import pytest

from SqlpInteriorPoint.cones import BlockSpec, ConeKind
from SqlpInteriorPoint.problem import BlockFragment, ProblemData, read_problem

from tests.builders import data_path, lin_problem


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def mixed_cones():
    return read_problem(data_path("mixed_cones.yaml"))


@pytest.fixture
def toy_lp():
    """min x1 + 2 x2 subject to x1 + x2 = 1, x >= 0; optimum 1 at (1, 0)."""
    return lin_problem([1.0, 2.0], [[1.0, 1.0]], [1.0])


@pytest.fixture
def toy_sdp():
    """min <I, X> subject to X11 = 1, X psd; optimum 1 at E11."""
    spec = BlockSpec(ConeKind.SDP, 2)
    a = np.zeros((1, 2, 2))
    a[0, 0, 0] = 1.0
    return ProblemData.from_fragments([BlockFragment(spec, np.eye(2), a)], [1.0])


@pytest.fixture
def primal_infeasible_lp():
    return lin_problem([0.0], [[1.0]], [-1.0])


@pytest.fixture
def dual_infeasible_lp():
    """min -x1 subject to x1 - x2 = 0, x >= 0 is unbounded."""
    return lin_problem([-1.0, 0.0], [[1.0, -1.0]], [0.0])


@pytest.fixture
def free_problem():
    """min 0.5u + x1 + x2 subject to u + x1 = 2, u - x2 = 1; optimum 1.5."""
    free = BlockSpec(ConeKind.FREE, 1)
    lin = BlockSpec(ConeKind.LIN, 2)
    return ProblemData.from_fragments(
        [
            BlockFragment(free, np.array([0.5]), np.array([[1.0], [1.0]])),
            BlockFragment(lin, np.array([1.0, 1.0]), np.array([[1.0, 0.0], [0.0, -1.0]])),
        ],
        [2.0, 1.0],
    )
