import numpy as np
import pytest
from numpy.testing import assert_allclose

from SqlpInteriorPoint import (
    ProblemData,
    SolverOptions,
    SolveStatus,
    complex_to_real,
    hermitian_from_embedding,
    parse_native,
    read_problem,
    serialize_native,
    solve,
)

from tests.builders import data_path


class TestEndToEnd:
    def test_sdpa_and_native_agree(self):
        sdpa = solve(read_problem(data_path("golden.dat-s")))
        native = solve(read_problem(data_path("golden.yaml")))
        assert sdpa.status is native.status is SolveStatus.OPTIMAL
        assert sdpa.pobj == pytest.approx(3.0, abs=1e-6)
        assert native.pobj == pytest.approx(sdpa.pobj, abs=1e-9)
        assert sdpa.iterations == native.iterations

    def test_serialized_problem_solves_identically(self, mixed_cones):
        again = parse_native(serialize_native(mixed_cones))
        first, second = solve(mixed_cones), solve(again)
        assert first.pobj == second.pobj
        assert first.iterations == second.iterations

    @pytest.mark.parametrize("direction", ["hkm", "nt"])
    def test_hermitian_problem(self, direction):
        # eigenvalues of c are 1 and 3, so the optimum with trace 4 is 4
        c = np.array([[2.0, 1.0j], [-1.0j, 2.0]])
        fragment = complex_to_real(c, [np.eye(2)])
        p = ProblemData.from_fragments([fragment], [4.0])
        result = solve(p, SolverOptions(direction=direction))
        assert result.status is SolveStatus.OPTIMAL
        assert result.pobj == pytest.approx(4.0, abs=1e-6)

        h = hermitian_from_embedding(result.x[0])
        assert_allclose(h, h.conj().T, atol=1e-10)
        assert np.trace(h).real == pytest.approx(4.0, abs=1e-6)
        assert np.real(np.sum(c.conj() * h)) == pytest.approx(4.0, abs=1e-6)
        assert np.linalg.eigvalsh(h)[0] >= -1e-6

    def test_mapped_back_solution_is_feasible(self, mixed_cones):
        result = solve(mixed_cones)
        rprim = mixed_cones.b - mixed_cones.apply_operator(result.x)
        assert np.linalg.norm(rprim) <= 1e-7 * (1 + np.linalg.norm(mixed_cones.b))
        rdual = mixed_cones.C - result.z - mixed_cones.apply_adjoint(result.y)
        assert rdual.norm() <= 1e-7 * (1 + mixed_cones.C.norm())
