import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from SqlpInteriorPoint import ipm
from SqlpInteriorPoint.cones import BlockSpec, BlockVec, ConeBoundaryError, ConeKind
from SqlpInteriorPoint.directions import residuals
from SqlpInteriorPoint.ipm import (
    Certificates,
    InteriorPointSolver,
    IterationState,
    Metrics,
    centering_gap,
    centering_sigma,
    certificates,
    check_termination,
    initial_point,
    max_step_block,
    metrics,
    solve,
    stabilize_split,
    step_lengths,
)
from SqlpInteriorPoint.linalg import Singular
from SqlpInteriorPoint.problem import BlockFragment, ProblemData, SolverOptions, SolveStatus

from tests.builders import interior_point, lin_problem, random_feasible_problem, random_sym


def lin_vec(values):
    values = np.asarray(values, dtype=float)
    return BlockVec([BlockSpec(ConeKind.LIN, values.shape[0])], [values])


def boundary_distance(spec, v):
    if spec.kind is ConeKind.SDP:
        return float(np.linalg.eigvalsh(v)[0])
    if spec.kind is ConeKind.SOC:
        return float(v[0] - np.linalg.norm(v[1:]))
    return float(np.min(v))


def empty_state(iteration=0):
    return IterationState(x=None, y=None, z=None, iteration=iteration)


class TestInitialPoint:
    def test_small_linear_block(self):
        x, y, z = initial_point(lin_problem([1.0], [[1.0]], [1.0]))
        assert_allclose(x[0], [10.0])
        assert_allclose(z[0], [10.0])
        assert_allclose(y, [0.0])

    def test_semidefinite_scale_enters_zeta(self):
        spec = BlockSpec(ConeKind.SDP, 3)
        p = ProblemData.from_fragments([BlockFragment(spec, np.eye(3), np.eye(3)[None])], [100.0])
        x, _, z = initial_point(p)
        zeta = 3 * 101.0 / (1.0 + math.sqrt(3.0))
        assert_allclose(x[0], zeta * np.eye(3))
        assert_allclose(z[0], 10.0 * np.eye(3))

    def test_eta_uses_cost_norm(self):
        x, _, z = initial_point(lin_problem([30.0, 40.0], [[1.0, 1.0]], [1.0]))
        assert_allclose(z[0], [50.0, 50.0])
        assert_allclose(x[0], [10.0, 10.0])

    def test_free_block_starts_at_zero(self, free_problem):
        x, _, z = initial_point(free_problem)
        assert_allclose(x[0], [0.0])
        assert_allclose(z[0], [0.0])
        assert np.all(x[1] >= 10.0)


class TestMaxStep:
    def test_linear_ratio_test(self):
        assert max_step_block(BlockSpec(ConeKind.LIN, 2), [1.0, 2.0], [-1.0, -4.0]) == pytest.approx(0.5)

    def test_linear_unbounded(self):
        assert max_step_block(BlockSpec(ConeKind.LIN, 2), [1.0, 2.0], [0.0, 3.0]) == math.inf

    def test_second_order_cone(self):
        assert max_step_block(BlockSpec(ConeKind.SOC, 2), [1.0, 0.0], [-1.0, 0.0]) == pytest.approx(1.0)

    def test_semidefinite(self):
        step = max_step_block(BlockSpec(ConeKind.SDP, 2), np.eye(2), np.diag([-2.0, 1.0]))
        assert step == pytest.approx(0.5)

    def test_free_block(self):
        assert max_step_block(BlockSpec(ConeKind.FREE, 2), [1.0, -1.0], [-5.0, 5.0]) == math.inf

    def test_boundary_point_rejected(self):
        with pytest.raises(ConeBoundaryError):
            max_step_block(BlockSpec(ConeKind.LIN, 2), [1.0, 0.0], [-1.0, -1.0])
        with pytest.raises(ConeBoundaryError):
            max_step_block(BlockSpec(ConeKind.SDP, 2), np.diag([1.0, -1.0]), np.eye(2))

    @pytest.mark.parametrize("kind, dim", [(ConeKind.SDP, 4), (ConeKind.SOC, 5), (ConeKind.LIN, 6)])
    def test_step_reaches_boundary(self, rng, kind, dim):
        spec = BlockSpec(kind, dim)
        finite = 0
        for _ in range(50):
            v = interior_point(rng, spec)
            dv = random_sym(rng, dim) if kind is ConeKind.SDP else rng.standard_normal(dim)
            step = max_step_block(spec, v, dv)
            if math.isinf(step):
                continue
            finite += 1
            edge = v + step * dv
            assert abs(boundary_distance(spec, edge)) <= 1e-6 * (1 + np.linalg.norm(edge))
            assert boundary_distance(spec, v + 0.5 * step * dv) > 0
        assert finite > 0


class TestStepLengths:
    def test_single_linear_block(self):
        x, dx = lin_vec([1.0, 2.0]), lin_vec([-1.0, -4.0])
        z, dz = lin_vec([1.0, 1.0]), lin_vec([0.0, 0.0])
        alpha_p, alpha_d = step_lengths(x, dx, z, dz, 0.99)
        assert alpha_p == pytest.approx(0.495)
        assert alpha_d == pytest.approx(0.99)

    def test_free_only(self):
        specs = [BlockSpec(ConeKind.FREE, 2)]
        x = BlockVec(specs, [np.array([1.0, -1.0])])
        dx = BlockVec(specs, [np.array([-10.0, 10.0])])
        zero = BlockVec.zeros(specs)
        assert step_lengths(x, dx, zero, zero, 0.9) == (0.9, 0.9)


class TestCenteringSigma:
    def test_cubic_reduction(self):
        one = lin_vec([1.0])
        sigma = centering_sigma(one, one, lin_vec([-0.9]), lin_vec([0.0]), 1.0, 1.0, 1.0)
        assert sigma == pytest.approx(1e-3)

    def test_clamped_at_one(self):
        one = lin_vec([1.0])
        assert centering_sigma(one, one, lin_vec([0.5]), lin_vec([0.5]), 1.0, 1.0, 1.0) == 1.0

    def test_exponent_floor_for_small_mu(self):
        one = lin_vec([1.0])
        dx, dz = lin_vec([-9.0]), lin_vec([0.0])
        assert centering_sigma(one, one, dx, dz, 0.1, 0.1, 1e-7) == pytest.approx(0.1)
        assert centering_sigma(one, one, dx, dz, 0.1, 0.1, 1.0) == pytest.approx(1e-3)

    def test_rejects_nonpositive_product(self):
        with pytest.raises(ValueError, match="must be positive"):
            centering_sigma(lin_vec([1.0]), lin_vec([0.0]), lin_vec([0.0]), lin_vec([0.0]), 1.0, 1.0, 1.0)

    def test_barrier_blocks_left_out(self):
        specs = [BlockSpec(ConeKind.LIN, 1), BlockSpec(ConeKind.LIN, 2, barrier=1.0)]
        x = BlockVec(specs, [np.array([1.0]), np.array([1.0, 1.0])])
        dx = BlockVec(specs, [np.array([-0.9]), np.array([0.0, 0.0])])
        zero = BlockVec.zeros(specs)
        # the barrier block keeps x∘z = ν and must not hold σ near 1
        assert centering_gap(x, x) == pytest.approx(1.0)
        assert centering_sigma(x, x, dx, zero, 1.0, 1.0, 1.0) == pytest.approx(1e-3)

    def test_barrier_adjusted_gap_without_plain_blocks(self):
        specs = [BlockSpec(ConeKind.LIN, 1, barrier=1.0), BlockSpec(ConeKind.SOC, 3, barrier=0.5)]
        x = BlockVec(specs, [np.array([2.0]), np.array([1.0, 0.0, 0.0])])
        z = BlockVec(specs, [np.array([1.0]), np.array([0.5, 0.0, 0.0])])
        assert centering_gap(x, z) == pytest.approx(1.0)
        dx = BlockVec(specs, [np.array([-0.9]), np.zeros(3)])
        assert centering_sigma(x, z, dx, BlockVec.zeros(specs), 1.0, 1.0, 1.0) == pytest.approx(1e-3)

    def test_gap_on_barrier_center_is_zero(self):
        specs = [BlockSpec(ConeKind.LIN, 2, barrier=2.0)]
        x = BlockVec(specs, [np.array([0.5, 4.0])])
        z = BlockVec(specs, [np.array([4.0, 0.5])])
        assert centering_gap(x, z) == pytest.approx(0.0)


class TestMetrics:
    def test_barrier_center_has_zero_gap(self):
        p = lin_problem([1.0, 1.0], [[1.0, 1.0]], [1.0], barrier=1.0)
        x, y, z = lin_vec([0.5, 0.5]), np.array([-1.0]), lin_vec([2.0, 2.0])
        values = metrics(p, x, y, z, residuals(p, x, y, z))
        assert values.gap == pytest.approx(0.0, abs=1e-12)
        assert values.pinfeas == 0.0
        assert values.dinfeas == 0.0

    def test_feasible_point(self, toy_lp):
        x, y, z = lin_vec([0.5, 0.5]), np.array([0.5]), lin_vec([0.5, 1.5])
        values = metrics(toy_lp, x, y, z, residuals(toy_lp, x, y, z))
        assert values.gap == pytest.approx(1.0)
        assert values.relgap == pytest.approx(1.0 / (1.0 + 1.5 + 0.5))
        assert values.pinfeas == pytest.approx(0.0)
        assert values.dinfeas == pytest.approx(0.0)

    def test_certificates(self, primal_infeasible_lp, dual_infeasible_lp):
        primal = certificates(primal_infeasible_lp, lin_vec([1.0]), np.array([-1.0]), lin_vec([1.5]))
        assert primal == Certificates(primal=2.0, dual=0.0)
        dual = certificates(dual_infeasible_lp, lin_vec([4.0, 3.0]), np.array([0.0]), lin_vec([1.0, 1.0]))
        assert dual.dual == pytest.approx(4.0)
        assert dual.primal == 0.0


class TestTermination:
    options = SolverOptions(eps=1e-8, kappa=1e10, maxiter=100)

    def test_optimal(self):
        status = check_termination(Metrics(1e-9, 1e-9, 1e-10, 1e-10), empty_state(), self.options)
        assert status is SolveStatus.OPTIMAL

    def test_continue(self):
        assert check_termination(Metrics(1.0, 0.1, 0.1, 0.1), empty_state(), self.options) is None

    def test_infeasibility_certificates(self):
        state = empty_state()
        state.certificates = Certificates(primal=1e11)
        assert check_termination(Metrics(1.0, 0.1, 0.1, 0.1), state, self.options) is SolveStatus.PRIMAL_INFEASIBLE
        state.certificates = Certificates(dual=1e11)
        assert check_termination(Metrics(1.0, 0.1, 0.1, 0.1), state, self.options) is SolveStatus.DUAL_INFEASIBLE

    def test_non_finite(self):
        status = check_termination(Metrics(math.nan, 0.1, 0.1, 0.1), empty_state(), self.options)
        assert status is SolveStatus.NUMERICAL_FAILURE

    def test_gap_divergence(self):
        state = empty_state()
        state.record(Metrics(1e-3, 1e-3, 1e-6, 1e-6))
        status = check_termination(Metrics(2.0, 1e-1, 1e-6, 1e-6), state, self.options)
        assert status is SolveStatus.NUMERICAL_FAILURE

    def test_divergence_ignored_while_infeasible(self):
        state = empty_state()
        state.record(Metrics(1e-3, 1e-3, 1e-1, 1e-1))
        assert check_termination(Metrics(2.0, 1e-1, 1e-1, 1e-1), state, self.options) is None

    def test_slow_progress(self):
        stalled = Metrics(1e-5, 5e-5, 1e-9, 1e-9)
        state = empty_state(iteration=10)
        for _ in range(4):
            state.record(stalled)
        assert check_termination(stalled, state, self.options) is None
        state.record(stalled)
        assert check_termination(stalled, state, self.options) is SolveStatus.SLOW_PROGRESS

    def test_progress_resets_stall(self):
        state = empty_state(iteration=10)
        for relgap in (5e-5, 5e-5, 5e-5, 5e-5, 5e-5):
            state.record(Metrics(1e-5, relgap, 1e-9, 1e-9))
        assert check_termination(Metrics(1e-6, 1e-5, 1e-9, 1e-9), state, self.options) is None

    def test_iteration_limit(self):
        status = check_termination(Metrics(1.0, 0.1, 0.1, 0.1), empty_state(iteration=100), self.options)
        assert status is SolveStatus.MAX_ITER


class TestStabilizeSplit:
    def test_recentering(self):
        xp, xm, zp, zm = stabilize_split(np.array([3.0]), np.array([2.0]), np.array([0.1]), np.array([0.2]), 0.5)
        assert_allclose(xp, [1.4])
        assert_allclose(xm, [0.4])
        assert_allclose(zp, [0.15])
        assert_allclose(zm, [0.25])

    def test_difference_preserved(self, rng):
        xp, xm = rng.uniform(0.1, 5, 6), rng.uniform(0.1, 5, 6)
        new_p, new_m, _, _ = stabilize_split(xp, xm, np.ones(6), np.ones(6), 1e-3)
        assert_allclose(new_p - new_m, xp - xm)
        assert np.all(new_p > 0) and np.all(new_m > 0)

    def test_large_pair_near_convergence(self):
        tiny = np.array([1e-12])
        xp, xm, zp, zm = stabilize_split(np.array([1e6 + 2.0]), np.array([1e6]), tiny, tiny, 1e-9)
        assert_allclose(xp, [2e5 + 2.0])
        assert_allclose(xm, [2e5])
        assert_allclose(xp - xm, [2.0], rtol=1e-9)
        assert_allclose(zp, [1.01e-10])
        assert_allclose(zm, [1.01e-10])

    def test_zero_minimum_unchanged(self):
        xp, xm, _, _ = stabilize_split(np.array([0.0]), np.array([2.0]), np.ones(1), np.ones(1), 0.0)
        assert_allclose(xp, [0.0])
        assert_allclose(xm, [2.0])


class TestSolve:
    def test_toy_lp(self, toy_lp):
        result = solve(toy_lp)
        assert result.status is SolveStatus.OPTIMAL
        assert result.pobj == pytest.approx(1.0, abs=1e-6)
        assert_allclose(result.x[0], [1.0, 0.0], atol=1e-6)
        assert result.relgap < 1e-8

    @pytest.mark.parametrize("direction", ["hkm", "nt"])
    def test_toy_sdp(self, toy_sdp, direction):
        result = solve(toy_sdp, SolverOptions(direction=direction))
        assert result.status is SolveStatus.OPTIMAL
        assert result.pobj == pytest.approx(1.0, abs=1e-6)
        assert_allclose(result.x[0], [[1.0, 0.0], [0.0, 0.0]], atol=1e-4)

    @pytest.mark.parametrize("direction", ["hkm", "nt"])
    def test_mixed_cone_instance(self, mixed_cones, direction):
        result = solve(mixed_cones, SolverOptions(direction=direction))
        assert result.status is SolveStatus.OPTIMAL
        assert result.iterations <= 50
        assert max(result.relgap, result.pinfeas, result.dinfeas) < 1e-7
        assert abs(result.pobj - result.dobj) <= 1e-6 * (1 + abs(result.pobj))

    def test_primal_infeasible(self, primal_infeasible_lp):
        result = solve(primal_infeasible_lp, SolverOptions(maxiter=50))
        assert result.status is SolveStatus.PRIMAL_INFEASIBLE

    def test_dual_infeasible(self, dual_infeasible_lp):
        result = solve(dual_infeasible_lp, SolverOptions(maxiter=50))
        assert result.status is SolveStatus.DUAL_INFEASIBLE

    @pytest.mark.parametrize("direction", ["hkm", "nt"])
    @pytest.mark.parametrize("preprocess", [True, False])
    def test_barrier_mode(self, direction, preprocess):
        p = lin_problem([1.0, 2.0, 3.0], [[1.0, 1.0, 1.0]], [2.0], barrier=1.0)
        result = solve(p, SolverOptions(direction=direction, preprocess=preprocess))
        assert result.status is SolveStatus.OPTIMAL
        assert result.iterations <= 30
        assert np.max(np.abs(result.x[0] * result.z[0] - 1.0)) <= 1e-6

    def test_free_variables(self, free_problem):
        result = solve(free_problem)
        assert result.status is SolveStatus.OPTIMAL
        assert result.pobj == pytest.approx(1.5, abs=1e-6)
        assert_allclose(result.x[0], [1.0], atol=1e-5)
        assert_allclose(result.z[0], [0.0], atol=1e-6)

    def test_without_preprocessing(self, toy_lp):
        result = solve(toy_lp, SolverOptions(preprocess=False))
        assert result.status is SolveStatus.OPTIMAL
        assert result.pobj == pytest.approx(1.0, abs=1e-6)

    def test_iteration_limit(self, mixed_cones):
        result = solve(mixed_cones, SolverOptions(maxiter=2))
        assert result.status is SolveStatus.MAX_ITER
        assert result.iterations == 2
        assert len(result.trace) == 2

    def test_invalid_problem(self):
        with pytest.raises(ValueError, match="Invalid problem"):
            solve(lin_problem([math.nan], [[1.0]], [1.0]))

    def test_one_factorization_per_iteration(self, mixed_cones, monkeypatch):
        calls = []
        original = ipm.factorize

        def counting(system):
            calls.append(system.order)
            return original(system)

        monkeypatch.setattr(ipm, "factorize", counting)
        result = InteriorPointSolver().solve(mixed_cones)
        assert len(calls) == result.iterations
        # a second LU only when the Schur preconditioner had to be replaced
        assert all(record.factorizations in (1, 2) for record in result.trace)
        assert all(record.path == "full-lu" for record in result.trace if record.factorizations == 2)

    def test_numerical_failure_reported(self, mixed_cones, monkeypatch):
        def failing(system):
            raise Singular("Zero pivot in column 1")

        monkeypatch.setattr(ipm, "factorize", failing)
        result = solve(mixed_cones)
        assert result.status is SolveStatus.NUMERICAL_FAILURE
        assert "Zero pivot" in result.message
        assert result.iterations == 0

    def test_trace_records(self, toy_lp):
        result = solve(toy_lp)
        assert [record.iteration for record in result.trace] == list(range(1, result.iterations + 1))
        assert all(record.path in ("schur", "full-lu") for record in result.trace)
        assert all(0 < record.alpha_p <= 1 and 0 < record.alpha_d <= 1 for record in result.trace)
        assert all(0 <= record.sigma <= 1 for record in result.trace)


class TestRandomSuite:
    @pytest.mark.slow
    @pytest.mark.parametrize("direction", ["hkm", "nt"])
    def test_random_feasible_instances(self, direction, monkeypatch):
        rng = np.random.default_rng(7)
        calls = []
        original = ipm.factorize

        def counting(system):
            calls.append(system.order)
            return original(system)

        monkeypatch.setattr(ipm, "factorize", counting)
        options = SolverOptions(direction=direction, eps=1e-7, maxiter=50)
        solved, decreasing, steps, iterations, failed = 0, 0, 0, 0, 0
        for _ in range(100):
            result = solve(random_feasible_problem(rng), options)
            if result.status is SolveStatus.OPTIMAL:
                solved += 1
            elif result.status is SolveStatus.NUMERICAL_FAILURE:
                failed += 1
            iterations += result.iterations
            mus = [record.mu for record in result.trace]
            decreasing += sum(after <= before for before, after in zip(mus, mus[1:]))
            steps += max(len(mus) - 1, 0)
        assert solved >= 95
        assert decreasing >= 0.9 * steps
        # a failed iteration may have factorized before giving up
        assert iterations <= len(calls) <= iterations + failed
