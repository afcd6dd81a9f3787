import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose

from SqlpInteriorPoint.linalg import (
    NotPositiveDefinite,
    Singular,
    bandwidth,
    chol,
    chol_solve,
    lu,
    lu_solve,
    max_eigval,
    rcm,
    sym_eig,
    sym_mat,
)


class TestCholesky:
    def test_factor_and_solve(self):
        a = np.array([[4.0, 2.0], [2.0, 3.0]])
        factor = chol(a)
        assert_allclose(factor.lower @ factor.lower.T, a)
        assert_allclose(chol_solve(factor, [2.0, 1.0]), np.linalg.solve(a, [2.0, 1.0]))

    def test_reports_failing_pivot(self):
        with pytest.raises(NotPositiveDefinite) as excinfo:
            chol(np.array([[1.0, 2.0], [2.0, 1.0]]))
        assert excinfo.value.pivot == 2

    def test_reordered_sparse_input(self, rng):
        n = 12
        g = np.diag(np.full(n, 4.0)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)
        perm = rng.permutation(n)
        a = sp.csc_matrix(g[np.ix_(perm, perm)])
        factor = chol(a, reorder=True)
        rhs = rng.standard_normal(n)
        assert_allclose(chol_solve(factor, rhs), np.linalg.solve(a.toarray(), rhs), atol=1e-12)

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            chol(np.ones((2, 3)))

    def test_empty_matrix(self):
        factor = chol(np.zeros((0, 0)))
        assert chol_solve(factor, np.zeros(0)).shape == (0,)


class TestLu:
    def test_solve_nonsymmetric(self, rng):
        a = rng.standard_normal((5, 5)) + 5 * np.eye(5)
        b = rng.standard_normal(5)
        factor = lu(a)
        assert factor.diag_ratio >= 1.0
        assert_allclose(lu_solve(factor, b), np.linalg.solve(a, b), atol=1e-12)

    def test_zero_pivot(self):
        with pytest.raises(Singular):
            lu(np.array([[1.0, 2.0], [2.0, 4.0]]))


class TestEigen:
    def test_sym_eig_ascending(self):
        values, vectors = sym_eig(np.array([[2.0, 1.0], [1.0, 2.0]]))
        assert_allclose(values, [1.0, 3.0])
        assert_allclose(np.abs(vectors.T @ vectors), np.eye(2), atol=1e-12)

    def test_max_eigval_small(self):
        assert max_eigval(np.diag([-2.0, 1.0, 0.5])) == pytest.approx(1.0)

    def test_max_eigval_lanczos_path(self, rng):
        n = 240
        q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        values = np.linspace(-1.0, 1.0, n)
        values[-1] = 5.0
        a = (q * values) @ q.T
        assert max_eigval(a, np.random.default_rng(0)) == pytest.approx(5.0, rel=1e-8)

    def test_sym_mat_from_sparse(self):
        a = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 0.0]]))
        assert_allclose(sym_mat(a), [[1.0, 2.0], [2.0, 0.0]])


class TestOrdering:
    def test_bandwidth(self):
        t = np.array([[3.0, 0.0, 1.0], [0.0, 5.0, 0.0], [1.0, 0.0, 2.0]])
        assert bandwidth(t) == 2
        assert bandwidth(np.eye(3)) == 0

    def test_rcm_reduces_bandwidth(self):
        t = np.array([[3.0, 0.0, 1.0], [0.0, 5.0, 0.0], [1.0, 0.0, 2.0]])
        perm = rcm(t)
        assert sorted(perm.tolist()) == [0, 1, 2]
        assert bandwidth(t[np.ix_(perm, perm)]) == 1

    def test_rcm_keeps_identity_when_no_gain(self):
        tridiagonal = np.eye(4) + np.eye(4, k=1) + np.eye(4, k=-1)
        assert rcm(tridiagonal).tolist() == [0, 1, 2, 3]


class TestHandExamples:
    def test_cholesky_by_hand(self):
        factor = chol(np.array([[4.0, 2.0], [2.0, 3.0]]))
        assert_allclose(factor.lower, [[2.0, 0.0], [1.0, np.sqrt(2.0)]])
        assert_allclose(chol_solve(factor, [8.0, 8.0]), [1.0, 2.0])

    def test_cholesky_rhs_length(self):
        with pytest.raises(ValueError, match="rows"):
            chol_solve(chol(np.eye(2)), np.ones(3))

    def test_lu_needs_pivoting(self):
        swap = np.array([[0.0, 1.0], [1.0, 0.0]])
        factor = lu(swap)
        assert factor.diag_ratio == pytest.approx(1.0)
        assert_allclose(lu_solve(factor, [1.0, 2.0]), [2.0, 1.0])
        assert max_eigval(swap) == pytest.approx(1.0)

    def test_rank_one_is_singular(self):
        with pytest.raises(Singular):
            lu(np.ones((2, 2)))
