"""
Dense and sparse linear-algebra kernels shared by the solver modules.

Factorizations are returned as small immutable records so that a factor can be
built once per iteration and reused by every solve that follows it.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

logger = logging.getLogger(__name__)

# Orders above this use the Lanczos fast path in max_eigval.
LANCZOS_MIN_ORDER = 200
LANCZOS_MAXITER = 500


class NotPositiveDefinite(ValueError):
    """
    Raised when a Cholesky factorization meets a nonpositive pivot.

    Attributes
    ----------
    pivot : int
        1-based index of the failing pivot.
    """

    def __init__(self, pivot, message=None):
        self.pivot = pivot
        super().__init__(message or f"Matrix is not positive definite (pivot {pivot})")


class Singular(ValueError):
    """Raised when an LU factorization meets a zero pivot."""


class EigenNonConvergence(RuntimeError):
    """Raised when the symmetric eigensolver does not converge."""


@dataclass(frozen=True)
class CholFactor:
    """
    Lower Cholesky factor, optionally of a symmetrically permuted matrix.

    When ``perm`` is set the factor satisfies ``A[perm][:, perm] = L Lᵀ``.
    """

    lower: np.ndarray
    perm: np.ndarray | None = None

    @property
    def order(self):
        return self.lower.shape[0]


@dataclass(frozen=True)
class LuFactor:
    """
    LU factorization with partial pivoting, ``A[perm] = L U``.

    Attributes
    ----------
    perm : numpy.ndarray
        Row permutation.
    lower : numpy.ndarray
        Unit lower-triangular factor.
    upper : numpy.ndarray
        Upper-triangular factor.
    diag_ratio : float
        max|Uᵢᵢ| / min|Uᵢᵢ|, used as a cheap conditioning indicator.
    """

    perm: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    diag_ratio: float

    @property
    def order(self):
        return self.upper.shape[0]


def _as_square(a, name):
    dense = a.toarray() if sp.issparse(a) else np.asarray(a, dtype=float)
    if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
        raise ValueError(f"{name} requires a square matrix, got shape {dense.shape}")
    return np.array(dense, dtype=float)


def _check_rhs(b, order):
    b = np.asarray(b, dtype=float)
    if b.ndim == 0 or b.shape[0] != order:
        raise ValueError(
            f"Right-hand side has {b.shape[0] if b.ndim else 0} rows, factor has order {order}"
        )
    return b


def sym_mat(entries):
    """
    Build a symmetric matrix, symmetrizing the given entries exactly.

    Parameters
    ----------
    entries : array_like
        Square array of finite values.

    Returns
    -------
    numpy.ndarray
        ``(A + Aᵀ) / 2``, which is bitwise symmetric.
    """
    a = _as_square(entries, "sym_mat")
    if not np.all(np.isfinite(a)):
        raise ValueError("Symmetric matrix entries must be finite")
    return (a + a.T) / 2


def chol(a, reorder=False):
    """
    Cholesky factorization ``A = L Lᵀ``.

    Parameters
    ----------
    a : array_like or scipy.sparse matrix
        Symmetric matrix.
    reorder : bool, optional
        Factor the reverse Cuthill-McKee permutation of a sparse input.

    Returns
    -------
    CholFactor
        The factor.

    Raises
    ------
    NotPositiveDefinite
        If a pivot is not positive; ``pivot`` holds its 1-based index.
    """
    perm = rcm(a) if (reorder and sp.issparse(a)) else None
    dense = _as_square(a, "chol")
    if perm is not None:
        dense = dense[np.ix_(perm, perm)]
    if dense.shape[0] == 0:
        return CholFactor(lower=dense, perm=perm)
    lower, info = scipy.linalg.lapack.dpotrf(dense, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefinite(int(info))
    if info < 0:
        raise ValueError(f"Invalid argument {-info} passed to the Cholesky kernel")
    return CholFactor(lower=lower, perm=perm)


def chol_solve(factor, b):
    """
    Solve ``A x = b`` with a Cholesky factor of ``A``.

    ``b`` may hold several right-hand sides as columns.
    """
    b = _check_rhs(b, factor.order)
    if factor.order == 0:
        return b.copy()
    if factor.perm is None:
        return scipy.linalg.cho_solve((factor.lower, True), b)
    x = np.empty_like(b)
    x[factor.perm] = scipy.linalg.cho_solve((factor.lower, True), b[factor.perm])
    return x


def lu(a):
    """
    LU factorization with partial pivoting.

    Parameters
    ----------
    a : array_like or scipy.sparse matrix
        Square matrix.

    Returns
    -------
    LuFactor
        Factorization with ``diag_ratio`` populated.

    Raises
    ------
    Singular
        If a zero pivot is found.
    """
    dense = _as_square(a, "lu")
    n = dense.shape[0]
    if n == 0:
        return LuFactor(np.zeros(0, dtype=int), dense, dense, 1.0)
    p, lower, upper = scipy.linalg.lu(dense)
    perm = np.argmax(p, axis=0)
    diag = np.abs(np.diag(upper))
    if diag.min() == 0.0:
        raise Singular(f"Zero pivot in column {int(np.argmin(diag)) + 1}")
    return LuFactor(perm, lower, upper, float(diag.max() / diag.min()))


def lu_solve(factor, b):
    """Solve ``A x = b`` with an LU factor of ``A``."""
    b = _check_rhs(b, factor.order)
    if factor.order == 0:
        return b.copy()
    y = scipy.linalg.solve_triangular(factor.lower, b[factor.perm], lower=True, unit_diagonal=True)
    return scipy.linalg.solve_triangular(factor.upper, y, lower=False)


def sym_eig(a):
    """
    Eigen-decomposition of a symmetric matrix.

    Returns
    -------
    tuple of numpy.ndarray
        Eigenvalues in ascending order and orthonormal eigenvectors as columns.
    """
    dense = sym_mat(a)
    try:
        return scipy.linalg.eigh(dense)
    except scipy.linalg.LinAlgError as e:
        raise EigenNonConvergence(f"Symmetric eigensolver failed: {e}") from e


def max_eigval(a, rng=None):
    """
    Largest eigenvalue of a symmetric matrix.

    Large orders go through Lanczos first and fall back to the dense solver
    when it does not converge. ``rng`` (a numpy Generator) fixes the Lanczos
    start vector.
    """
    dense = sym_mat(a)
    n = dense.shape[0]
    if n > LANCZOS_MIN_ORDER:
        try:
            v0 = rng.standard_normal(n) if rng is not None else None
            top = eigsh(dense, k=1, which="LA", v0=v0, maxiter=LANCZOS_MAXITER, return_eigenvectors=False)
            return float(top[0])
        except ArpackNoConvergence:
            logger.debug(f"Lanczos did not converge for order {n}; using dense eigensolver")
    eigenvalues, _ = sym_eig(dense)
    return float(eigenvalues[-1])


def bandwidth(pattern):
    """Half-bandwidth max|i − j| over the nonzero entries of a square pattern."""
    coo = sp.coo_matrix(pattern)
    mask = coo.data != 0
    if not np.any(mask):
        return 0
    return int(np.max(np.abs(coo.row[mask] - coo.col[mask])))


def rcm(pattern):
    """
    Reverse Cuthill-McKee ordering of a symmetric sparsity pattern.

    The returned permutation never increases the bandwidth: when the ordering
    does not strictly reduce it, the identity is returned.

    Parameters
    ----------
    pattern : array_like or scipy.sparse matrix
        Square symmetric pattern; only the nonzero structure is used.

    Returns
    -------
    numpy.ndarray
        Permutation ``σ`` with the permuted matrix ``A[σ][:, σ]``.
    """
    graph = sp.csr_matrix(pattern, dtype=float)
    if graph.shape[0] != graph.shape[1]:
        raise ValueError(f"rcm requires a square pattern, got shape {graph.shape}")
    graph.eliminate_zeros()
    identity = np.arange(graph.shape[0])
    if graph.nnz == 0:
        return identity
    perm = np.asarray(reverse_cuthill_mckee(graph, symmetric_mode=True), dtype=np.intp)
    if bandwidth(graph[perm][:, perm]) < bandwidth(graph):
        return perm
    return identity

