"""
Augmented Schur system: assembly, perturbation, factorization and the
preconditioned Krylov solve shared by predictor and corrector.

The unknowns are ordered ``(Δy, Δxᵘ, λ)`` and the matrix is

    K = [[M_sparse, A′], [A′ᵀ, N]],  A′ = [Aᵘ, U],  N = blockdiag(0, −D⁻¹).
"""

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, gmres

from .cones import ConeKind
from .linalg import NotPositiveDefinite, Singular, chol, chol_solve, lu, lu_solve

logger = logging.getLogger(__name__)

PERTURBATION_FLOOR = 1e-15
# Diagonal entries below this fraction of the largest one trigger perturbation.
SMALL_DIAGONAL = 1e-8
# Fewer than this many small entries may be raised to 1.
BOOST_MAX_ENTRIES = 3
# Cholesky condition estimates above this trigger the boost, then the full LU.
CONDITION_LIMIT = 1e14
CONDITION_OVERFLOW = 1e150
SCHUR_DIAG_RATIO_LIMIT = 1e30
# Schur-path residual after the first Krylov cycle that calls for the full LU.
RESCUE_RESIDUAL = 1e-8


class NonConvergence(RuntimeError):
    """
    Raised when the Krylov refinement leaves a residual above the failure
    threshold.

    Attributes
    ----------
    residual : float
        Relative residual that was achieved.
    """

    def __init__(self, residual, message=None):
        self.residual = residual
        super().__init__(message or f"Krylov refinement stalled at relative residual {residual:.3e}")


@dataclass(frozen=True)
class Perturbation:
    """
    Perturbation ``ρ·diag(M) + λ·Σ A_sparse A_sparseᵀ`` added to ``M_sparse``.

    ``always`` applies it unconditionally; otherwise it is applied only when
    the diagonal of ``M_sparse`` has an entry below 1e-8 of its maximum.
    """

    rho: float = 0.0
    lam: float = 0.0
    always: bool = False

    @classmethod
    def schedule(cls, iteration, rho0=1e-6, lambda0=1e-4, always=False):
        """Geometrically decreasing parameters for ``iteration`` (0-based)."""
        factor = 2.0 ** (-iteration)
        return cls(
            rho=max(PERTURBATION_FLOOR, rho0 * factor),
            lam=max(PERTURBATION_FLOOR, lambda0 * factor),
            always=always,
        )

    @property
    def active(self):
        return self.rho > 0 or self.lam > 0


@dataclass(frozen=True, eq=False)
class AugmentedSystem:
    """
    The augmented Schur system of one iteration.

    Attributes
    ----------
    m_sparse : scipy.sparse.csc_matrix
        ``M_sparse`` as factorized, after perturbation and diagonal boost.
    m_exact : scipy.sparse.csc_matrix
        Unperturbed ``M_sparse``, used for matrix-vector products.
    Au : numpy.ndarray
        ``(m, n_u)`` free-block columns.
    U : numpy.ndarray
        ``(m, k)`` low-rank factor.
    neg_dinv : numpy.ndarray
        ``(k, k)`` matrix ``−D⁻¹``.
    boost_candidates : tuple of int
        The tiny diagonal entries of ``M_sparse`` that factorization may
        raise to 1 when there are fewer than three of them.
    boosted : tuple of int
        Entries actually raised.
    path : str or None
        ``"schur"`` (Cholesky of M plus LU of the Schur complement) or
        ``"full-lu"``; None before factorization.
    """

    m_sparse: sp.csc_matrix
    m_exact: sp.csc_matrix
    Au: np.ndarray
    U: np.ndarray
    neg_dinv: np.ndarray
    perturbed: bool = False
    boost_candidates: tuple = ()
    boosted: tuple = ()
    path: str | None = None
    chol_factor: object = None
    schur_lu: object = None
    m_inv_aprime: np.ndarray | None = None
    full_lu: object = None

    @property
    def m(self):
        return self.m_exact.shape[0]

    @property
    def n_free(self):
        return self.Au.shape[1]

    @property
    def n_plus(self):
        return self.U.shape[1]

    @property
    def order(self):
        return self.m + self.n_free + self.n_plus

    @property
    def a_prime(self):
        return np.hstack([self.Au, self.U])

    @property
    def lower_right(self):
        """``N = blockdiag(0, −D⁻¹)``."""
        return scipy.linalg.block_diag(np.zeros((self.n_free, self.n_free)), self.neg_dinv)

    def matrix(self, exact=True):
        """Dense ``K``; with ``exact=False`` the factorized ``M_sparse`` is used."""
        top = (self.m_exact if exact else self.m_sparse).toarray()
        a_prime = self.a_prime
        return np.block([[top, a_prime], [a_prime.T, self.lower_right]])

    def matvec(self, v):
        """``K v`` with the unperturbed ``M_sparse``."""
        v = np.asarray(v, dtype=float).ravel()
        m = self.m
        top, rest = v[:m], v[m:]
        a_prime = self.a_prime
        return np.concatenate([self.m_exact @ top + a_prime @ rest, a_prime.T @ top + self.lower_right @ rest])

    def precondition(self, v):
        """Apply the factorized inverse of ``K``."""
        if self.path is None:
            raise ValueError("System is not factorized")
        v = np.asarray(v, dtype=float).ravel()
        if self.path == "full-lu":
            return lu_solve(self.full_lu, v)
        m = self.m
        u_hat = chol_solve(self.chol_factor, v[:m])
        if self.order == m:
            return u_hat
        v_hat = lu_solve(self.schur_lu, self.a_prime.T @ u_hat - v[m:])
        return np.concatenate([u_hat - self.m_inv_aprime @ v_hat, v_hat])


@dataclass(frozen=True)
class SolveOutcome:
    """Solution of the augmented system and the Krylov statistics."""

    dy: np.ndarray
    dx_free: np.ndarray
    aux: np.ndarray
    residual: float
    steps: int
    system: AugmentedSystem | None = None


def _sum_sparse(matrices, m):
    total = sp.csc_matrix((m, m))
    for matrix in matrices:
        total = total + matrix
    return sp.csc_matrix(total)


def assemble(ingredients, Au, perturbation=None, m=None):
    """
    Assemble the augmented system from per-block Schur ingredients.

    Parameters
    ----------
    ingredients : list of SchurIngredients
        One per cone block.
    Au : array_like
        ``(m, n_u)`` free-block columns.
    perturbation : Perturbation, optional
        Perturbation parameters; None disables it.
    m : int, optional
        Constraint count, needed only when ``ingredients`` is empty.

    Returns
    -------
    AugmentedSystem
        Unfactorized system.
    """
    Au = np.asarray(Au, dtype=float)
    m = Au.shape[0] if m is None else m
    exact = _sum_sparse([ing.m_sparse for ing in ingredients], m)
    ranks = [ing.U for ing in ingredients if ing.rank]
    U = np.hstack(ranks) if ranks else np.zeros((m, 0))
    blocks = [ing.neg_dinv for ing in ingredients if ing.rank]
    neg_dinv = scipy.linalg.block_diag(*blocks) if blocks else np.zeros((0, 0))

    diag = exact.diagonal()
    factored = exact
    perturbed = False
    if m and perturbation is not None and perturbation.active:
        max_diag = float(np.max(diag))
        if perturbation.always or float(np.min(diag)) < SMALL_DIAGONAL * max_diag:
            gram = _sum_sparse([ing.sparse_gram for ing in ingredients], m)
            factored = sp.csc_matrix(exact + perturbation.rho * sp.diags(diag) + perturbation.lam * gram)
            perturbed = True
            logger.debug(f"Perturbing M_sparse with rho={perturbation.rho:.2e}, lambda={perturbation.lam:.2e}")

    candidates = ()
    if m:
        current = factored.diagonal()
        small = np.flatnonzero(current < SMALL_DIAGONAL * float(np.max(current)))
        if 0 < small.size < BOOST_MAX_ENTRIES:
            candidates = tuple(int(i) for i in small)

    return AugmentedSystem(
        m_sparse=sp.csc_matrix(factored),
        m_exact=exact,
        Au=Au,
        U=U,
        neg_dinv=np.asarray(neg_dinv, dtype=float),
        perturbed=perturbed,
        boost_candidates=candidates,
    )


def condition_estimate(factor):
    """
    ``(max Lᵢᵢ / min Lᵢᵢ)²`` of a Cholesky factor, a cheap lower bound on
    the condition number of the factored matrix.
    """
    diag = np.abs(np.diag(factor.lower))
    if diag.size == 0:
        return 1.0
    smallest = float(np.min(diag))
    if smallest == 0.0:
        return math.inf
    ratio = float(np.max(diag)) / smallest
    return ratio * ratio if ratio < CONDITION_OVERFLOW else math.inf


def _boost(system):
    boosted = sp.lil_matrix(system.m_sparse)
    for i in system.boost_candidates:
        boosted[i, i] = 1.0
    logger.debug(f"Raised diagonal entries {list(system.boost_candidates)} of M_sparse to 1")
    return replace(system, m_sparse=sp.csc_matrix(boosted), boosted=system.boost_candidates)


def _checked_cholesky(system):
    """
    Cholesky factor of ``M_sparse`` with the diagonal boost applied when the
    factor is ill conditioned and only a few diagonal entries are tiny.

    Raises
    ------
    NotPositiveDefinite, Singular
        When the factor fails or stays ill conditioned.
    """
    try:
        factor = chol(system.m_sparse, reorder=True)
        estimate = condition_estimate(factor)
    except NotPositiveDefinite:
        if not system.boost_candidates:
            raise
        factor, estimate = None, math.inf
    if estimate > CONDITION_LIMIT and system.boost_candidates:
        system = _boost(system)
        factor = chol(system.m_sparse, reorder=True)
        estimate = condition_estimate(factor)
    if estimate > CONDITION_LIMIT:
        raise Singular(f"M_sparse condition estimate {estimate:.2e} exceeds {CONDITION_LIMIT:.0e}")
    return system, factor


def full_factorization(system):
    """
    LU factorization of the whole augmented matrix (path ``"full-lu"``).

    Raises
    ------
    Singular
        If the LU meets a zero pivot.
    """
    full_lu = lu(system.matrix(exact=False))
    return replace(system, path="full-lu", full_lu=full_lu, chol_factor=None, schur_lu=None, m_inv_aprime=None)


def factorize(system):
    """
    Factorize the augmented system.

    The Schur path (Cholesky of ``M_sparse`` and LU of
    ``S = A′ᵀM⁻¹A′ − N``) is tried first. The full LU of ``K`` is used when
    the Cholesky factorization fails, its condition estimate stays above
    1e14 after the diagonal boost, ``S`` is singular or the diagonal ratio of
    its LU exceeds 1e30.

    Raises
    ------
    Singular
        If the full LU meets a zero pivot.
    """
    try:
        schur_system, factor = _checked_cholesky(system)
        if schur_system.order == schur_system.m:
            return replace(schur_system, path="schur", chol_factor=factor)
        a_prime = schur_system.a_prime
        m_inv_aprime = chol_solve(factor, a_prime)
        schur = a_prime.T @ m_inv_aprime - schur_system.lower_right
        schur_lu = lu(schur)
        if schur_lu.diag_ratio > SCHUR_DIAG_RATIO_LIMIT:
            raise Singular(f"Schur complement diagonal ratio {schur_lu.diag_ratio:.2e}")
        return replace(
            schur_system, path="schur", chol_factor=factor, schur_lu=schur_lu, m_inv_aprime=m_inv_aprime
        )
    except (NotPositiveDefinite, Singular) as e:
        logger.debug(f"Schur path failed ({e}); factorizing the full augmented matrix")
    return full_factorization(system)


def _refine(system, rhs, solution, tol, restart, cycles):
    n = rhs.shape[0]
    operator = LinearOperator((n, n), matvec=system.matvec, dtype=float)
    preconditioner = LinearOperator((n, n), matvec=system.precondition, dtype=float)
    counter = []
    solution, _ = gmres(
        operator,
        rhs,
        x0=solution,
        M=preconditioner,
        rtol=tol,
        atol=0.0,
        restart=restart,
        maxiter=cycles,
        callback=counter.append,
        callback_type="pr_norm",
    )
    residual = float(np.linalg.norm(rhs - system.matvec(solution))) / float(np.linalg.norm(rhs))
    return solution, residual, len(counter)


def solve(system, h, r_free=None, tol=1e-11, maxiter=50, fail_tol=1e-4):
    """
    Solve ``K (Δy, Δxᵘ, λ) = (h, Rdᵘ, 0)``.

    The factorization gives the starting point; restarted GMRES preconditioned
    by the same factorization refines it against the unperturbed operator.
    When a Schur-path system still leaves a relative residual above 1e-8
    after the first GMRES cycle, the full LU of ``K`` replaces it and the
    refinement continues from there.

    Parameters
    ----------
    system : AugmentedSystem
        Factorized system.
    h : array_like
        Top right-hand side of length ``m``.
    r_free : array_like, optional
        Free-block dual residuals.
    tol : float
        Target relative residual.
    maxiter : int
        Cap on Krylov steps.
    fail_tol : float
        Residual above which NonConvergence is raised.

    Returns
    -------
    SolveOutcome
        ``Δy``, ``Δxᵘ``, the discarded auxiliary ``λ``, the achieved
        relative residual, the number of Krylov steps and the system that
        produced the solution.
    """
    m, nu = system.m, system.n_free
    h = np.asarray(h, dtype=float)
    r_free = np.zeros(nu) if r_free is None else np.asarray(r_free, dtype=float)
    if h.shape != (m,) or r_free.shape != (nu,):
        raise ValueError(f"Right-hand side shapes {h.shape}, {r_free.shape} do not match m={m}, n_u={nu}")
    rhs = np.concatenate([h, r_free, np.zeros(system.n_plus)])
    n = rhs.shape[0]
    norm = float(np.linalg.norm(rhs))
    if norm == 0.0:
        return SolveOutcome(np.zeros(m), np.zeros(nu), np.zeros(system.n_plus), 0.0, 0, system)

    solution = system.precondition(rhs)
    residual = float(np.linalg.norm(rhs - system.matvec(solution))) / norm
    steps = 0
    if residual > tol:
        restart = min(maxiter, n)
        cycles = math.ceil(maxiter / restart)
        solution, residual, done = _refine(system, rhs, solution, tol, restart, 1)
        steps += done
        cycles -= 1
        if residual > RESCUE_RESIDUAL and system.path == "schur":
            logger.debug(f"Schur preconditioner left residual {residual:.2e}; switching to the full LU")
            system = full_factorization(system)
            solution = system.precondition(rhs)
            residual = float(np.linalg.norm(rhs - system.matvec(solution))) / norm
        if residual > tol and cycles > 0:
            solution, residual, done = _refine(system, rhs, solution, tol, restart, cycles)
            steps += done
    if residual > fail_tol:
        raise NonConvergence(residual)
    if residual > tol:
        logger.debug(f"Krylov refinement stopped at relative residual {residual:.2e} after {steps} steps")
    return SolveOutcome(solution[:m], solution[m : m + nu], solution[m + nu :], residual, steps, system)


def corrector_rhs(h_pred, p, scalings, dx, dz, targets_pred, targets_corr, second_order):
    """
    Corrector right-hand side from the predictor's.

    ``h_corr = h_pred − Σ Aᵖ(E⁻¹R_comp(corr target) − E⁻¹R_comp(pred target))
    + Σ Aᵖ Eᵖ⁻¹((GΔx)∘(G⁻¹Δz))`` over cone blocks.

    Parameters
    ----------
    second_order : list of numpy.ndarray
        Per block second-order terms of the predictor direction ``(dx, dz)``.
    """
    h = np.array(h_pred, dtype=float)
    for q, (spec, scaling) in enumerate(zip(p.specs, scalings)):
        if spec.kind is ConeKind.FREE:
            continue
        shift = scaling.einv_rcomp(targets_corr[q]) - scaling.einv_rcomp(targets_pred[q])
        h -= p.apply_block_operator(q, shift - second_order[q])
    return h
