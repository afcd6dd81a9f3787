"""
Per-iteration ingredients of the search direction.

For each block a scaling object carries what the reduced Newton system needs:
the map ``H = E⁻¹F``, the right-hand side ``E⁻¹R_comp``, the second-order
corrector term and the block's contribution ``Mᵖ`` to the Schur matrix.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .cones import (
    BlockVec,
    ConeBoundaryError,
    ConeKind,
    arw_apply,
    arw_solve,
    gamma_soc,
    jordan_inv,
    soc_reflect,
)
from .linalg import NotPositiveDefinite, chol, sym_eig
from .problem import Direction

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Residuals:
    """
    Primal and dual residuals of an iterate.

    Attributes
    ----------
    rprim : numpy.ndarray
        ``b − Σ Aᵖxᵖ``.
    rdual : BlockVec
        ``cᵖ − zᵖ − (Aᵖ)ᵀy`` for every block.
    """

    rprim: np.ndarray
    rdual: BlockVec

    @property
    def rprim_norm(self):
        return float(np.linalg.norm(self.rprim))

    @property
    def rdual_norms(self):
        return self.rdual.block_norms()


def residuals(p, x, y, z):
    """Residuals of ``(x, y, z)`` for problem ``p``."""
    rprim = p.b - p.apply_operator(x)
    rdual = p.C - z - p.apply_adjoint(y)
    return Residuals(rprim, rdual)


def mu(x, z, specs):
    """
    Average complementarity over the cone blocks with zero barrier weight.

    Raises
    ------
    ValueError
        If no such block exists.
    """
    numerator, count = 0.0, 0
    for spec, xb, zb in zip(specs, x, z):
        if spec.kind is ConeKind.FREE or spec.barrier != 0:
            continue
        numerator += float(np.sum(xb * zb))
        count += spec.dim
    if count == 0:
        raise ValueError("mu needs at least one cone block with zero barrier weight")
    return numerator / count


def _to_boundary_error(e):
    return ConeBoundaryError(f"Iterate is not strictly interior: {e}")


def nt_scaling_sdp(x, z):
    """
    Nesterov-Todd scaling matrix ``W`` with ``W z W = x``.

    ``W`` is built from the Cholesky factor ``z = UᵀU`` and the
    eigendecomposition ``U x Uᵀ = VΛVᵀ`` as ``W = SᵀS`` with
    ``S = Λ^{1/4}(U⁻¹V)ᵀ``.
    """
    try:
        upper = chol(z).lower.T
    except NotPositiveDefinite as e:
        raise _to_boundary_error(e) from e
    eigenvalues, vectors = sym_eig(upper @ x @ upper.T)
    if eigenvalues[0] <= 0:
        raise ConeBoundaryError("Primal semidefinite block is not positive definite")
    s = (eigenvalues**0.25)[:, None] * scipy.linalg.solve_triangular(upper, vectors, lower=False).T
    w = s.T @ s
    return (w + w.T) / 2


def _unit_soc(v):
    """``v`` rescaled so that ``γ = 1``, recomputing the head from the tail."""
    tail = v[1:]
    return np.concatenate(([math.sqrt(1.0 + float(tail @ tail))], tail))


def nt_scaling_soc(x, z):
    """
    Nesterov-Todd scaling ``(ω, t)`` of a second-order cone block.

    Returns
    -------
    tuple
        ``ω = sqrt(γ(z)/γ(x))`` and ``t = ξ/γ(ξ)`` with ``γ(t) = 1``.
    """
    gx, gz = gamma_soc(x), gamma_soc(z)
    if x[0] <= 0 or z[0] <= 0 or gx <= 0 or gz <= 0:
        raise ConeBoundaryError("Second-order cone iterate is not strictly interior")
    omega = math.sqrt(gz / gx)
    xi = np.concatenate(([z[0] / omega + omega * x[0]], z[1:] / omega - omega * x[1:]))
    return omega, _unit_soc(xi / gamma_soc(xi))


def hkm_scaling_soc(z):
    """``(γ(z), z/γ(z))``, the scaling with ``G e = z``."""
    gz = gamma_soc(z)
    if z[0] <= 0 or gz <= 0:
        raise ConeBoundaryError("Second-order cone iterate is not strictly interior")
    return gz, z / gz


def soc_scale(omega, t, v):
    """``G v`` for the second-order cone scaling defined by ``(ω, t)``."""
    tbar, vbar = t[1:], v[1:]
    dot = tbar @ vbar
    head = t[0] * v[0] + dot
    tail = v[0] * tbar + vbar + dot / (1 + t[0]) * tbar
    return omega * np.concatenate(([head], tail))


def soc_unscale(omega, t, v):
    """``G⁻¹ v`` for the second-order cone scaling defined by ``(ω, t)``."""
    tbar, vbar = t[1:], v[1:]
    dot = tbar @ vbar
    head = t[0] * v[0] - dot
    tail = -v[0] * tbar + vbar + dot / (1 + t[0]) * tbar
    return np.concatenate(([head], tail)) / omega


def soc_scaling_matrix(omega, t):
    """Dense ``G`` for tests and diagnostics."""
    n = t.shape[0]
    return np.column_stack([soc_scale(omega, t, e) for e in np.eye(n)])


def einv_rcomp(spec, x, z, target):
    """``target·z⁻ᴶ − x``, the same for both directions."""
    if spec.kind is ConeKind.FREE:
        raise ValueError("einv_rcomp is undefined on free blocks")
    return target * jordan_inv(z, spec) - np.asarray(x, dtype=float)


class BlockScaling(ABC):
    """
    Scaling data of one block for one iteration.

    Parameters
    ----------
    spec : BlockSpec
        Block shape.
    x, z : numpy.ndarray
        Current primal and dual payloads.
    """

    direction = None

    def __init__(self, spec, x, z):
        self.spec = spec
        self.x = np.asarray(x, dtype=float)
        self.z = np.asarray(z, dtype=float)

    @property
    def label(self):
        return type(self).__name__

    @abstractmethod
    def h_apply(self, r):
        """``H r`` with ``H = E⁻¹F``."""
        pass

    @abstractmethod
    def second_order(self, dx, dz):
        """``E⁻¹((G dx) ∘ (G⁻¹ dz))``, the corrector's second-order term."""
        pass

    def einv_rcomp(self, target):
        return einv_rcomp(self.spec, self.x, self.z, target)

    def __repr__(self):
        return f"{self.label}({self.spec.kind.name}{self.spec.dim})"


class HkmSdp(BlockScaling):
    """HKM scaling ``G = z^{1/2}`` of a semidefinite block."""

    direction = Direction.HKM

    def __init__(self, spec, x, z):
        super().__init__(spec, x, z)
        self.z_inv = jordan_inv(self.z, spec)

    @property
    def factors(self):
        """``(L, R)`` with ``⟨a_k, H a_l⟩ = ⟨a_k, L a_l R⟩``."""
        return self.x, self.z_inv

    def h_apply(self, r):
        return (self.x @ r @ self.z_inv + self.z_inv @ r @ self.x) / 2

    def second_order(self, dx, dz):
        return (dx @ dz @ self.z_inv + self.z_inv @ dz @ dx) / 2


class NtSdp(BlockScaling):
    """Nesterov-Todd scaling of a semidefinite block, ``G = W^{-1/2}``."""

    direction = Direction.NT

    def __init__(self, spec, x, z):
        super().__init__(spec, x, z)
        self.W = nt_scaling_sdp(self.x, self.z)
        w_vals, w_vecs = sym_eig(self.W)
        if w_vals[0] <= 0:
            raise ConeBoundaryError("Scaling matrix W is not positive definite")
        self.G = (w_vecs / np.sqrt(w_vals)) @ w_vecs.T
        self.G_inv = (w_vecs * np.sqrt(w_vals)) @ w_vecs.T
        self.d_vals, self.d_vecs = sym_eig(self.G @ self.x @ self.G)

    @property
    def factors(self):
        return self.W, self.W

    def h_apply(self, r):
        return self.W @ r @ self.W

    def second_order(self, dx, dz):
        rhs = (self.G @ dx @ dz @ self.G_inv + self.G_inv @ dz @ dx @ self.G) / 2
        q = self.d_vecs
        rotated = q.T @ rhs @ q
        solved = 2 * rotated / (self.d_vals[:, None] + self.d_vals[None, :])
        scaled = q @ solved @ q.T
        return self.G_inv @ scaled @ self.G_inv


class HkmSoc(BlockScaling):
    """HKM scaling of a second-order cone block, with ``G e = z``."""

    direction = Direction.HKM

    def __init__(self, spec, x, z):
        super().__init__(spec, x, z)
        self.gamma_z, self.t = hkm_scaling_soc(self.z)
        self.omega = self.gamma_z
        self.z_inv = jordan_inv(self.z, spec)
        self.dd = float(self.x @ self.z) / self.gamma_z**2

    def h_apply(self, r):
        r = np.asarray(r, dtype=float)
        return -self.dd * soc_reflect(r) + (self.z_inv @ r) * self.x + (r @ self.x) * self.z_inv

    def second_order(self, dx, dz):
        scaled = arw_apply(soc_scale(self.omega, self.t, dx), soc_unscale(self.omega, self.t, dz))
        return soc_unscale(self.omega, self.t, scaled)


class NtSoc(BlockScaling):
    """Nesterov-Todd scaling of a second-order cone block, with ``G⁻¹z = Gx``."""

    direction = Direction.NT

    def __init__(self, spec, x, z):
        super().__init__(spec, x, z)
        self.omega, self.t = nt_scaling_soc(self.x, self.z)
        self.t_reflected = soc_reflect(self.t)
        self.v = soc_scale(self.omega, self.t, self.x)

    def h_apply(self, r):
        r = np.asarray(r, dtype=float)
        return (-soc_reflect(r) + 2 * (self.t_reflected @ r) * self.t_reflected) / self.omega**2

    def second_order(self, dx, dz):
        product = arw_apply(soc_scale(self.omega, self.t, dx), soc_unscale(self.omega, self.t, dz))
        return soc_unscale(self.omega, self.t, arw_solve(self.v, product))


class LinScaling(BlockScaling):
    """Identity scaling of a linear block, used by both directions."""

    def __init__(self, spec, x, z):
        super().__init__(spec, x, z)
        if np.any(self.x <= 0) or np.any(self.z <= 0):
            raise ConeBoundaryError("Linear block iterate has a nonpositive component")
        self.ratio = self.x / self.z

    def h_apply(self, r):
        return self.ratio * np.asarray(r, dtype=float)

    def second_order(self, dx, dz):
        return dx * dz / self.z


class FreeScaling(BlockScaling):
    """Free blocks carry no scaling; they enter the Schur system through ``Aᵘ``."""

    def h_apply(self, r):
        raise ValueError("H is undefined on free blocks")

    def second_order(self, dx, dz):
        return np.zeros_like(dx)

    def einv_rcomp(self, target):
        raise ValueError("einv_rcomp is undefined on free blocks")


SCALINGS = {
    (ConeKind.SDP, Direction.HKM): HkmSdp,
    (ConeKind.SDP, Direction.NT): NtSdp,
    (ConeKind.SOC, Direction.HKM): HkmSoc,
    (ConeKind.SOC, Direction.NT): NtSoc,
}


def build_scaling(spec, x, z, direction):
    """Scaling object of one block for the given direction."""
    direction = Direction.parse(direction)
    if spec.kind is ConeKind.LIN:
        return LinScaling(spec, x, z)
    if spec.kind is ConeKind.FREE:
        return FreeScaling(spec, x, z)
    return SCALINGS[(spec.kind, direction)](spec, x, z)


def build_scalings(specs, x, z, direction):
    return [build_scaling(spec, xb, zb, direction) for spec, xb, zb in zip(specs, x, z)]


def h_rdual(spec, scaling, r, direction=None):
    """
    ``Hᵖ r`` for one block.

    Raises
    ------
    ValueError
        If the scaling does not belong to ``spec`` or to ``direction``.
    """
    if scaling.spec != spec:
        raise ValueError(f"Scaling {scaling!r} does not match block {spec}")
    if direction is not None and scaling.direction is not None and scaling.direction is not Direction.parse(direction):
        raise ValueError(f"Scaling {scaling!r} was built for {scaling.direction.value}, not {direction}")
    r = np.asarray(r, dtype=float)
    if r.shape != spec.payload_shape:
        raise ValueError(f"r has shape {r.shape}, expected {spec.payload_shape}")
    return scaling.h_apply(r)


class Strategy(Enum):
    """How the entries of ``L a_j R`` needed for one Schur column are formed."""

    F1 = "F1"
    F2 = "F2"
    F3 = "F3"


@dataclass(frozen=True)
class SdpSchurPlan:
    """
    Column schedule of a semidefinite block's Schur matrix.

    Attributes
    ----------
    order : numpy.ndarray
        Constraints sorted by ascending nonzero count.
    patterns : list of tuple
        Per constraint ``(linear index, rows, cols, values)`` of its nonzeros.
    needed : list of numpy.ndarray
        Per position in ``order`` the sorted union of linear indices of the
        constraints up to that position.
    strategies : list of Strategy
        Per position in ``order``.
    """

    dim: int
    order: np.ndarray
    patterns: list
    needed: list
    strategies: list


def strategy_costs(n, nnz, needed):
    """Multiplication counts of the three strategies."""
    return {
        Strategy.F1: n * nnz + n**3,
        Strategy.F2: n * (nnz + needed),
        Strategy.F3: 2 * nnz * needed,
    }


def plan_sdp_block(a, strategy=None):
    """
    Plan the Schur computation of a semidefinite block.

    Parameters
    ----------
    a : numpy.ndarray
        ``(m, n, n)`` stack of symmetric constraint matrices.
    strategy : Strategy or str, optional
        Force one strategy for every column instead of the cheapest one.

    Returns
    -------
    SdpSchurPlan
        The plan.
    """
    m, n = a.shape[0], a.shape[1]
    patterns = []
    for k in range(m):
        rows, cols = np.nonzero(a[k])
        patterns.append((rows * n + cols, rows, cols, a[k][rows, cols]))
    counts = np.array([len(pattern[0]) for pattern in patterns], dtype=int)
    order = np.argsort(counts, kind="stable")
    forced = Strategy(strategy) if strategy is not None else None
    needed, strategies = [], []
    union = np.zeros(0, dtype=int)
    for k in order:
        union = np.union1d(union, patterns[k][0])
        needed.append(union)
        if forced is not None:
            strategies.append(forced)
        else:
            costs = strategy_costs(n, counts[k], union.size)
            strategies.append(min(costs, key=costs.get))
    logger.debug(f"Schur plan for order {n}: {[s.value for s in strategies]}")
    return SdpSchurPlan(n, order, patterns, needed, strategies)


def _needed_entries(strategy, left, right, ak, pattern, needed, n):
    alpha, beta = needed // n, needed % n
    if strategy is Strategy.F1:
        full = left @ (ak @ right)
        return full.ravel()[needed]
    if strategy is Strategy.F2:
        partial = ak @ right
        return np.einsum("qk,kq->q", left[alpha, :], partial[:, beta])
    _, rows, cols, vals = pattern
    return np.einsum("qt,t,tq->q", left[np.ix_(alpha, rows)], vals, right[np.ix_(cols, beta)])


def schur_block_sdp(a, scaling, plan=None, strategy=None):
    """
    Schur contribution ``M_kl = ⟨a_k, H a_l⟩`` of a semidefinite block, with
    ``H a_l`` the symmetric part of ``L a_l R``.

    ``(L, R)`` is ``(x, z⁻¹)`` for HKM and ``(W, W)`` for NT. Only the
    entries of ``L a_l R`` on the nonzero positions of ``a_k`` with ``k``
    not after ``l`` in the plan order are formed; the rest is mirrored.

    Returns
    -------
    numpy.ndarray
        Symmetric ``(m, m)`` matrix.
    """
    if plan is None:
        plan = plan_sdp_block(a, strategy)
    left, right = scaling.factors
    m, n = a.shape[0], plan.dim
    M = np.zeros((m, m))
    for j, col in enumerate(plan.order):
        needed = plan.needed[j]
        if needed.size == 0:
            continue
        values = _needed_entries(plan.strategies[j], left, right, a[col], plan.patterns[col], needed, n)
        # needed is closed under transposition
        values = (values + values[np.searchsorted(needed, (needed % n) * n + needed // n)]) / 2
        for row in plan.order[: j + 1]:
            lin, _, _, vals = plan.patterns[row]
            if lin.size == 0:
                continue
            entry = float(vals @ values[np.searchsorted(needed, lin)])
            M[row, col] = entry
            M[col, row] = entry
    return M


@dataclass(frozen=True)
class SchurIngredients:
    """
    Contribution of one block to the augmented Schur system,
    ``Mᵖ = M_sparse + U D Uᵀ`` with ``negDinv = −D⁻¹``.

    Attributes
    ----------
    m_sparse : scipy.sparse.csc_matrix
        Sparse positive semidefinite part.
    U : numpy.ndarray
        ``(m, k)`` low-rank factor, ``k = 0`` without dense columns.
    neg_dinv : numpy.ndarray
        ``(k, k)`` matrix ``−D⁻¹``.
    dense_columns : numpy.ndarray
        Indices of the dense columns of ``Aᵖ``.
    sparse_gram : scipy.sparse.csc_matrix
        ``A_sparse A_sparseᵀ``, used by the perturbation.
    """

    m_sparse: sp.csc_matrix
    U: np.ndarray
    neg_dinv: np.ndarray
    dense_columns: np.ndarray
    sparse_gram: sp.csc_matrix

    @property
    def rank(self):
        return self.U.shape[1]

    def dense_equivalent(self):
        """``M_sparse + U D Uᵀ`` as a dense matrix."""
        dense = self.m_sparse.toarray()
        if self.rank:
            dense = dense + self.U @ (-scipy.linalg.inv(self.neg_dinv)) @ self.U.T
        return dense


def dense_column_split(a, ratio):
    """
    Indices of the sparse and dense columns of the ``(m, n)`` matrix ``a``.

    A column is dense when its share of nonzero entries exceeds ``ratio``.
    """
    m = a.shape[0]
    if m == 0:
        return np.arange(a.shape[1]), np.zeros(0, dtype=int)
    fill = np.count_nonzero(a, axis=0) / m
    return np.flatnonzero(fill <= ratio), np.flatnonzero(fill > ratio)


def _ingredients(m_sparse, U, neg_dinv, dense, gram):
    return SchurIngredients(sp.csc_matrix(m_sparse), U, neg_dinv, dense, sp.csc_matrix(gram))


def schur_block_lowrank(spec, a, scaling, dense_ratio=0.4):
    """
    Sparse plus low-rank split of the Schur contribution of a second-order
    cone or linear block.

    Parameters
    ----------
    spec : BlockSpec
        Block shape.
    a : numpy.ndarray
        ``(m, n)`` matrix whose rows are the constraints ``a_k``.
    scaling : BlockScaling
        Scaling of the block.
    dense_ratio : float
        Column fill ratio above which a column is treated as dense.

    Returns
    -------
    SchurIngredients
        The split; without dense columns ``M_sparse`` is the full ``Mᵖ``.
    """
    if spec.kind not in (ConeKind.SOC, ConeKind.LIN):
        raise ValueError(f"Low-rank split applies to second-order and linear blocks, not {spec.kind.name}")
    sparse_cols, dense_cols = dense_column_split(a, dense_ratio)
    a_s, a_d = a[:, sparse_cols], a[:, dense_cols]
    m = a.shape[0]
    gram = a_s @ a_s.T
    no_rank = (np.zeros((m, 0)), np.zeros((0, 0)))

    if spec.kind is ConeKind.LIN:
        ratio = scaling.ratio
        if dense_cols.size == 0:
            return _ingredients((a * ratio) @ a.T, *no_rank, dense_cols, gram)
        m_sparse = (a_s * ratio[sparse_cols]) @ a_s.T
        U = a_d * np.sqrt(ratio[dense_cols])
        return _ingredients(m_sparse, U, -np.eye(dense_cols.size), dense_cols, gram)

    k = a[:, 0]
    if isinstance(scaling, HkmSoc):
        if scaling.gamma_z <= 0:
            raise ConeBoundaryError("γ(z) vanishes")
        dd = scaling.dd
        u = a @ scaling.x
        v = a @ scaling.z_inv
        if dense_cols.size == 0:
            full = dd * (a @ a.T - 2 * np.outer(k, k)) + np.outer(u, v) + np.outer(v, u)
            return _ingredients(full, *no_rank, dense_cols, gram)
        g2 = scaling.gamma_z**2
        U = np.column_stack([math.sqrt(dd) * a_d, u, g2 * v, -math.sqrt(2 * dd) * k])
        d = dense_cols.size
        neg_dinv = np.zeros((d + 3, d + 3))
        neg_dinv[:d, :d] = -np.eye(d)
        neg_dinv[d, d + 1] = neg_dinv[d + 1, d] = -g2
        neg_dinv[d + 2, d + 2] = 1.0
        return _ingredients(dd * gram, U, neg_dinv, dense_cols, gram)

    if isinstance(scaling, NtSoc):
        omega = scaling.omega
        if omega <= 0:
            raise ConeBoundaryError("ω vanishes")
        u = a @ scaling.t_reflected
        if dense_cols.size == 0:
            full = (a @ a.T - 2 * np.outer(k, k) + 2 * np.outer(u, u)) / omega**2
            return _ingredients(full, *no_rank, dense_cols, gram)
        U = np.column_stack([a_d / omega, math.sqrt(2) * u, math.sqrt(2) * k])
        d = dense_cols.size
        neg_dinv = np.zeros((d + 2, d + 2))
        neg_dinv[:d, :d] = -np.eye(d)
        neg_dinv[d, d] = -(omega**2)
        neg_dinv[d + 1, d + 1] = omega**2
        return _ingredients(gram / omega**2, U, neg_dinv, dense_cols, gram)

    raise ValueError(f"No low-rank split for scaling {scaling!r}")


def sdp_ingredients(p, q, scaling, plan=None):
    """Schur contribution of semidefinite block ``q`` with an empty low-rank part."""
    m = p.m
    M = schur_block_sdp(p.A[q], scaling, plan)
    gram = (p.At[q].T @ p.At[q]).toarray()
    return _ingredients(M, np.zeros((m, 0)), np.zeros((0, 0)), np.zeros(0, dtype=int), gram)


def schur_ingredients(p, scalings, plans=None, dense_ratio=0.4):
    """
    Schur contributions of every cone block.

    Parameters
    ----------
    p : ProblemData
        Problem.
    scalings : list of BlockScaling
        One per block.
    plans : dict, optional
        Semidefinite plans keyed by block index.
    dense_ratio : float
        Dense-column threshold.

    Returns
    -------
    list of SchurIngredients
        One entry per non-free block, in block order.
    """
    plans = plans or {}
    out = []
    for q, (spec, scaling) in enumerate(zip(p.specs, scalings)):
        if spec.kind is ConeKind.FREE:
            continue
        if spec.kind is ConeKind.SDP:
            out.append(sdp_ingredients(p, q, scaling, plans.get(q)))
        else:
            out.append(schur_block_lowrank(spec, p.A[q], scaling, dense_ratio))
    return out


def free_blocks(p):
    return [q for q, spec in enumerate(p.specs) if spec.kind is ConeKind.FREE]


def free_operator(p):
    """``Aᵘ``: the ``(m, n_u)`` constraint columns of all free blocks."""
    blocks = free_blocks(p)
    if not blocks:
        return np.zeros((p.m, 0))
    return np.hstack([p.A[q] for q in blocks])


def free_rhs(p, res):
    blocks = free_blocks(p)
    if not blocks:
        return np.zeros(0)
    return np.concatenate([res.rdual[q] for q in blocks])


def compute_h(p, res, scalings, targets, second_order=None):
    """
    Right-hand side ``h = Rp − Σ Aᵖ(E⁻¹R_comp − Hᵖ Rdᵖ)`` over cone blocks.

    Parameters
    ----------
    targets : sequence of float
        Per block ``max{σμ, νᵖ}``; ignored on free blocks.
    second_order : list of numpy.ndarray, optional
        Per block corrector term subtracted from ``E⁻¹R_comp``.
    """
    h = res.rprim.copy()
    for q, (spec, scaling) in enumerate(zip(p.specs, scalings)):
        if spec.kind is ConeKind.FREE:
            continue
        term = scaling.einv_rcomp(targets[q]) - scaling.h_apply(res.rdual[q])
        if second_order is not None:
            term = term - second_order[q]
        h -= p.apply_block_operator(q, term)
    return h


def recover_dxdz(p, res, scalings, dy, dx_free, targets, second_order=None):
    """
    Primal and dual directions from ``Δy``.

    ``Δzᵖ = Rdᵖ − (Aᵖ)ᵀΔy`` and ``Δxᵖ = E⁻¹R_comp − HᵖΔzᵖ`` on cone blocks;
    free blocks take ``Δx`` from ``dx_free`` and ``Δz = 0``.

    Returns
    -------
    tuple of BlockVec
        ``(Δx, Δz)``.
    """
    dxs, dzs = [], []
    offset = 0
    for q, (spec, scaling) in enumerate(zip(p.specs, scalings)):
        if spec.kind is ConeKind.FREE:
            dxs.append(np.asarray(dx_free[offset : offset + spec.dim], dtype=float))
            dzs.append(np.zeros(spec.dim))
            offset += spec.dim
            continue
        dz = res.rdual[q] - p.apply_block_adjoint(q, dy)
        dx = scaling.einv_rcomp(targets[q]) - scaling.h_apply(dz)
        if second_order is not None:
            dx = dx - second_order[q]
        if spec.kind is ConeKind.SDP:
            dx = (dx + dx.T) / 2
            dz = (dz + dz.T) / 2
        dxs.append(dx)
        dzs.append(dz)
    return BlockVec(p.specs, dxs), BlockVec(p.specs, dzs)


def second_order_terms(scalings, dx, dz):
    """Per block corrector terms from the predictor direction."""
    return [
        np.zeros_like(dxb) if scaling.spec.kind is ConeKind.FREE else scaling.second_order(dxb, dzb)
        for scaling, dxb, dzb in zip(scalings, dx, dz)
    ]
