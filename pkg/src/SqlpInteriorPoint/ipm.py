"""
Infeasible primal-dual path-following driver with a predictor-corrector
step.

Each iteration builds the block scalings and the augmented Schur system
once, factorizes it once and solves it twice: for the affine predictor and
for the centered corrector with its second-order term.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .cones import BlockVec, ConeBoundaryError, ConeKind, barrier_terms, block_inner, identity, inner, soc_reflect
from .directions import (
    build_scalings,
    compute_h,
    free_operator,
    free_rhs,
    mu,
    plan_sdp_block,
    recover_dxdz,
    residuals,
    schur_ingredients,
    second_order_terms,
)
from .linalg import EigenNonConvergence, NotPositiveDefinite, Singular, chol, max_eigval
from .preprocess import (
    SplitUnrestricted,
    TransformLog,
    augment_artificial,
    detect_implicit_unrestricted,
    postprocess,
    preprocess,
)
from .problem import IterationRecord, SolveResult, SolverOptions, SolveStatus, objectives, validate
from .schur import NonConvergence, Perturbation, assemble, corrector_rhs, factorize
from .schur import solve as solve_augmented

logger = logging.getLogger(__name__)

# Below this μ the centering exponent may drop towards 1.
SMALL_MU = 1e-6
SLOW_PROGRESS_WINDOW = 5
SLOW_PROGRESS_RATIO = 0.9
SLOW_PROGRESS_RELGAP = 1e4
GAP_DIVERGENCE = 1e3
RECENTER_FRACTION = 0.8
DUAL_SHIFT = 0.1

NUMERICAL_ERRORS = (
    ConeBoundaryError,
    NotPositiveDefinite,
    Singular,
    EigenNonConvergence,
    NonConvergence,
    np.linalg.LinAlgError,
)


class Metrics(NamedTuple):
    gap: float
    relgap: float
    pinfeas: float
    dinfeas: float


class Certificates(NamedTuple):
    """
    Infeasibility ratios of an iterate.

    ``primal`` is ``bᵀy / Σ‖(Aᵖ)ᵀy + zᵖ‖`` when ``bᵀy > 0`` and ``dual`` is
    ``−⟨c,x⟩ / ‖Σ Aᵖxᵖ‖`` when ``⟨c,x⟩ < 0``; both are 0 otherwise.
    """

    primal: float = 0.0
    dual: float = 0.0


@dataclass
class IterationState:
    """
    Current iterate and the bookkeeping of the stopping tests.

    Attributes
    ----------
    history : collections.deque
        Metrics of the last iterates before the current one.
    best_gap : float
        Smallest positive gap seen before the current iterate.
    """

    x: BlockVec
    y: np.ndarray
    z: BlockVec
    iteration: int = 0
    mu: float = math.nan
    metrics: Metrics | None = None
    certificates: Certificates = field(default_factory=Certificates)
    history: deque = field(default_factory=lambda: deque(maxlen=SLOW_PROGRESS_WINDOW))
    best_gap: float = math.inf

    def record(self, metrics):
        """Push ``metrics`` into the history once the stopping tests are done."""
        self.history.append(metrics)
        if metrics.gap > 0:
            self.best_gap = min(self.best_gap, metrics.gap)


def _barrier_scale(spec):
    if spec.kind is ConeKind.SDP:
        return float(spec.dim)
    if spec.kind is ConeKind.SOC:
        return math.sqrt(spec.dim)
    return 1.0


def initial_point(p):
    """
    Starting point ``y = 0``, ``xᵖ = ζᵖeᵖ``, ``zᵖ = ηᵖeᵖ``.

    ``ζᵖ = max{10, √n, θᵖ max_k (1+|b_k|)/(1+‖aᵖ_k‖)}`` and
    ``ηᵖ = max{10, √n, ‖aᵖ_1‖, …, ‖aᵖ_m‖, ‖cᵖ‖}`` with ``θᵖ`` equal to ``n``,
    ``√n`` or 1 for semidefinite, second-order and linear blocks. Free
    blocks start at 0.

    Returns
    -------
    tuple
        ``(x, y, z)``.
    """
    xs, zs = [], []
    for spec, c, a in zip(p.specs, p.C, p.A):
        if spec.kind is ConeKind.FREE:
            xs.append(np.zeros(spec.payload_shape))
            zs.append(np.zeros(spec.payload_shape))
            continue
        norms = np.sqrt(np.sum(a.reshape(p.m, -1) ** 2, axis=1))
        root = math.sqrt(spec.dim)
        ratio = float(np.max((1.0 + np.abs(p.b)) / (1.0 + norms), initial=0.0))
        zeta = max(10.0, root, _barrier_scale(spec) * ratio)
        eta = max(10.0, root, float(np.max(norms, initial=0.0)), float(np.linalg.norm(c)))
        xs.append(zeta * identity(spec))
        zs.append(eta * identity(spec))
    return BlockVec(p.specs, xs), np.zeros(p.m), BlockVec(p.specs, zs)


def _soc_step(v, dv):
    a = float(dv @ soc_reflect(dv))
    b = float(v @ soc_reflect(dv))
    c = float(v @ soc_reflect(v))
    if v[0] <= 0 or c <= 0:
        raise ConeBoundaryError("Second-order cone point is not strictly interior")
    d = b * b - a * c
    if a < 0:
        # d > b² here, so neither branch cancels
        return c / (-b + math.sqrt(d)) if b < 0 else (-b - math.sqrt(d)) / a
    if b < 0 and d >= 0:
        # covers a = 0, where the root is -c/(2b)
        return c / (-b + math.sqrt(d))
    return math.inf


def max_step_block(spec, v, dv, rng=None):
    """
    Largest ``α ≥ 0`` keeping ``v + α dv`` in the closed cone of ``spec``.

    Parameters
    ----------
    spec : BlockSpec
        Block shape.
    v : numpy.ndarray
        Strictly interior payload.
    dv : numpy.ndarray
        Direction.
    rng : numpy.random.Generator, optional
        Start vector source of the Lanczos path on large semidefinite blocks.

    Returns
    -------
    float
        The step, ``math.inf`` when the ray stays inside.

    Raises
    ------
    ConeBoundaryError
        If ``v`` is not strictly interior.
    """
    v = np.asarray(v, dtype=float)
    dv = np.asarray(dv, dtype=float)
    if spec.kind is ConeKind.FREE:
        return math.inf
    if spec.kind is ConeKind.LIN:
        if np.any(v <= 0):
            raise ConeBoundaryError("Linear block point has a nonpositive component")
        mask = dv < 0
        if not np.any(mask):
            return math.inf
        return float(np.min(-v[mask] / dv[mask]))
    if spec.kind is ConeKind.SOC:
        return _soc_step(v, dv)
    try:
        lower = chol(v).lower
    except NotPositiveDefinite as e:
        raise ConeBoundaryError(f"Semidefinite block is not positive definite: {e}") from e
    half = scipy.linalg.solve_triangular(lower, dv, lower=True)
    scaled = -scipy.linalg.solve_triangular(lower, half.T, lower=True)
    top = max_eigval((scaled + scaled.T) / 2, rng)
    return 1.0 / top if top > 0 else math.inf


def step_lengths(x, dx, z, dz, gamma, rng=None):
    """
    ``(αP, αD) = (γ·min{1, minₚ αᵖ_x}, γ·min{1, minₚ αᵖ_z})``.
    """
    alpha_x = min([1.0] + [max_step_block(s, v, d, rng) for s, v, d in zip(x.specs, x, dx)])
    alpha_z = min([1.0] + [max_step_block(s, v, d, rng) for s, v, d in zip(z.specs, z, dz)])
    return gamma * alpha_x, gamma * alpha_z


def _barrier_rank(spec):
    # ⟨x,z⟩ of a block sitting exactly on its barrier center is ν times this
    return 1.0 if spec.kind is ConeKind.SOC else float(spec.dim)


def centering_gap(x, z):
    """
    Complementarity measured on the blocks that drive ``μ``.

    ``Σ⟨xᵖ,zᵖ⟩`` over cone blocks with ``νᵖ = 0``. When every cone block
    carries a barrier, the barrier-adjusted ``Σ(⟨xᵖ,zᵖ⟩ − νᵖ·rankᵖ)`` is used
    instead, which vanishes on the barrier center.
    """
    cones = [(spec, xb, zb) for spec, xb, zb in zip(x.specs, x, z) if spec.kind is not ConeKind.FREE]
    plain = [(spec, xb, zb) for spec, xb, zb in cones if spec.barrier == 0]
    if plain:
        return sum(block_inner(spec, xb, zb) for spec, xb, zb in plain)
    return sum(block_inner(spec, xb, zb) - spec.barrier * _barrier_rank(spec) for spec, xb, zb in cones)


def centering_sigma(x, z, dx, dz, alpha_p, alpha_d, mu_value, psi_hat=3.0):
    """
    Centering parameter from the predictor's trial steps.

    ``σ = min{1, r^ψ}`` with ``r`` the ratio of ``centering_gap`` at
    ``(x+αP δx, z+αD δz)`` to its value at ``(x, z)``; ``ψ`` is
    ``max{ψ̂, 3 min(αP,αD)²}`` while ``μ > 1e-6`` and
    ``max{1, min{ψ̂, 3 min(αP,αD)²}}`` afterwards.

    Raises
    ------
    ValueError
        If the current gap is not positive.
    """
    current = centering_gap(x, z)
    if not current > 0:
        raise ValueError(f"⟨x,z⟩ must be positive, got {current}")
    ratio = max(centering_gap(x.axpy(alpha_p, dx), z.axpy(alpha_d, dz)) / current, 0.0)
    step = 3.0 * min(alpha_p, alpha_d) ** 2
    if mu_value > SMALL_MU:
        psi = max(psi_hat, step)
    else:
        psi = max(1.0, min(psi_hat, step))
    return min(1.0, ratio**psi)


def metrics(p, x, y, z, res):
    """
    Gap and infeasibility measures of an iterate.

    ``gap = Σ(⟨xᵖ,zᵖ⟩ + φᵖ(xᵖ) − φᵖ*(zᵖ))``,
    ``relgap = gap/(1 + |⟨c,x⟩| + |bᵀy|)``, ``pinfeas = ‖Rp‖/(1+‖b‖)`` and
    ``dinfeas = Σ‖Rdᵖ‖/(1 + Σ‖cᵖ‖)``.
    """
    gap = inner(x, z) + barrier_terms(x, p.specs, "primal") - barrier_terms(z, p.specs, "dual")
    cx = inner(p.C, x)
    by = float(p.b @ y)
    return Metrics(
        gap=gap,
        relgap=gap / (1.0 + abs(cx) + abs(by)),
        pinfeas=res.rprim_norm / (1.0 + float(np.linalg.norm(p.b))),
        dinfeas=sum(res.rdual_norms) / (1.0 + sum(p.C.block_norms())),
    )


def certificates(p, x, y, z):
    """Infeasibility ratios, see ``Certificates``."""
    by = float(p.b @ y)
    primal = 0.0
    if by > 0:
        denominator = sum((p.apply_adjoint(y) + z).block_norms())
        primal = by / denominator if denominator > 0 else math.inf
    cx = inner(p.C, x)
    dual = 0.0
    if cx < 0:
        denominator = float(np.linalg.norm(p.apply_operator(x)))
        dual = -cx / denominator if denominator > 0 else math.inf
    return Certificates(primal, dual)


def check_termination(metrics, state, options):
    """
    Stopping tests on the current iterate, in order: accuracy, primal and
    dual infeasibility, gap divergence, slow progress, iteration limit.

    The divergence test (gap above 1e3 times the smallest gap seen) and the
    slow-progress test only apply once both ``pinfeas`` and ``dinfeas`` are
    below ``√eps``. Before that an infeasible start may legitimately raise
    the gap while the residuals shrink.

    Parameters
    ----------
    metrics : Metrics
        Measures of the current iterate.
    state : IterationState
        Carries the iteration count, the certificates of the current iterate
        and the history of the previous ones.
    options : SolverOptions
        ``eps``, ``kappa`` and ``maxiter``.

    Returns
    -------
    SolveStatus or None
        None to continue.
    """
    if not all(math.isfinite(value) for value in metrics):
        return SolveStatus.NUMERICAL_FAILURE
    if max(metrics.relgap, metrics.pinfeas, metrics.dinfeas) < options.eps:
        return SolveStatus.OPTIMAL
    if state.certificates.primal > options.kappa:
        return SolveStatus.PRIMAL_INFEASIBLE
    if state.certificates.dual > options.kappa:
        return SolveStatus.DUAL_INFEASIBLE

    feasible = max(metrics.pinfeas, metrics.dinfeas) < math.sqrt(options.eps)
    if feasible and math.isfinite(state.best_gap) and metrics.gap > GAP_DIVERGENCE * state.best_gap:
        return SolveStatus.NUMERICAL_FAILURE
    if feasible and metrics.relgap < SLOW_PROGRESS_RELGAP * options.eps and len(state.history) == SLOW_PROGRESS_WINDOW:
        relgaps = [record.relgap for record in state.history] + [metrics.relgap]
        if all(after > SLOW_PROGRESS_RATIO * before for before, after in zip(relgaps, relgaps[1:])):
            return SolveStatus.SLOW_PROGRESS
    if state.iteration >= options.maxiter:
        return SolveStatus.MAX_ITER
    return None


def stabilize_split(xplus, xminus, zplus, zminus, mu_value):
    """
    Recenter a split free variable: ``x± − 0.8·min(x₊, x₋)`` and
    ``z± + 0.1·μ``.

    Returns
    -------
    tuple of numpy.ndarray
        ``(xplus, xminus, zplus, zminus)``.
    """
    shift = RECENTER_FRACTION * np.minimum(xplus, xminus)
    bump = DUAL_SHIFT * mu_value
    return xplus - shift, xminus - shift, zplus + bump, zminus + bump


def _split_pairs(p, log):
    pairs = []
    for step in log.find(SplitUnrestricted):
        pairs.extend(step.pairs())
    covered = {pair.block for pair in pairs}
    pairs.extend(pair for pair in detect_implicit_unrestricted(p) if pair.block not in covered)
    return pairs


class InteriorPointSolver:
    """
    Predictor-corrector interior-point solver.

    Parameters
    ----------
    options : SolverOptions, optional
        Solver parameters (defaults when omitted).
    """

    def __init__(self, options=None):
        self.options = options or SolverOptions()
        self.logger = logging.getLogger(__name__)

    def _prepare(self, p):
        if self.options.preprocess:
            return preprocess(p)
        log = TransformLog(original=p)
        p, step = augment_artificial(p)
        log.record(step)
        return p, log

    def _stabilize(self, state, pairs):
        if not pairs:
            return
        xs, zs = list(state.x), list(state.z)
        value = mu(state.x, state.z, state.x.specs)
        for pair in pairs:
            x_block, z_block = xs[pair.block].copy(), zs[pair.block].copy()
            xp, xm, zp, zm = stabilize_split(
                x_block[pair.plus], x_block[pair.minus], z_block[pair.plus], z_block[pair.minus], value
            )
            x_block[pair.plus], x_block[pair.minus] = xp, xm
            z_block[pair.plus], z_block[pair.minus] = zp, zm
            xs[pair.block], zs[pair.block] = x_block, z_block
        state.x = BlockVec(state.x.specs, xs)
        state.z = BlockVec(state.z.specs, zs)

    def _iterate(self, p, state, res, plans, Au, rng):
        """One predictor-corrector step; returns the trace fields it produced."""
        opts = self.options
        value = mu(state.x, state.z, p.specs)
        scalings = build_scalings(p.specs, state.x, state.z, opts.direction)
        ingredients = schur_ingredients(p, scalings, plans, opts.dense_ratio)
        perturbation = Perturbation.schedule(state.iteration, opts.rho0, opts.lambda0)
        system = factorize(assemble(ingredients, Au, perturbation, m=p.m))
        krylov = dict(tol=opts.krylov_tol, maxiter=opts.krylov_maxiter, fail_tol=opts.krylov_fail_tol)

        r_free = free_rhs(p, res)
        targets_pred = [spec.barrier for spec in p.specs]
        h_pred = compute_h(p, res, scalings, targets_pred)
        predictor = solve_augmented(system, h_pred, r_free, **krylov)
        factorizations = 1 + int(predictor.system is not system)
        system = predictor.system
        dx, dz = recover_dxdz(p, res, scalings, predictor.dy, predictor.dx_free, targets_pred)
        alpha_p, alpha_d = step_lengths(state.x, dx, state.z, dz, opts.gamma, rng)
        sigma = centering_sigma(state.x, state.z, dx, dz, alpha_p, alpha_d, value, opts.psi_hat)

        targets_corr = [max(sigma * value, spec.barrier) for spec in p.specs]
        second = second_order_terms(scalings, dx, dz)
        h_corr = corrector_rhs(h_pred, p, scalings, dx, dz, targets_pred, targets_corr, second)
        corrector = solve_augmented(system, h_corr, r_free, **krylov)
        factorizations += int(corrector.system is not system)
        system = corrector.system
        dx, dz = recover_dxdz(p, res, scalings, corrector.dy, corrector.dx_free, targets_corr, second)
        beta_p, beta_d = step_lengths(state.x, dx, state.z, dz, opts.gamma, rng)

        state.x = state.x.axpy(beta_p, dx)
        state.y = state.y + beta_d * corrector.dy
        state.z = state.z.axpy(beta_d, dz)
        state.mu = value
        return dict(
            mu=value,
            sigma=sigma,
            alpha_p=beta_p,
            alpha_d=beta_d,
            path=system.path,
            krylov_steps=predictor.steps + corrector.steps,
            residual=max(predictor.residual, corrector.residual),
            factorizations=factorizations,
        )

    def _result(self, p, state, status, trace, message):
        x, y, z = state.x, state.y, state.z
        try:
            pobj, dobj = objectives(p, x, y, z)
        except ValueError:
            pobj = dobj = math.nan
        m = state.metrics or Metrics(math.nan, math.nan, math.nan, math.nan)
        return SolveResult(
            status=status,
            x=x,
            y=y,
            z=z,
            pobj=pobj,
            dobj=dobj,
            gap=m.gap,
            relgap=m.relgap,
            pinfeas=m.pinfeas,
            dinfeas=m.dinfeas,
            iterations=state.iteration,
            trace=tuple(trace),
            message=message,
        )

    def solve(self, p):
        """
        Solve problem ``p``.

        Returns
        -------
        SolveResult
            Result mapped back to ``p``. Numerical trouble is reported
            through the status, never raised.

        Raises
        ------
        ValueError
            If ``p`` fails validation.
        """
        findings = validate(p)
        if findings:
            raise ValueError(f"Invalid problem: {'; '.join(findings)}")
        opts = self.options
        work, log = self._prepare(p)
        pairs = _split_pairs(work, log)
        plans = {q: plan_sdp_block(work.A[q]) for q, spec in enumerate(work.specs) if spec.kind is ConeKind.SDP}
        Au = free_operator(work)
        rng = np.random.default_rng(opts.seed)
        kinds = ",".join(f"{s.kind.name}{s.dim}" for s in work.specs)
        self.logger.info(f"Solving m={work.m} blocks=[{kinds}] direction={opts.direction.value}")

        x, y, z = initial_point(work)
        state = IterationState(x, y, z)
        trace = []
        status, message = None, ""
        while status is None:
            try:
                res = residuals(work, state.x, state.y, state.z)
                state.metrics = metrics(work, state.x, state.y, state.z, res)
                state.certificates = certificates(work, state.x, state.y, state.z)
            except NUMERICAL_ERRORS as e:
                status, message = SolveStatus.NUMERICAL_FAILURE, str(e)
                self.logger.error(f"Iterate became invalid: {e}")
                break
            status = check_termination(state.metrics, state, opts)
            if status is not None:
                break
            state.record(state.metrics)
            try:
                fields_ = self._iterate(work, state, res, plans, Au, rng)
                self._stabilize(state, pairs)
            except NUMERICAL_ERRORS as e:
                status, message = SolveStatus.NUMERICAL_FAILURE, str(e)
                self.logger.error(f"Iteration {state.iteration + 1} failed: {e}")
                break
            state.iteration += 1
            m = state.metrics
            record = IterationRecord(
                iteration=state.iteration,
                gap=m.gap,
                relgap=m.relgap,
                pinfeas=m.pinfeas,
                dinfeas=m.dinfeas,
                **fields_,
            )
            trace.append(record)
            self.logger.info(
                f"{record.iteration:3d} {record.mu:.2e} {record.sigma:.2e} {record.alpha_p:.2e} "
                f"{record.alpha_d:.2e} {record.relgap:.2e} {record.pinfeas:.2e} {record.dinfeas:.2e} {record.path}"
            )

        if status is SolveStatus.NUMERICAL_FAILURE and not message:
            message = "gap diverged or became non-finite"
        result = self._result(work, state, status, trace, message)
        result = postprocess(result, log)
        self.logger.info(f"Finished with status '{status.value}' after {state.iteration} iterations")
        return result


def solve(p, options=None):
    """Solve ``p`` with ``InteriorPointSolver``."""
    return InteriorPointSolver(options).solve(p)
