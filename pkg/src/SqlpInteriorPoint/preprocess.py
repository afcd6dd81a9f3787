"""
Model transformations applied before solving, and the inverse mapping of
solutions back to the original problem.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace

import numpy as np

from .cones import BlockSpec, BlockVec, ConeKind, identity
from .linalg import bandwidth, rcm
from .problem import BlockFragment, ProblemData, objectives

logger = logging.getLogger(__name__)

# Hermitian check on complex input.
HERMITIAN_TOL = 1e-12

# Relative objective mismatch reported by postprocess.
OBJECTIVE_MATCH_TOL = 1e-8


def coefficient_pattern(c, a):
    """``|c| + Σ_k |a_k|`` of one semidefinite block."""
    return np.abs(c) + np.sum(np.abs(a), axis=0)


class Transform(ABC):
    """
    One applied model transformation.

    ``before`` holds the block specs of the problem the transform was applied
    to; ``restore`` maps a solution of the transformed problem back to it.
    """

    name = None

    def __init__(self, before):
        self.before = tuple(before)

    @abstractmethod
    def restore(self, x, y, z):
        """
        Map ``(x, y, z)`` of the transformed problem to the original one.

        Returns
        -------
        tuple
            ``(x, y, z)`` in the coordinates of ``before``.
        """
        pass

    def __repr__(self):
        return f"{type(self).__name__}({self.describe()})"

    def describe(self):
        return ""


class IsolatedDiagonals(Transform):
    """
    Isolated diagonal entries moved from semidefinite blocks to linear blocks.

    Attributes
    ----------
    moves : list of tuple
        ``(source, kept, isolated, target, linear)``: source block, kept and
        isolated indices, position of the shrunk block (None when removed)
        and position of the new linear block.
    """

    name = "isolated_diagonals"

    def __init__(self, before, moves, kept_positions):
        super().__init__(before)
        self.moves = moves
        self.kept_positions = kept_positions

    def describe(self):
        return ", ".join(f"block {m[0] + 1}: {list(m[2])}" for m in self.moves)

    def restore(self, x, y, z):
        moved = {m[0]: m for m in self.moves}
        xs, zs = [], []
        for q, spec in enumerate(self.before):
            if q not in moved:
                xs.append(x[self.kept_positions[q]])
                zs.append(z[self.kept_positions[q]])
                continue
            _, kept, isolated, target, linear = moved[q]
            for source, out in ((x, xs), (z, zs)):
                block = np.zeros((spec.dim, spec.dim))
                if target is not None:
                    block[np.ix_(kept, kept)] = source[target]
                block[isolated, isolated] = source[linear]
                out.append(block)
        return BlockVec(self.before, xs), y, BlockVec(self.before, zs)


class SplitUnrestricted(Transform):
    """Free blocks replaced by linear blocks of twice the size."""

    name = "split_unrestricted"

    def __init__(self, before, blocks):
        super().__init__(before)
        self.blocks = tuple(blocks)

    def describe(self):
        return f"blocks {[q + 1 for q in self.blocks]}"

    def pairs(self):
        """``(block, plus, minus)`` index arrays of every split block."""
        return [
            ImplicitPair(q, np.arange(self.before[q].dim), np.arange(self.before[q].dim, 2 * self.before[q].dim))
            for q in self.blocks
        ]

    def restore(self, x, y, z):
        xs, zs = list(x), list(z)
        for q in self.blocks:
            n = self.before[q].dim
            xs[q] = x[q][:n] - x[q][n:]
            zs[q] = (z[q][:n] - z[q][n:]) / 2
        return BlockVec(self.before, xs), y, BlockVec(self.before, zs)


class ArtificialVariable(Transform):
    """A nonnegative variable tied to ``Σ⟨eᵖ,xᵖ⟩`` by one extra constraint."""

    name = "augment_artificial"

    def restore(self, x, y, z):
        y_new = y[-1]
        zs = []
        for spec, block in zip(self.before, list(z)[:-1]):
            if spec.kind is ConeKind.FREE:
                zs.append(block)
            else:
                zs.append(block - y_new * identity(spec))
        return BlockVec(self.before, list(x)[:-1]), y[:-1], BlockVec(self.before, zs)


class RcmPermutation(Transform):
    """Bandwidth-reducing symmetric permutation of semidefinite blocks."""

    name = "rcm_reorder"

    def __init__(self, before, permutations):
        super().__init__(before)
        self.permutations = permutations

    def describe(self):
        return ", ".join(f"block {q + 1}: {perm.tolist()}" for q, perm in self.permutations.items())

    def restore(self, x, y, z):
        xs, zs = list(x), list(z)
        for q, perm in self.permutations.items():
            inverse = np.argsort(perm)
            xs[q] = x[q][np.ix_(inverse, inverse)]
            zs[q] = z[q][np.ix_(inverse, inverse)]
        return BlockVec(self.before, xs), y, BlockVec(self.before, zs)


@dataclass
class TransformLog:
    """
    Ordered record of the transforms applied to ``original``.

    Replaying ``restore`` in reverse order maps a solution back to
    ``original``.
    """

    original: ProblemData
    steps: list = field(default_factory=list)

    def record(self, step):
        if step is not None:
            logger.debug(f"Applied {step!r}")
            self.steps.append(step)

    def find(self, kind):
        return [step for step in self.steps if isinstance(step, kind)]

    def restore(self, x, y, z):
        for step in reversed(self.steps):
            x, y, z = step.restore(x, y, z)
        return x, y, z


@dataclass(frozen=True)
class ImplicitPair:
    """Two index sets of one linear block whose variables encode one free variable."""

    block: int
    plus: np.ndarray
    minus: np.ndarray


def extract_isolated_diagonals(p):
    """
    Move isolated diagonal entries of semidefinite blocks into linear blocks.

    Index ``i`` is isolated when row ``i`` of the cost and of every
    constraint has no nonzero off-diagonal entry. A single pass is made over
    the original indices; shrunk blocks stay in place, fully diagonal blocks
    are removed and every new linear block is appended with the barrier
    weight of its source block.

    Returns
    -------
    tuple
        ``(ProblemData, IsolatedDiagonals or None)``.
    """
    kept, appended, moves, kept_positions = [], [], [], {}
    for q, frag in enumerate(p.fragments()):
        spec = frag.spec
        if spec.kind is not ConeKind.SDP:
            kept_positions[q] = len(kept)
            kept.append(frag)
            continue
        pattern = coefficient_pattern(frag.c, frag.a)
        off_diagonal = pattern - np.diag(np.diag(pattern))
        isolated = np.flatnonzero(~np.any(off_diagonal != 0, axis=1))
        if isolated.size == 0:
            kept_positions[q] = len(kept)
            kept.append(frag)
            continue
        rest = np.setdiff1d(np.arange(spec.dim), isolated)
        target = None
        if rest.size:
            target = len(kept)
            kept.append(
                BlockFragment(
                    BlockSpec(ConeKind.SDP, int(rest.size), spec.barrier),
                    frag.c[np.ix_(rest, rest)],
                    frag.a[:, rest][:, :, rest],
                )
            )
        appended.append(
            (
                q,
                rest,
                isolated,
                target,
                BlockFragment(
                    BlockSpec(ConeKind.LIN, int(isolated.size), spec.barrier),
                    frag.c[isolated, isolated],
                    frag.a[:, isolated, isolated],
                ),
            )
        )
    if not appended:
        return p, None
    for q, rest, isolated, target, frag in appended:
        moves.append((q, rest, isolated, target, len(kept)))
        kept.append(frag)
    return ProblemData.from_fragments(kept, p.b), IsolatedDiagonals(p.specs, moves, kept_positions)


def split_unrestricted(p):
    """
    Replace every free block ``u`` by a linear block ``(u₊, u₋)`` with
    ``u = u₊ − u₋``.

    Returns
    -------
    tuple
        ``(ProblemData, SplitUnrestricted or None)``.
    """
    blocks = [q for q, spec in enumerate(p.specs) if spec.kind is ConeKind.FREE]
    if not blocks:
        return p, None
    fragments = p.fragments()
    for q in blocks:
        frag = fragments[q]
        fragments[q] = BlockFragment(
            BlockSpec(ConeKind.LIN, 2 * frag.spec.dim, 0.0),
            np.concatenate([frag.c, -frag.c]),
            np.concatenate([frag.a, -frag.a], axis=1),
        )
    return ProblemData.from_fragments(fragments, p.b), SplitUnrestricted(p.specs, blocks)


def needs_artificial(p):
    """True when ``m = 0`` or no cone block has a zero barrier weight."""
    return p.m == 0 or not any(spec.kind is not ConeKind.FREE and spec.barrier == 0 for spec in p.specs)


def augment_artificial(p):
    """
    Append ``x_new ≥ 0`` and the constraint ``−Σ⟨eᵖ,xᵖ⟩ + x_new = 0`` when
    the problem has no constraint or no block with zero barrier weight.

    Returns
    -------
    tuple
        ``(ProblemData, ArtificialVariable or None)``.
    """
    if not needs_artificial(p):
        return p, None
    fragments = []
    for frag in p.fragments():
        spec = frag.spec
        row = np.zeros(spec.payload_shape) if spec.kind is ConeKind.FREE else -identity(spec)
        fragments.append(BlockFragment(spec, frag.c, np.concatenate([frag.a, row[None]], axis=0)))
    m = p.m
    fragments.append(BlockFragment(BlockSpec(ConeKind.LIN, 1, 0.0), np.zeros(1), np.eye(m + 1)[:, -1:]))
    b = np.concatenate([p.b, [0.0]])
    return ProblemData.from_fragments(fragments, b), ArtificialVariable(p.specs)


def rcm_reorder(p):
    """
    Permute every semidefinite block by the reverse Cuthill-McKee ordering of
    its coefficient pattern.

    Returns
    -------
    tuple
        ``(ProblemData, RcmPermutation or None)``.
    """
    fragments = p.fragments()
    permutations = {}
    for q, frag in enumerate(fragments):
        if frag.spec.kind is not ConeKind.SDP:
            continue
        pattern = coefficient_pattern(frag.c, frag.a)
        perm = rcm(pattern)
        if np.array_equal(perm, np.arange(frag.spec.dim)):
            continue
        logger.debug(
            f"Block {q + 1}: bandwidth {bandwidth(pattern)} -> {bandwidth(pattern[np.ix_(perm, perm)])}"
        )
        permutations[q] = perm
        fragments[q] = replace(frag, c=frag.c[np.ix_(perm, perm)], a=frag.a[:, perm][:, :, perm])
    if not permutations:
        return p, None
    return ProblemData.from_fragments(fragments, p.b), RcmPermutation(p.specs, permutations)


def preprocess(p):
    """
    Apply the transform pipeline: isolated diagonals, free-variable
    splitting, artificial augmentation, reordering.

    Returns
    -------
    tuple
        ``(ProblemData, TransformLog)``.
    """
    log = TransformLog(original=p)
    for transform in (extract_isolated_diagonals, split_unrestricted, augment_artificial, rcm_reorder):
        p, step = transform(p)
        log.record(step)
    return p, log


def postprocess(result, log):
    """
    Map a solve result back to the original problem of ``log``.

    Objective values are recomputed on the original data; a relative mismatch
    above 1e-8 against the transformed-space values is logged.

    Raises
    ------
    ValueError
        If the result does not have the block structure the log ends with.
    """
    if not log.steps:
        return result
    x, y, z = result.x, np.asarray(result.y, dtype=float), result.z
    try:
        x, y, z = log.restore(x, y, z)
    except (IndexError, ValueError) as e:
        raise ValueError(f"Transform log does not match the result: {e}") from e
    if y.shape[0] != log.original.m:
        raise ValueError(f"Restored y has {y.shape[0]} entries, expected {log.original.m}")
    try:
        pobj, dobj = objectives(log.original, x, y, z)
    except ValueError as e:
        logger.warning(f"Objectives could not be recomputed on the original data: {e}")
        pobj, dobj = result.pobj, result.dobj
    for label, before, after in (("primal", result.pobj, pobj), ("dual", result.dobj, dobj)):
        if abs(before - after) > OBJECTIVE_MATCH_TOL * (1 + abs(before)):
            logger.warning(f"{label} objective changed from {before:.10e} to {after:.10e} after postprocessing")
    return replace(result, x=x, y=y, z=z, pobj=pobj, dobj=dobj)


def detect_implicit_unrestricted(p):
    """
    Find pairs of variables in zero-barrier linear blocks whose cost and
    constraint columns are exact negatives of each other.

    Returns
    -------
    list of ImplicitPair
        One entry per block with at least one pair.
    """
    found = []
    for q, spec in enumerate(p.specs):
        if spec.kind is not ConeKind.LIN or spec.barrier != 0:
            continue
        columns = np.vstack([p.C[q][None, :], p.A[q]])
        pending = {}
        plus, minus = [], []
        for i in range(spec.dim):
            key = tuple(columns[:, i])
            if not any(key):
                continue
            negated = tuple(-v for v in key)
            partners = pending.get(negated)
            if partners:
                plus.append(partners.pop(0))
                minus.append(i)
            else:
                pending.setdefault(key, []).append(i)
        if plus:
            found.append(ImplicitPair(q, np.array(plus), np.array(minus)))
    return found


def _hermitian_parts(a, what):
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{what} must be a square matrix, got shape {a.shape}")
    real, imag = np.real(a).astype(float), np.imag(a).astype(float)
    scale = 1.0 + float(np.max(np.abs(a), initial=0.0))
    if np.max(np.abs(real - real.T), initial=0.0) > HERMITIAN_TOL * scale or np.max(
        np.abs(imag + imag.T), initial=0.0
    ) > HERMITIAN_TOL * scale:
        raise ValueError(f"{what} is not Hermitian")
    return real, imag


def embed_hermitian(a, what="matrix"):
    """``Γ(a) = [[Re a, −Im a], [Im a, Re a]]``."""
    real, imag = _hermitian_parts(a, what)
    return np.block([[real, -imag], [imag, real]])


def complex_to_real(c, a, barrier=0.0):
    """
    Real semidefinite block equivalent to a Hermitian semidefinite block.

    Parameters
    ----------
    c : array_like
        Hermitian cost matrix of order ``n``.
    a : sequence of array_like
        Hermitian constraint matrices.
    barrier : float, optional
        Barrier weight carried over unchanged.

    Returns
    -------
    BlockFragment
        Block of order ``2n`` with every matrix mapped through ``Γ``.

    Raises
    ------
    ValueError
        If any input matrix is not Hermitian.
    """
    cost = embed_hermitian(c, "C")
    n = cost.shape[0] // 2
    stack = [embed_hermitian(ak, f"constraint {k + 1}") for k, ak in enumerate(a)]
    for k, ak in enumerate(stack):
        if ak.shape != cost.shape:
            raise ValueError(f"constraint {k + 1} has order {ak.shape[0] // 2}, expected {n}")
    stack = np.array(stack).reshape(len(stack), 2 * n, 2 * n)
    return BlockFragment(BlockSpec(ConeKind.SDP, 2 * n, barrier), cost, stack)


def hermitian_from_embedding(x):
    """
    Hermitian matrix represented by a solution block of a ``complex_to_real``
    block: with ``x = [[P, Q], [R, S]]`` the result is ``(P+S) + i(R−Q)``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0] // 2
    p_, q_, r_, s_ = x[:n, :n], x[:n, n:], x[n:, :n], x[n:, n:]
    return (p_ + s_) + 1j * (r_ - q_)
