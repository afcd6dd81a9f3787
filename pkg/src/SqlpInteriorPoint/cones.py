"""
Block-structured cone algebra.

Every point of the solver is a ``BlockVec``: one payload per cone block, a
symmetric matrix for semidefinite blocks and a vector for the others.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .linalg import NotPositiveDefinite, chol, chol_solve

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)

# Iterates whose γ or pivots fall inside this band count as boundary points.
INTERIOR_TOL = 1e-12


class ConeBoundaryError(ValueError):
    """Raised when a cone operation needs a strictly interior point."""


class ConeKind(Enum):
    """
    Cone of one block: semidefinite, second-order, nonnegative orthant or free.
    """

    SDP = "s"
    SOC = "q"
    LIN = "l"
    FREE = "u"

    @classmethod
    def parse(cls, label):
        """
        Resolve a cone label such as ``"sdp"`` or ``"s"``.

        Parameters
        ----------
        label : str or ConeKind
            Long name or one-letter code.

        Returns
        -------
        ConeKind
            The cone kind.
        """
        if isinstance(label, cls):
            return label
        key = str(label).strip().lower()
        for kind in cls:
            if key in (kind.value, kind.name.lower()):
                return kind
        raise ValueError(f"Unknown cone kind '{label}'")


@dataclass(frozen=True)
class BlockSpec:
    """
    Shape of one block.

    Attributes
    ----------
    kind : ConeKind
        Cone of the block.
    dim : int
        Order ``n`` of the block (matrix order for semidefinite blocks).
    barrier : float
        Log-barrier weight ``ν ≥ 0``; ignored for free blocks.
    """

    kind: ConeKind
    dim: int
    barrier: float = 0.0

    @property
    def vec_dim(self):
        """Length of the vectorized payload (``n(n+1)/2`` for semidefinite blocks)."""
        if self.kind is ConeKind.SDP:
            return self.dim * (self.dim + 1) // 2
        return self.dim

    @property
    def payload_shape(self):
        if self.kind is ConeKind.SDP:
            return (self.dim, self.dim)
        return (self.dim,)

    @property
    def has_barrier(self):
        return self.kind is not ConeKind.FREE and self.barrier > 0

    def findings(self):
        """List the invariant violations of this spec."""
        problems = []
        if not isinstance(self.kind, ConeKind):
            problems.append(f"unknown cone kind {self.kind!r}")
            return problems
        if int(self.dim) != self.dim or self.dim < 1:
            problems.append(f"dimension {self.dim} must be a positive integer")
        elif self.kind is ConeKind.SOC and self.dim < 2:
            problems.append(f"second-order cone needs dimension >= 2, got {self.dim}")
        if not math.isfinite(self.barrier) or self.barrier < 0:
            problems.append(f"barrier weight {self.barrier} must be finite and >= 0")
        return problems


class BlockVec:
    """
    A point with one payload per block.

    Parameters
    ----------
    specs : sequence of BlockSpec
        Block shapes.
    blocks : sequence of array_like
        Payloads, matching ``specs`` in count and shape.
    """

    def __init__(self, specs, blocks):
        self.specs = tuple(specs)
        blocks = list(blocks)
        if len(blocks) != len(self.specs):
            raise ValueError(f"Expected {len(self.specs)} blocks, got {len(blocks)}")
        self.blocks = []
        for p, (spec, block) in enumerate(zip(self.specs, blocks)):
            payload = np.array(block, dtype=float)
            if payload.shape != spec.payload_shape:
                raise ValueError(
                    f"Block {p} has shape {payload.shape}, expected {spec.payload_shape}"
                )
            self.blocks.append(payload)

    @classmethod
    def zeros(cls, specs):
        return cls(specs, [np.zeros(spec.payload_shape) for spec in specs])

    @classmethod
    def identity(cls, specs):
        """Identity element on every block, zero on free blocks."""
        return cls(
            specs,
            [
                np.zeros(spec.payload_shape) if spec.kind is ConeKind.FREE else identity(spec)
                for spec in specs
            ],
        )

    def __len__(self):
        return len(self.blocks)

    def __getitem__(self, p):
        return self.blocks[p]

    def __iter__(self):
        return iter(self.blocks)

    def copy(self):
        return BlockVec(self.specs, self.blocks)

    def _check(self, other):
        if not isinstance(other, BlockVec) or len(other) != len(self):
            raise ValueError("Block vectors have different block structure")
        for p, (a, b) in enumerate(zip(self.blocks, other.blocks)):
            if a.shape != b.shape:
                raise ValueError(f"Block {p} shape mismatch: {a.shape} vs {b.shape}")

    def __add__(self, other):
        self._check(other)
        return BlockVec(self.specs, [a + b for a, b in zip(self.blocks, other.blocks)])

    def __sub__(self, other):
        self._check(other)
        return BlockVec(self.specs, [a - b for a, b in zip(self.blocks, other.blocks)])

    def __mul__(self, scalar):
        return BlockVec(self.specs, [scalar * a for a in self.blocks])

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def axpy(self, alpha, direction):
        """Return ``self + alpha * direction``."""
        self._check(direction)
        return BlockVec(self.specs, [a + alpha * d for a, d in zip(self.blocks, direction.blocks)])

    def block_norms(self):
        """Frobenius norm of every block."""
        return [float(np.linalg.norm(a)) for a in self.blocks]

    def norm(self):
        return math.sqrt(sum(n * n for n in self.block_norms()))

    def __repr__(self):
        kinds = ",".join(f"{s.kind.name}{s.dim}" for s in self.specs)
        return f"BlockVec([{kinds}])"


@lru_cache(maxsize=None)
def svec_indices(n):
    """
    Row and column indices of the svec ordering of an order-``n`` matrix.

    The upper triangle is traversed column by column, so entry ``(i, j)`` with
    ``i <= j`` lands at position ``j(j+1)/2 + i``.
    """
    cols, rows = np.tril_indices(n)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


@lru_cache(maxsize=None)
def svec_scale(n):
    rows, cols = svec_indices(n)
    scale = np.where(rows == cols, 1.0, SQRT2)
    scale.setflags(write=False)
    return scale


def triangular_order(length):
    """Order ``n`` with ``n(n+1)/2 == length``, or None when there is none."""
    n = int(round((math.sqrt(8 * length + 1) - 1) / 2))
    return n if n * (n + 1) // 2 == length else None


def svec(a):
    """
    Symmetric vectorization with √2-scaled off-diagonal entries.

    Parameters
    ----------
    a : array_like
        Symmetric matrix of order ``n``.

    Returns
    -------
    numpy.ndarray
        Vector of length ``n(n+1)/2`` with ``svec(a)ᵀsvec(b) = ⟨a, b⟩``.
    """
    a = np.asarray(a, dtype=float)
    rows, cols = svec_indices(a.shape[0])
    return a[rows, cols] * svec_scale(a.shape[0])


def smat(v):
    """Inverse of ``svec``."""
    v = np.asarray(v, dtype=float).ravel()
    n = triangular_order(v.shape[0])
    if n is None:
        raise ValueError(f"Length {v.shape[0]} is not a triangular number")
    rows, cols = svec_indices(n)
    values = v / svec_scale(n)
    a = np.zeros((n, n))
    a[rows, cols] = values
    a[cols, rows] = values
    return a


def soc_reflect(v):
    """``J v`` with ``J = diag(1, -1, ..., -1)``."""
    out = -np.asarray(v, dtype=float)
    out[0] = -out[0]
    return out


def block_inner(spec, a, b):
    """Inner product of two payloads of one block (trace inner product on SDP)."""
    return float(np.sum(np.asarray(a) * np.asarray(b)))


def inner(a, b):
    """
    Inner product of two block vectors.

    Parameters
    ----------
    a, b : BlockVec
        Points with matching block structure.

    Returns
    -------
    float
        ``Σ_p ⟨aᵖ, bᵖ⟩``.
    """
    a._check(b)
    return sum(block_inner(spec, x, z) for spec, x, z in zip(a.specs, a, b))


def identity(spec):
    """Identity element of the Jordan product on one block."""
    if spec.kind is ConeKind.SDP:
        return np.eye(spec.dim)
    if spec.kind is ConeKind.SOC:
        e = np.zeros(spec.dim)
        e[0] = 1.0
        return e
    if spec.kind is ConeKind.LIN:
        return np.ones(spec.dim)
    raise ValueError("Free blocks have no identity element")


def jordan(x, z, spec):
    """
    Jordan product of two payloads.

    Semidefinite blocks use ``(x zᵀ + z xᵀ)/2``, which also covers
    non-symmetric arguments.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if spec.kind is ConeKind.SDP:
        return (x @ z.T + z @ x.T) / 2
    if spec.kind is ConeKind.SOC:
        return np.concatenate(([x @ z], x[0] * z[1:] + z[0] * x[1:]))
    if spec.kind is ConeKind.LIN:
        return x * z
    raise ValueError("Jordan product is undefined on free blocks")


def gamma_soc(x):
    """
    ``γ(x) = sqrt(x₀² − ‖x̄‖²)``.

    Values of ``xᵀJx`` in ``[-1e-12, 0)`` are clamped to zero.
    """
    x = np.asarray(x, dtype=float)
    tail = np.linalg.norm(x[1:])
    value = (x[0] - tail) * (x[0] + tail)
    if value < -INTERIOR_TOL:
        raise ConeBoundaryError(f"Point lies outside the second-order cone (xᵀJx = {value:.3e})")
    return math.sqrt(max(value, 0.0))


def _check_soc_interior(x, what="point"):
    g = gamma_soc(x)
    if x[0] <= 0 or g <= INTERIOR_TOL:
        raise ConeBoundaryError(f"Second-order cone {what} is not strictly interior (γ = {g:.3e})")
    return g


def jordan_inv(z, spec):
    """
    Inverse of ``z`` with respect to the Jordan product.

    Raises
    ------
    ConeBoundaryError
        If ``z`` is not strictly interior.
    """
    z = np.asarray(z, dtype=float)
    if spec.kind is ConeKind.SDP:
        try:
            factor = chol(z)
        except NotPositiveDefinite as e:
            raise ConeBoundaryError(f"Semidefinite block is not positive definite: {e}") from e
        inv = chol_solve(factor, np.eye(spec.dim))
        return (inv + inv.T) / 2
    if spec.kind is ConeKind.SOC:
        g = _check_soc_interior(z)
        return soc_reflect(z) / (g * g)
    if spec.kind is ConeKind.LIN:
        if np.any(z <= 0):
            raise ConeBoundaryError("Linear block has a nonpositive component")
        return 1.0 / z
    raise ValueError("Free blocks have no Jordan inverse")


def _log_det(x):
    try:
        factor = chol(x)
    except NotPositiveDefinite as e:
        raise ConeBoundaryError(f"log det of a matrix that is not positive definite: {e}") from e
    return 2.0 * float(np.sum(np.log(np.diag(factor.lower))))


def barrier_terms(v, specs, side="primal"):
    """
    Sum of the barrier values over blocks with ``ν > 0``.

    Parameters
    ----------
    v : BlockVec
        ``x`` for ``side="primal"``, ``z`` for ``side="dual"``.
    specs : sequence of BlockSpec
        Block shapes carrying the barrier weights.
    side : {"primal", "dual"}
        Primal barrier ``φ`` or its conjugate ``φ*``.

    Returns
    -------
    float
        ``Σ φᵖ(xᵖ)`` or ``Σ φᵖ*(zᵖ)``.
    """
    if side not in ("primal", "dual"):
        raise ValueError(f"side must be 'primal' or 'dual', got {side!r}")
    total = 0.0
    for spec, block in zip(specs, v):
        if not spec.has_barrier:
            continue
        nu = spec.barrier
        constant = nu * (1.0 - math.log(nu))
        if spec.kind is ConeKind.SDP:
            log_value = _log_det(block)
            count = spec.dim
        elif spec.kind is ConeKind.SOC:
            log_value = math.log(_check_soc_interior(block))
            count = 1
        else:
            if np.any(block <= 0):
                raise ConeBoundaryError("log of a nonpositive linear component")
            log_value = float(np.sum(np.log(block)))
            count = spec.dim
        if side == "primal":
            total -= nu * log_value
        else:
            total += nu * log_value + count * constant
    return total


def arw_apply(f, v):
    """``Arw(f) v``, the second-order cone Jordan product ``f ∘ v``."""
    f = np.asarray(f, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.concatenate(([f @ v], f[0] * v[1:] + v[0] * f[1:]))


def arw_solve(f, v):
    """
    Solve ``Arw(f) u = v`` with the closed-form inverse of the arrow matrix.

    Raises
    ------
    ConeBoundaryError
        If ``Arw(f)`` is singular (``f`` not strictly interior).
    """
    f = np.asarray(f, dtype=float)
    v = np.asarray(v, dtype=float)
    g = _check_soc_interior(f, "arrow argument")
    g2 = g * g
    fbar, vbar = f[1:], v[1:]
    dot = fbar @ vbar
    head = (f[0] * v[0] - dot) / g2
    tail = (-v[0] * fbar + (g2 * vbar + fbar * dot) / f[0]) / g2
    return np.concatenate(([head], tail))
