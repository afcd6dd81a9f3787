"""
Problem data model, solver options, results and the problem-file readers.

A problem is stored block by block. ``A[p]`` is the stack of constraint
coefficients of block ``p``: an ``(m, n, n)`` array of symmetric matrices for
semidefinite blocks and an ``(m, n)`` array whose rows are ``a_k`` otherwise.
"""

import logging
import os
from abc import ABC, abstractmethod
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import yaml

from .cones import BlockSpec, BlockVec, ConeKind, barrier_terms, inner, svec, svec_indices, svec_scale

logger = logging.getLogger(__name__)

# Relative tolerance for the symmetry check of semidefinite data.
SYMMETRY_TOL = 1e-12


class ProblemFormatError(ValueError):
    """
    Raised when a problem file cannot be read.

    Attributes
    ----------
    line : int or None
        1-based line of the offending input, when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class Direction(Enum):
    HKM = "hkm"
    NT = "nt"

    @classmethod
    def parse(cls, label):
        if isinstance(label, cls):
            return label
        try:
            return cls(str(label).strip().lower())
        except ValueError:
            raise ValueError(f"direction must be 'hkm' or 'nt', got '{label}'") from None


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    MAX_ITER = "max iterations"
    SLOW_PROGRESS = "slow progress"
    PRIMAL_INFEASIBLE = "primal infeasible"
    DUAL_INFEASIBLE = "dual infeasible"
    NUMERICAL_FAILURE = "numerical failure"

    @property
    def exit_code(self):
        """Process exit code reported by the command-line front end."""
        if self is SolveStatus.OPTIMAL:
            return 0
        if self in (SolveStatus.MAX_ITER, SolveStatus.SLOW_PROGRESS):
            return 1
        if self in (SolveStatus.PRIMAL_INFEASIBLE, SolveStatus.DUAL_INFEASIBLE):
            return 2
        return 3


@dataclass(frozen=True)
class BlockFragment:
    """One block of a problem: its shape, cost payload and coefficient stack."""

    spec: BlockSpec
    c: np.ndarray
    a: np.ndarray


@dataclass(frozen=True, eq=False)
class ProblemData:
    """
    An instance of the primal problem ``min Σ⟨cᵖ,xᵖ⟩ + Σφᵖ(xᵖ)`` subject to
    ``Σ⟨aᵖ_k,xᵖ⟩ = b_k`` and its dual.

    Attributes
    ----------
    specs : tuple of BlockSpec
        Block shapes and barrier weights.
    b : numpy.ndarray
        Right-hand side of length ``m``.
    C : BlockVec
        Cost payloads.
    A : tuple of numpy.ndarray
        Coefficient stacks, see the module docstring.
    """

    specs: tuple
    b: np.ndarray
    C: BlockVec
    A: tuple

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple(self.specs))
        object.__setattr__(self, "b", np.array(self.b, dtype=float).reshape(-1))
        object.__setattr__(self, "A", tuple(np.array(a, dtype=float) for a in self.A))
        if len(self.A) != len(self.specs):
            raise ValueError(f"A has {len(self.A)} blocks, expected {len(self.specs)}")

    @classmethod
    def from_fragments(cls, fragments, b):
        """
        Assemble a problem from per-block fragments.

        Parameters
        ----------
        fragments : iterable of BlockFragment
            Blocks in order.
        b : array_like
            Right-hand side.

        Returns
        -------
        ProblemData
            The assembled problem.
        """
        fragments = list(fragments)
        specs = [f.spec for f in fragments]
        return cls(specs, b, BlockVec(specs, [f.c for f in fragments]), [f.a for f in fragments])

    def fragments(self):
        return [BlockFragment(spec, c, a) for spec, c, a in zip(self.specs, self.C, self.A)]

    @property
    def m(self):
        return self.b.shape[0]

    @property
    def num_blocks(self):
        return len(self.specs)

    @cached_property
    def At(self):
        """
        Per-block sparse operator with one column per constraint.

        Semidefinite blocks hold ``svec(a_k)`` columns, other blocks ``a_k``.
        """
        operators = []
        for spec, a in zip(self.specs, self.A):
            if spec.kind is ConeKind.SDP:
                rows, cols = svec_indices(spec.dim)
                columns = a[:, rows, cols] * svec_scale(spec.dim)
                operators.append(sp.csc_matrix(columns.T))
            else:
                operators.append(sp.csc_matrix(a.reshape(self.m, spec.dim).T))
        return operators

    def vectorize(self, p, payload):
        """Payload of block ``p`` as a vector in the coordinates of ``At[p]``."""
        if self.specs[p].kind is ConeKind.SDP:
            return svec(payload)
        return np.asarray(payload, dtype=float)

    def apply_block_operator(self, p, payload):
        """``(⟨aᵖ_1, v⟩, …, ⟨aᵖ_m, v⟩)`` for one block."""
        return self.At[p].T @ self.vectorize(p, payload)

    def apply_operator(self, x):
        """``Σ_p Aᵖ xᵖ``."""
        total = np.zeros(self.m)
        for p in range(self.num_blocks):
            total += self.apply_block_operator(p, x[p])
        return total

    def apply_block_adjoint(self, p, y):
        """``Σ_k y_k aᵖ_k`` for one block."""
        y = np.asarray(y, dtype=float)
        if self.specs[p].kind is ConeKind.SDP:
            return np.tensordot(y, self.A[p], axes=1)
        return self.A[p].T @ y

    def apply_adjoint(self, y):
        """``Aᵀy`` as a block vector."""
        if np.shape(y) != (self.m,):
            raise ValueError(f"y has shape {np.shape(y)}, expected ({self.m},)")
        return BlockVec(self.specs, [self.apply_block_adjoint(p, y) for p in range(self.num_blocks)])

    def constraint_norms(self):
        """Frobenius norm of every constraint ``a_k`` across all blocks."""
        squares = np.zeros(self.m)
        for a in self.A:
            squares += np.sum(a.reshape(self.m, -1) ** 2, axis=1)
        return np.sqrt(squares)

    def __eq__(self, other):
        if not isinstance(other, ProblemData):
            return NotImplemented
        return (
            self.specs == other.specs
            and np.array_equal(self.b, other.b)
            and all(np.array_equal(a, b) for a, b in zip(self.C, other.C))
            and all(a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.A, other.A))
        )

    __hash__ = None

    def __repr__(self):
        kinds = ",".join(f"{s.kind.name}{s.dim}" for s in self.specs)
        return f"ProblemData(m={self.m}, blocks=[{kinds}])"


def _as_float(value, what):
    if isinstance(value, str) and value.strip().lower() in ("true", "false"):
        raise ValueError(f"{what} must be a number, got '{value}'")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ValueError(f"{what} must be a number, got '{value}'") from None


def _as_bool(value, what):
    if isinstance(value, bool):
        return value
    key = str(value).strip().lower()
    if key in ("1", "true", "yes", "on"):
        return True
    if key in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{what} must be a boolean, got '{value}'")


@dataclass(frozen=True)
class SolverOptions:
    """
    Solver parameters.

    Values may be given as strings (as they arrive from the environment) and
    are converted on construction; out-of-range values raise ValueError
    naming the field.
    """

    direction: Direction = Direction.HKM
    eps: float = 1e-8
    kappa: float = 1e10
    maxiter: int = 100
    gamma: float = 0.99
    psi_hat: float = 3.0
    dense_ratio: float = 0.4
    rho0: float = 1e-6
    lambda0: float = 1e-4
    krylov_tol: float = 1e-11
    krylov_maxiter: int = 50
    krylov_fail_tol: float = 1e-4
    seed: int | None = None
    preprocess: bool = True

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "direction", Direction.parse(self.direction))
        for name in (
            "eps",
            "kappa",
            "gamma",
            "psi_hat",
            "dense_ratio",
            "rho0",
            "lambda0",
            "krylov_tol",
            "krylov_fail_tol",
        ):
            set_(self, name, _as_float(getattr(self, name), name))
        for name in ("maxiter", "krylov_maxiter"):
            value = _as_float(getattr(self, name), name)
            if value != int(value):
                raise ValueError(f"{name} must be an integer, got {value}")
            set_(self, name, int(value))
        if self.seed is not None:
            set_(self, "seed", int(_as_float(self.seed, "seed")))
        set_(self, "preprocess", _as_bool(self.preprocess, "preprocess"))

        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.psi_hat < 1:
            raise ValueError(f"psi_hat must be >= 1, got {self.psi_hat}")
        if not 0 < self.dense_ratio <= 1:
            raise ValueError(f"dense_ratio must lie in (0, 1], got {self.dense_ratio}")
        if self.maxiter < 0:
            raise ValueError(f"maxiter must be >= 0, got {self.maxiter}")
        if self.krylov_maxiter < 1:
            raise ValueError(f"krylov_maxiter must be >= 1, got {self.krylov_maxiter}")
        for name in ("rho0", "lambda0", "krylov_tol", "krylov_fail_tol"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")

    @classmethod
    def from_config(cls, config, **overrides):
        """
        Build options from the ``solver`` section of a Config.

        Keyword arguments that are not None take precedence over the config.
        """
        known = {f.name for f in fields(cls)}
        values = {k: v for k, v in (config.solver or {}).items() if v is not None}
        values.update({k: v for k, v in overrides.items() if v is not None})
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"Unknown solver options: {', '.join(sorted(unknown))}")
        return cls(**values)


@dataclass(frozen=True)
class IterationRecord:
    """One row of the iteration trace."""

    iteration: int
    mu: float
    sigma: float
    alpha_p: float
    alpha_d: float
    gap: float
    relgap: float
    pinfeas: float
    dinfeas: float
    path: str
    krylov_steps: int = 0
    residual: float = 0.0
    factorizations: int = 0

    def to_dict(self):
        return {
            k: (float(v) if isinstance(v, (float, np.floating)) else v)
            for k, v in asdict(self).items()
        }


def _payload_to_list(payload):
    return np.asarray(payload, dtype=float).tolist()


@dataclass(frozen=True)
class SolveResult:
    """
    Outcome of a solve.

    Attributes
    ----------
    status : SolveStatus
        Termination reason.
    x, z : BlockVec
        Primal and dual cone iterates.
    y : numpy.ndarray
        Dual multipliers.
    pobj, dobj, gap, relgap, pinfeas, dinfeas : float
        Objective values and the termination metrics of the final iterate.
    iterations : int
        Number of completed iterations.
    trace : tuple of IterationRecord
        Per-iteration log.
    message : str
        Detail for failure statuses.
    """

    status: SolveStatus
    x: BlockVec
    y: np.ndarray
    z: BlockVec
    pobj: float
    dobj: float
    gap: float
    relgap: float
    pinfeas: float
    dinfeas: float
    iterations: int = 0
    trace: tuple = field(default_factory=tuple)
    message: str = ""

    def to_dict(self):
        """Plain-Python view of the result for structured output."""
        return {
            "status": self.status.value,
            "pobj": float(self.pobj),
            "dobj": float(self.dobj),
            "gap": float(self.gap),
            "relgap": float(self.relgap),
            "pinfeas": float(self.pinfeas),
            "dinfeas": float(self.dinfeas),
            "iterations": int(self.iterations),
            "message": self.message,
            "x": [_payload_to_list(block) for block in self.x],
            "y": _payload_to_list(self.y),
            "z": [_payload_to_list(block) for block in self.z],
            "trace": [record.to_dict() for record in self.trace],
        }


def validate(p):
    """
    Check the invariants of a problem.

    Parameters
    ----------
    p : ProblemData
        Problem to check.

    Returns
    -------
    list of str
        One finding per violated invariant, naming the block or field. Empty
        when the problem is well formed.
    """
    findings = []
    if p.num_blocks == 0:
        findings.append("problem has no blocks")
    if not np.all(np.isfinite(p.b)):
        findings.append("b has non-finite entries")
    m = p.m
    for q, (spec, c, a) in enumerate(zip(p.specs, p.C, p.A)):
        findings.extend(f"block {q + 1}: {problem}" for problem in spec.findings())
        expected = (m,) + spec.payload_shape
        if a.shape != expected:
            findings.append(f"block {q + 1}: A has shape {a.shape}, expected {expected}")
            continue
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(a))):
            findings.append(f"block {q + 1}: data has non-finite entries")
            continue
        if spec.kind is ConeKind.SDP:
            scale = 1.0 + float(np.max(np.abs(c), initial=0.0))
            if np.max(np.abs(c - c.T), initial=0.0) > SYMMETRY_TOL * scale:
                findings.append(f"block {q + 1}: C is not symmetric")
            for k in range(m):
                ak = a[k]
                if np.max(np.abs(ak - ak.T), initial=0.0) > SYMMETRY_TOL * (1.0 + np.max(np.abs(ak))):
                    findings.append(f"block {q + 1}: constraint {k + 1} is not symmetric")
    return findings


def objectives(p, x, y, z):
    """
    Primal and dual objective values including barrier terms.

    Returns
    -------
    tuple of float
        ``(pobj, dobj)`` with ``pobj = ⟨c,x⟩ + Σφᵖ(xᵖ)`` and
        ``dobj = bᵀy + Σφᵖ*(zᵖ)``.
    """
    pobj = inner(p.C, x) + barrier_terms(x, p.specs, "primal")
    dobj = float(p.b @ np.asarray(y, dtype=float)) + barrier_terms(z, p.specs, "dual")
    return pobj, dobj


class ProblemReader(ABC):
    """
    Base class for problem-file readers.
    """

    name = None

    @abstractmethod
    def parse(self, text):
        """
        Parse the text of a problem file.

        Parameters
        ----------
        text : str
            File contents.

        Returns
        -------
        ProblemData
            The validated problem.
        """
        pass

    def read(self, path):
        with open(path, "r", encoding="utf-8") as file:
            return self.parse(file.read())

    @staticmethod
    def checked(problem):
        findings = validate(problem)
        if findings:
            raise ProblemFormatError("; ".join(findings))
        return problem


def _sym_from_entries(n, entries, where):
    """Symmetric matrix from 1-based ``(i, j, value)`` entries."""
    values = {}
    for i, j, v in entries:
        key = (min(i, j), max(i, j))
        if key in values and values[key] != v:
            raise ProblemFormatError(
                f"{where}: conflicting values {values[key]} and {v} for entry ({key[0]}, {key[1]})"
            )
        values[key] = v
    a = np.zeros((n, n))
    for (i, j), v in values.items():
        a[i - 1, j - 1] = v
        a[j - 1, i - 1] = v
    return a


class NativeReader(ProblemReader):
    """
    Reader of the YAML/JSON native format.
    """

    name = "native"
    keys = ("blocks", "b", "C", "A")

    def parse(self, text):
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            raise ProblemFormatError(
                f"Invalid YAML: {getattr(e, 'problem', None) or e}",
                line=mark.line + 1 if mark is not None else None,
            ) from e
        if not isinstance(doc, dict):
            raise ProblemFormatError("Document must be a mapping with keys blocks, b, C, A")
        missing = [k for k in self.keys if k not in doc]
        if missing:
            raise ProblemFormatError(f"Missing key(s): {', '.join(missing)}")
        extra = sorted(str(k) for k in doc if k not in self.keys)
        if extra:
            raise ProblemFormatError(f"Unknown key(s): {', '.join(extra)}")

        specs = self._parse_blocks(doc["blocks"])
        b = self._numbers(doc["b"], "b")
        cost, coefficients = doc["C"], doc["A"]
        if not isinstance(cost, list) or len(cost) != len(specs):
            raise ProblemFormatError(f"C must list one entry per block ({len(specs)})")
        if not isinstance(coefficients, list) or len(coefficients) != len(specs):
            raise ProblemFormatError(f"A must list one entry per block ({len(specs)})")
        if specs:
            if not isinstance(coefficients[0], list):
                raise ProblemFormatError("A[1] must be a list of constraint entries")
            m = len(coefficients[0])
        else:
            m = len(b)
        if len(b) != m:
            raise ProblemFormatError(f"b has {len(b)} entries, expected m = {m}")

        fragments = []
        for q, spec in enumerate(specs):
            where = f"block {q + 1}"
            c = self._payload(spec, cost[q], f"C[{q + 1}]")
            entries = coefficients[q]
            if not isinstance(entries, list) or len(entries) != m:
                raise ProblemFormatError(f"A[{q + 1}] must hold m = {m} entries ({where})")
            stack = np.zeros((m,) + spec.payload_shape)
            for k, entry in enumerate(entries):
                stack[k] = self._payload(spec, entry, f"A[{q + 1}][{k + 1}]")
            fragments.append(BlockFragment(spec, c, stack))
        return self.checked(ProblemData.from_fragments(fragments, b))

    @staticmethod
    def _numbers(values, where):
        if not isinstance(values, list):
            raise ProblemFormatError(f"{where} must be a list of numbers")
        try:
            return np.array([_as_float(v, where) for v in values], dtype=float)
        except ValueError as e:
            raise ProblemFormatError(str(e)) from None

    def _parse_blocks(self, blocks):
        if not isinstance(blocks, list):
            raise ProblemFormatError("blocks must be a list")
        specs = []
        for q, block in enumerate(blocks):
            if not isinstance(block, dict) or "kind" not in block or "dim" not in block:
                raise ProblemFormatError(f"blocks[{q + 1}] needs 'kind' and 'dim'")
            try:
                kind = ConeKind.parse(block["kind"])
                dim = _as_float(block["dim"], f"blocks[{q + 1}].dim")
                barrier = _as_float(block.get("barrier", 0.0), f"blocks[{q + 1}].barrier")
            except ValueError as e:
                raise ProblemFormatError(str(e)) from None
            if dim != int(dim):
                raise ProblemFormatError(f"blocks[{q + 1}].dim must be an integer, got {dim}")
            specs.append(BlockSpec(kind, int(dim), barrier))
        return specs

    def _payload(self, spec, entry, where):
        if spec.kind is not ConeKind.SDP:
            values = self._numbers(entry, where)
            if values.shape[0] != spec.dim:
                raise ProblemFormatError(f"{where} has {values.shape[0]} entries, expected {spec.dim}")
            return values
        if not isinstance(entry, list):
            raise ProblemFormatError(f"{where} must be a list of [i, j, value] triplets")
        triplets = []
        for triplet in entry:
            if not isinstance(triplet, list) or len(triplet) != 3:
                raise ProblemFormatError(f"{where}: expected [i, j, value], got {triplet!r}")
            try:
                i = _as_float(triplet[0], where)
                j = _as_float(triplet[1], where)
                v = _as_float(triplet[2], where)
            except ValueError as e:
                raise ProblemFormatError(str(e)) from None
            if i != int(i) or j != int(j) or not (1 <= i <= spec.dim and 1 <= j <= spec.dim):
                raise ProblemFormatError(
                    f"{where}: index ({triplet[0]}, {triplet[1]}) out of range 1..{spec.dim}"
                )
            triplets.append((int(i), int(j), v))
        return _sym_from_entries(spec.dim, triplets, where)


class SdpaReader(ProblemReader):
    """
    Reader of the SDPA sparse format (``.dat-s``).

    SDPA's primal ``min cᵀx, Σ F_i x_i − F_0 ⪰ 0`` is read as the dual problem
    with ``C = −F_0``, ``a_k = −F_k`` and ``b = −c``.
    """

    name = "sdpa"
    separators = str.maketrans({ch: " " for ch in ",{}()"})

    def _lines(self, text):
        for lineno, raw in enumerate(text.splitlines(), start=1):
            stripped = raw.strip()
            if not stripped or stripped[0] in "\"*":
                continue
            tokens = stripped.translate(self.separators).split()
            if tokens:
                yield lineno, tokens

    @staticmethod
    def _integer(token, lineno, what):
        try:
            value = float(token)
        except ValueError:
            raise ProblemFormatError(f"{what} must be an integer, got '{token}'", line=lineno) from None
        if value != int(value):
            raise ProblemFormatError(f"{what} must be an integer, got '{token}'", line=lineno)
        return int(value)

    def _take(self, lines, count, what, convert):
        values = []
        while len(values) < count:
            try:
                lineno, tokens = next(lines)
            except StopIteration:
                raise ProblemFormatError(f"Unexpected end of file while reading {what}") from None
            for token in tokens[: count - len(values)]:
                values.append(convert(token, lineno))
        return values

    def parse(self, text):
        lines = self._lines(text)
        m = self._take(lines, 1, "m", lambda t, n: self._integer(t, n, "m"))[0]
        nblocks = self._take(lines, 1, "the block count", lambda t, n: self._integer(t, n, "block count"))[0]
        if m < 0 or nblocks < 1:
            raise ProblemFormatError(f"Invalid header: m = {m}, nblocks = {nblocks}")
        sizes = self._take(lines, nblocks, "block sizes", lambda t, n: self._integer(t, n, "block size"))
        if any(size == 0 for size in sizes):
            raise ProblemFormatError("Block sizes must be nonzero")

        def number(token, lineno):
            try:
                return float(token)
            except ValueError:
                raise ProblemFormatError(f"Expected a number, got '{token}'", line=lineno) from None

        c = self._take(lines, m, "the objective vector", number) if m else []
        specs = [
            BlockSpec(ConeKind.SDP, size) if size > 0 else BlockSpec(ConeKind.LIN, -size) for size in sizes
        ]

        entries = OrderedDict()
        for lineno, tokens in lines:
            if len(tokens) < 5:
                raise ProblemFormatError(f"Entry needs 'k blk i j value', got {' '.join(tokens)}", line=lineno)
            k = self._integer(tokens[0], lineno, "matrix index")
            blk = self._integer(tokens[1], lineno, "block index")
            i = self._integer(tokens[2], lineno, "row index")
            j = self._integer(tokens[3], lineno, "column index")
            value = number(tokens[4], lineno)
            if not 0 <= k <= m:
                raise ProblemFormatError(f"Matrix index {k} out of range 0..{m}", line=lineno)
            if not 1 <= blk <= nblocks:
                raise ProblemFormatError(f"Block index {blk} out of range 1..{nblocks}", line=lineno)
            spec = specs[blk - 1]
            if not (1 <= i <= spec.dim and 1 <= j <= spec.dim):
                raise ProblemFormatError(f"Index ({i}, {j}) out of range for block {blk}", line=lineno)
            if i > j:
                raise ProblemFormatError(f"Entry ({i}, {j}) lies below the diagonal", line=lineno)
            if spec.kind is ConeKind.LIN and i != j:
                raise ProblemFormatError(f"Off-diagonal entry ({i}, {j}) in diagonal block {blk}", line=lineno)
            key = (k, blk - 1, i - 1, j - 1)
            if key in entries:
                logger.warning(f"Duplicate SDPA entry {k} {blk} {i} {j} on line {lineno}; last value wins")
            entries[key] = value

        costs = [np.zeros(spec.payload_shape) for spec in specs]
        stacks = [np.zeros((m,) + spec.payload_shape) for spec in specs]
        for (k, q, i, j), value in entries.items():
            target = costs[q] if k == 0 else stacks[q][k - 1]
            if specs[q].kind is ConeKind.LIN:
                target[i] = -value
            else:
                target[i, j] = -value
                target[j, i] = -value
        b = -np.asarray(c, dtype=float) if m else np.zeros(0)
        fragments = [BlockFragment(spec, cost, stack) for spec, cost, stack in zip(specs, costs, stacks)]
        return self.checked(ProblemData.from_fragments(fragments, b))


READERS = {"native": NativeReader, "sdpa": SdpaReader}


def parse_native(text):
    """Parse a native-format document into a validated ProblemData."""
    return NativeReader().parse(text)


def parse_sdpa(text):
    """Parse an SDPA sparse document into a validated ProblemData."""
    return SdpaReader().parse(text)


def detect_format(path):
    """``"sdpa"`` for ``.dat-s``/``.dat`` files, ``"native"`` otherwise."""
    name = os.path.basename(str(path)).lower()
    if name.endswith(".dat-s") or name.endswith(".dat"):
        return "sdpa"
    return "native"


def read_problem(path, fmt="auto"):
    """
    Read a problem file.

    Parameters
    ----------
    path : str or os.PathLike
        File to read.
    fmt : {"auto", "native", "sdpa"}
        File format; ``"auto"`` decides by extension.

    Returns
    -------
    ProblemData
        The validated problem.
    """
    fmt = detect_format(path) if fmt == "auto" else fmt
    if fmt not in READERS:
        raise ValueError(f"Unknown problem format '{fmt}'")
    logger.debug(f"Reading {path} as {fmt}")
    return READERS[fmt]().read(path)


def _number(value):
    value = float(value)
    return int(value) if value.is_integer() and abs(value) < 2**53 else value


def serialize_native(p):
    """
    Write a problem in the native format.

    ``parse_native(serialize_native(p)) == p`` holds for every problem whose
    semidefinite data is exactly symmetric.
    """

    def payload(spec, value):
        if spec.kind is ConeKind.SDP:
            rows, cols = np.nonzero(np.triu(value))
            return [[int(i) + 1, int(j) + 1, _number(value[i, j])] for i, j in zip(rows, cols)]
        return [_number(v) for v in value]

    doc = {
        "blocks": [
            {"kind": spec.kind.name.lower(), "dim": spec.dim, "barrier": _number(spec.barrier)}
            for spec in p.specs
        ],
        "b": [_number(v) for v in p.b],
        "C": [payload(spec, c) for spec, c in zip(p.specs, p.C)],
        "A": [[payload(spec, ak) for ak in a] for spec, a in zip(p.specs, p.A)],
    }
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)
