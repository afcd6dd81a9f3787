from .config import Config
from .cones import BlockSpec, BlockVec, ConeKind
from .ipm import InteriorPointSolver, solve
from .preprocess import complex_to_real, hermitian_from_embedding, postprocess, preprocess
from .problem import (
    Direction,
    ProblemData,
    ProblemFormatError,
    SolveResult,
    SolverOptions,
    SolveStatus,
    parse_native,
    parse_sdpa,
    read_problem,
    serialize_native,
)
