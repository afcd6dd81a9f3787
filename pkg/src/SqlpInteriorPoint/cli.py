"""
Batch command-line front end: ``sqlp-solve PROBLEM [options]``.

Exit codes: 0 optimal, 1 iteration limit or slow progress, 2 primal or dual
infeasible, 3 numerical failure, 64 usage or input errors.
"""

import argparse
import logging
import sys
from dataclasses import dataclass

import yaml

from .config import Config
from .ipm import solve
from .problem import ProblemFormatError, SolverOptions, read_problem

logger = logging.getLogger(__name__)

EX_USAGE = 64
TRACE_COLUMNS = ("iter", "mu", "sigma", "alpha_p", "alpha_d", "relgap", "pinfeas", "dinfeas", "path")


class UsageError(Exception):
    """Raised by the argument parser instead of exiting."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    parser = _Parser(prog="sqlp-solve", description="Solve a semidefinite-quadratic-linear program.")
    parser.add_argument("input", help="problem file (.dat-s/.dat for SDPA, otherwise native YAML)")
    parser.add_argument("--format", dest="fmt", choices=("auto", "sdpa", "native"), default="auto")
    parser.add_argument("--direction", choices=("hkm", "nt"))
    parser.add_argument("--eps", type=float)
    parser.add_argument("--max-iters", dest="maxiter", type=int)
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--output", choices=("text", "structured"), default="text")
    parser.add_argument("--quiet", action="store_true", help="only warnings on stderr, no iteration table")
    parser.add_argument("--no-preprocess", dest="preprocess", action="store_false")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--config", help="YAML settings file replacing the packaged defaults")
    return parser


@dataclass(frozen=True)
class CliConfig:
    """Parsed command line."""

    input: str
    fmt: str = "auto"
    direction: str | None = None
    eps: float | None = None
    maxiter: int | None = None
    gamma: float | None = None
    output: str = "text"
    quiet: bool = False
    preprocess: bool = True
    seed: int | None = None
    config: str | None = None

    @classmethod
    def from_argv(cls, argv):
        namespace = build_parser().parse_args(argv)
        return cls(**vars(namespace))

    def solver_options(self, config):
        """SolverOptions from ``config`` with the command-line values on top."""
        return SolverOptions.from_config(
            config,
            direction=self.direction,
            eps=self.eps,
            maxiter=self.maxiter,
            gamma=self.gamma,
            seed=self.seed,
            preprocess=None if self.preprocess else False,
        )


def format_trace(trace):
    lines = [" ".join(f"{name:>9}" for name in TRACE_COLUMNS)]
    for r in trace:
        values = (r.mu, r.sigma, r.alpha_p, r.alpha_d, r.relgap, r.pinfeas, r.dinfeas)
        lines.append(f"{r.iteration:>9d} " + " ".join(f"{v:9.2e}" for v in values) + f" {r.path:>9}")
    return "\n".join(lines)


def format_summary(result):
    return "\n".join(
        [
            f"status: {result.status.value}",
            f"iterations: {result.iterations}",
            f"pobj: {result.pobj!r}",
            f"dobj: {result.dobj!r}",
            f"gap: {result.gap!r}",
            f"relgap: {result.relgap!r}",
            f"pinfeas: {result.pinfeas!r}",
            f"dinfeas: {result.dinfeas!r}",
        ]
        + ([f"message: {result.message}"] if result.message else [])
    )


def run(argv=None, stdout=None):
    """
    Run the solver front end.

    Parameters
    ----------
    argv : list of str, optional
        Arguments without the program name (``sys.argv[1:]`` by default).
    stdout : file-like, optional
        Destination of results (``sys.stdout`` by default).

    Returns
    -------
    int
        Process exit code.
    """
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        cli = CliConfig.from_argv(sys.argv[1:] if argv is None else argv)
    except UsageError as e:
        sys.stderr.write(f"{parser.format_usage()}sqlp-solve: error: {e}\n")
        return EX_USAGE
    except SystemExit as e:
        return e.code or 0

    try:
        config = Config(cli.config)
        level = logging.WARNING if cli.quiet else config.logging["level"]
        logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
        options = cli.solver_options(config)
        problem = read_problem(cli.input, cli.fmt)
        result = solve(problem, options)
    except (ProblemFormatError, ValueError, OSError, yaml.YAMLError) as e:
        logger.error(f"Error: {e}")
        return EX_USAGE

    if cli.output == "structured":
        yaml.safe_dump(result.to_dict(), stdout, sort_keys=False)
    else:
        if not cli.quiet:
            stdout.write(format_trace(result.trace) + "\n")
        stdout.write(format_summary(result) + "\n")
    return result.status.exit_code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
