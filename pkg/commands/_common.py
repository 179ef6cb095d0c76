import argparse
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from solvers.errors import QpError, UsageError
from utils.logger import log

METHOD_CHOICES = ('ipm', 'active-set', 'liasm', 'all')
ALL_METHODS = ('ipm', 'active-set', 'liasm')


class QpsArgumentParser(argparse.ArgumentParser):
    """argparse that raises UsageError (exit 1) instead of exiting with status 2."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class CliConfig:
    command: str
    method: Optional[str] = None
    problem_path: Optional[str] = None
    tol: Optional[float] = None
    max_iter: Optional[int] = None
    seed: Optional[int] = None
    output_path: Optional[str] = None
    format: str = 'text'

    def __post_init__(self):
        if self.tol is not None and not self.tol > 0:
            raise UsageError(f"--tol must be positive, got {self.tol}")
        if self.max_iter is not None and self.max_iter < 1:
            raise UsageError(f"--max-iter must be at least 1, got {self.max_iter}")
        if self.method is not None and self.method not in METHOD_CHOICES:
            raise UsageError(f"unknown method {self.method!r}")

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> 'CliConfig':
        return cls(
            command=args.command,
            method=getattr(args, 'method', None),
            problem_path=getattr(args, 'problem', None),
            tol=getattr(args, 'tol', None),
            max_iter=getattr(args, 'max_iter', None),
            seed=getattr(args, 'seed', None),
            output_path=getattr(args, 'out', None),
            format=getattr(args, 'format', None) or 'text',
        )

    def methods(self, default: str):
        method = self.method or default
        return list(ALL_METHODS) if method == 'all' else [method]


def fmt(value) -> str:
    """12 significant digits."""
    if value is None:
        return 'n/a'
    return format(float(value), '.12g')


def fmt_vector(values) -> str:
    return ' '.join(fmt(v) for v in np.asarray(values, dtype=float))


def report_error(e: QpError) -> int:
    """Message on stderr plus the log, returns the error's exit code."""
    log.error(f"{type(e).__name__}: {e}")
    print(f"qps: error: {e}", file=sys.stderr)
    return e.exit_code
