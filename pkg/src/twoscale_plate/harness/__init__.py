"""Run configuration, convergence studies, invariant checks and the command line."""

from .config import ConfigError, RunConfig
from .studies import ConvergenceTable, richardson_limit

__all__ = ["ConfigError", "RunConfig", "ConvergenceTable", "richardson_limit"]
