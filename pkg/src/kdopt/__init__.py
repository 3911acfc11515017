"""Stochastic optimization toolkit for distillation-weighted SGD.

Core pieces: finite-sum objectives with per-sample gradient oracles,
distillation gradients and the optimal-weight analysis, bias-corrected and
compressed-iterate training loops, exact-constants solvers for quadratic
problems, unbiased compression operators, dataset I/O, and a CSV-emitting
experiment CLI.
"""

from .errors import ConfigError, DataFormatError, DivergedError, UndefinedRatioError

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataFormatError",
    "DivergedError",
    "UndefinedRatioError",
    "__version__",
]
