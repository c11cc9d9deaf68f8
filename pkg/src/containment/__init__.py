"""Containment probabilities of diffusions with drift.

Monte Carlo estimation, Ornstein-Uhlenbeck decay rates, symmetric
pull-dominance checks and the contraction-to-OU bound.
"""

__version__ = "0.1.0"

from .drift import ContainmentQuery, DriftSpec, NoiseSpec, eval_drift, rotation_to_e1  # noqa: E402
from .expr import parse_expr  # noqa: E402
from .kernels import BACKEND  # noqa: E402

__all__ = ["__version__", "BACKEND", "DriftSpec", "NoiseSpec", "ContainmentQuery",
           "eval_drift", "rotation_to_e1", "parse_expr"]
