"""Interval-partition evolutions with Poisson-Dirichlet stationary laws.

Two independent samplers of the type-1 and type-0 evolutions (explicit
transition kernels, and skewers of spindle-marked stable scaffolding),
de-Poissonization, and a statistical verification suite.
"""

__version__ = "0.1.0"

from .partition import IntervalPartition, concatenate, metric_distance, reverse, scale
from .randkit import RandomStream

__all__ = [
    "IntervalPartition",
    "RandomStream",
    "concatenate",
    "metric_distance",
    "reverse",
    "scale",
    "__version__",
]
