"""Single-point zeroth-order optimization with high-pass and low-pass filters."""

__version__ = "0.1.0"

from .core import (DimensionError, GradientOracle, HlfszoError, NonFiniteError, ObjectiveOracle,
                   OrderingError, Trace, counted_eval, record)
from .optimizers import (FeasibilityError, Method, SzoHyperparams, params_from_discretization,
                         run_batch, run_optimizer, theorem_bounds)
from .sampling import RngStream, derive, sample_ball, sample_sphere

__all__ = [
    "__version__",
    "DimensionError",
    "FeasibilityError",
    "GradientOracle",
    "HlfszoError",
    "Method",
    "NonFiniteError",
    "ObjectiveOracle",
    "OrderingError",
    "RngStream",
    "SzoHyperparams",
    "Trace",
    "counted_eval",
    "derive",
    "params_from_discretization",
    "record",
    "run_batch",
    "run_optimizer",
    "sample_ball",
    "sample_sphere",
    "theorem_bounds",
]
