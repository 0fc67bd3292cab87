"""Shared types: vectors, counted objective oracles and iteration traces.

Decision variables are plain ``float64`` numpy arrays.  Every oracle accepts
either a single point of shape ``(d,)`` or a stack of points ``(..., d)``; a
stack of ``n`` points costs ``n`` queries.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "HlfszoError",
    "DimensionError",
    "NonFiniteError",
    "OrderingError",
    "ObjectiveOracle",
    "GradientOracle",
    "Trace",
    "as_vector",
    "counted_eval",
    "record",
]


class HlfszoError(Exception):
    """Base class for all structured errors raised by the package."""


class DimensionError(HlfszoError, ValueError):
    pass


class NonFiniteError(HlfszoError, ArithmeticError):
    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


class OrderingError(HlfszoError, ValueError):
    pass


def as_vector(x, dim: Optional[int] = None) -> np.ndarray:
    """Convert ``x`` to a finite 1-D float64 array, optionally checking its length."""
    v = np.atleast_1d(np.array(x, dtype=np.float64))
    if v.ndim != 1 or v.size == 0:
        raise DimensionError(f"expected a non-empty 1-D vector, got shape {v.shape}")
    if dim is not None and v.size != dim:
        raise DimensionError(f"expected dimension {dim}, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"vector has non-finite entries: {v!r}", x=v)
    return v


class ObjectiveOracle:
    """Value-only black box ``f: R^d -> R`` that counts its queries.

    ``fn`` must be vectorized over leading axes.  Algorithmic queries go to
    ``query_count``; trace bookkeeping evaluations go to ``bookkeeping_count``
    so that the per-method query invariants stay exact.

    With ``strict=True`` a non-finite value raises :class:`NonFiniteError`.
    Batch runners set ``strict=False`` and handle divergence per trial.
    """

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], dim: int, name: str = "", strict: bool = True):
        if int(dim) < 1:
            raise DimensionError(f"dim must be positive, got {dim}")
        self.fn = fn
        self.dim = int(dim)
        self.name = name
        self.strict = strict
        self.query_count = 0
        self.bookkeeping_count = 0

    def __call__(self, x):
        return counted_eval(self, x)

    def evaluate(self, x, bookkeeping: bool = False):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 0 or x.shape[-1] != self.dim:
            raise DimensionError(f"oracle {self.name or ''} expects dimension {self.dim}, got shape {x.shape}")
        n = x.size // self.dim
        with np.errstate(over="ignore", invalid="ignore"):
            val = self.fn(x)
        if bookkeeping:
            self.bookkeeping_count += n
        else:
            self.query_count += n
        if self.strict and not np.all(np.isfinite(val)):
            raise NonFiniteError(f"objective returned a non-finite value at x={x!r}", x=x)
        if x.ndim == 1:
            return float(val)
        return np.asarray(val, dtype=np.float64)

    def reset_counts(self):
        self.query_count = 0
        self.bookkeeping_count = 0

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, dim={self.dim}, queries={self.query_count})"


class GradientOracle(ObjectiveOracle):
    """Objective oracle that also exposes an analytic gradient.

    Only verification and benchmark code calls :meth:`grad`; the zeroth-order
    steppers never do.  Gradient calls are not counted.
    """

    def __init__(self, fn, grad: Callable[[np.ndarray], np.ndarray], dim: int, name: str = "", strict: bool = True):
        super().__init__(fn, dim, name=name, strict=strict)
        self._grad = grad

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise DimensionError(f"expected dimension {self.dim}, got shape {x.shape}")
        return np.asarray(self._grad(x), dtype=np.float64)


def counted_eval(oracle: ObjectiveOracle, x) -> float:
    """Evaluate ``oracle`` at ``x`` and charge one query per point."""
    return oracle.evaluate(x)


@dataclass
class Trace:
    """Per-iteration record of one optimizer run.

    ``xs`` stays empty when iterates are not stored (the default for
    ``d > 10``).  ``f_star`` is set by runners that know the optimum of the
    problem instance the trace was produced on.  ``steps`` is the number of
    iterations actually executed when a runner sets it; for a diverged run it
    stops at the step that blew up.
    """

    iters: list = field(default_factory=list)
    f_values: list = field(default_factory=list)
    queries: list = field(default_factory=list)
    xs: list = field(default_factory=list)
    store_x: bool = True
    diverged: bool = False
    f_star: Optional[float] = None
    steps: Optional[int] = None

    def __len__(self):
        return len(self.iters)

    @property
    def records(self):
        xs = self.xs if self.store_x else [None] * len(self.iters)
        return list(zip(self.iters, xs, self.f_values, self.queries))

    def append(self, it: int, x, f_x: float, queries: int):
        if self.iters and it <= self.iters[-1]:
            raise OrderingError(f"iteration {it} does not follow last recorded iteration {self.iters[-1]}")
        if not self.iters and it != 0:
            raise OrderingError(f"a trace starts at iteration 0, got {it}")
        if self.queries and queries < self.queries[-1]:
            raise OrderingError(f"query count decreased from {self.queries[-1]} to {queries}")
        self.iters.append(int(it))
        self.f_values.append(float(f_x))
        self.queries.append(int(queries))
        if self.store_x:
            self.xs.append(np.array(x, dtype=np.float64, copy=True))
        return self

    def as_arrays(self):
        return np.asarray(self.iters), np.asarray(self.f_values), np.asarray(self.queries)


def record(trace: Trace, it: int, x, f_x: float, queries: int) -> Trace:
    return trace.append(it, x, f_x, queries)
