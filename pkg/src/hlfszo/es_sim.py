"""Scalar extremum-seeking loop in continuous time.

The loop probes ``f`` at ``x + a sin(wt)``, optionally high-passes the
measurement, demodulates with ``(2/a) sin(wt)``, optionally low-passes the
result and integrates it into ``x``.  :func:`average_dynamics` computes the
period average of the unfiltered right-hand side, which approaches
``f'(x)`` as ``a -> 0``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import HlfszoError, NonFiniteError
from .optimizers import (FilterParams, SzoHyperparams, init_filter_state, init_state,
                         params_from_discretization, step_filter_form, step_hlf)
from .objectives import quadratic_objective
from .sampling import RngStream, sample_sphere

__all__ = [
    "EsParams",
    "EsState",
    "EsTrajectory",
    "BridgeReport",
    "es_rhs",
    "integrate_es",
    "average_dynamics",
    "discretization_bridge",
    "write_trajectory_csv",
]

ScalarFn = Callable[[np.ndarray], np.ndarray]

# Fewest RK4 steps allowed per probe period.
MIN_STEPS_PER_PERIOD = 20
DIVERGENCE_THRESHOLD = 1e12


@dataclass(frozen=True)
class EsParams:
    a: float
    omega: float
    omega_H: float = 0.0
    omega_L: float = 1.0
    use_filters: bool = False

    def __post_init__(self):
        if not (self.a > 0 and self.omega > 0 and self.omega_L > 0):
            raise ValueError(f"a, omega and omega_L must be positive, got {self}")
        if not self.omega_H >= 0:
            raise ValueError(f"omega_H must be non-negative, got {self.omega_H!r}")

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.omega


@dataclass(frozen=True)
class EsState:
    """Plant state ``x``, high-pass state ``xi``, low-pass output ``y``, time ``t``."""

    x: float
    xi: float = 0.0
    y: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.xi, self.y, self.t)):
            raise NonFiniteError(f"ES state has non-finite fields: {self}")


def _rhs(t, x, xi, y, p: EsParams, f):
    # Returns (dx, dxi, dy) as plain floats.
    sn = math.sin(p.omega * t)
    v = float(f(x + p.a * sn))
    if not p.use_filters:
        return -(2.0 / p.a) * v * sn, 0.0, 0.0
    z = v - p.omega_H * xi
    g = (2.0 / p.a) * z * sn
    return -y, -p.omega_H * xi + v, p.omega_L * (g - y)


def es_rhs(state: EsState, params: EsParams, f: ScalarFn) -> EsState:
    """Time derivative of the loop; the returned ``t`` field is ``dt/dt = 1``.

    Without filters ``x' = -(2/a) f(x + a sin wt) sin wt``.  With filters the
    high-pass ``s/(s + w_H)`` is realized as ``xi' = -w_H xi + v`` with output
    ``z = v - w_H xi``, then ``g = (2/a) z sin wt``, ``y' = w_L (g - y)`` and
    ``x' = -y``.
    """
    dx, dxi, dy = _rhs(state.t, state.x, state.xi, state.y, params, f)
    return EsState(x=dx, xi=dxi, y=dy, t=1.0)


@dataclass
class EsTrajectory:
    t: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    y: np.ndarray
    step: np.ndarray
    diverged: bool = False
    evaluations: int = 0

    def states(self):
        return [EsState(*row) for row in zip(self.x, self.xi, self.y, self.t)]

    def __len__(self):
        return self.t.size


def integrate_es(x0, params: EsParams, f: ScalarFn, horizon: float, dt: float,
                 state0: Optional[EsState] = None, sample_every: int = 1) -> EsTrajectory:
    """Classical RK4 on the ES loop from ``x0`` (``xi = y = 0``) over ``[0, horizon]``.

    ``dt`` must resolve the probe with at least 20 steps per period.  The
    final step is shortened to land on ``horizon`` exactly.  If the state
    leaves the finite range the trajectory is cut and flagged.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    if dt > params.period / MIN_STEPS_PER_PERIOD:
        raise HlfszoError(
            f"dt={dt:g} is too coarse: need dt <= (2*pi/omega)/{MIN_STEPS_PER_PERIOD} = "
            f"{params.period / MIN_STEPS_PER_PERIOD:g}")
    if horizon < 0:
        raise ValueError(f"horizon must be non-negative, got {horizon!r}")
    if sample_every < 1:
        raise ValueError(f"sample_every must be >= 1, got {sample_every}")
    st = state0 if state0 is not None else EsState(x=float(x0))
    x, xi, y = st.x, st.xi, st.y
    t = st.t
    t_end = st.t + horizon
    n = int(math.ceil(horizon / dt - 1e-9)) if horizon > 0 else 0

    ts, rows, idx = [t], [(x, xi, y)], [0]
    diverged = False
    evals = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n):
            h = t_end - t if i == n - 1 else dt
            h2 = 0.5 * h
            a1, b1, c1 = _rhs(t, x, xi, y, params, f)
            a2, b2, c2 = _rhs(t + h2, x + h2 * a1, xi + h2 * b1, y + h2 * c1, params, f)
            a3, b3, c3 = _rhs(t + h2, x + h2 * a2, xi + h2 * b2, y + h2 * c2, params, f)
            a4, b4, c4 = _rhs(t + h, x + h * a3, xi + h * b3, y + h * c3, params, f)
            evals += 4
            x += (h / 6) * (a1 + 2 * a2 + 2 * a3 + a4)
            xi += (h / 6) * (b1 + 2 * b2 + 2 * b3 + b4)
            y += (h / 6) * (c1 + 2 * c2 + 2 * c3 + c4)
            t = t_end if i == n - 1 else st.t + (i + 1) * dt
            if not (abs(x) <= DIVERGENCE_THRESHOLD and abs(xi) <= DIVERGENCE_THRESHOLD
                    and abs(y) <= DIVERGENCE_THRESHOLD):
                diverged = True
                break
            if (i + 1) % sample_every == 0 or i == n - 1:
                ts.append(t)
                rows.append((x, xi, y))
                idx.append(i + 1)
    rows = np.array(rows)
    return EsTrajectory(t=np.array(ts), x=rows[:, 0], xi=rows[:, 1], y=rows[:, 2],
                        step=np.array(idx), diverged=diverged, evaluations=evals)


def average_dynamics(f: ScalarFn, x: float, a: float, omega: float,
                     panels: int = 64, order: int = 16) -> float:
    """Period average ``(1/P) int_0^P (2/a) f(x + a sin wt) sin wt dt``, ``P = 2 pi / w``.

    Composite Gauss-Legendre with ``panels * order`` nodes (1024 by default).
    ``f`` must accept an array of points.
    """
    if not (a > 0 and omega > 0):
        raise ValueError(f"a and omega must be positive, got a={a!r}, omega={omega!r}")
    if panels * order < 1000:
        raise ValueError("use at least 1000 quadrature nodes")
    nodes, weights = np.polynomial.legendre.leggauss(order)
    # Integrate over phase theta = wt in [0, 2 pi]; the 1/P and dt = dtheta/w cancel.
    edges = np.linspace(0.0, 2.0 * math.pi, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    theta = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    sn = np.sin(theta)
    vals = np.asarray(f(x + a * sn), dtype=np.float64)
    return float((2.0 / a) * np.sum(w * vals * sn) / (2.0 * math.pi))


@dataclass(frozen=True)
class BridgeReport:
    hyperparams: SzoHyperparams
    steps: int
    max_rel_deviation: float
    diverged: bool = False


def discretization_bridge(params: EsParams, delta: float, oracle=None, x0=None, steps: int = 10_000,
                          r: float = 0.1, seed: int = 0) -> BridgeReport:
    """Run the filter-form recursion and HLF-SZO with mapped parameters side by side.

    Both see the same oracle values and the same direction sequence.  The
    deviation of iterate ``k`` is ``|x_ff - x_hlf|_inf / max(|x_hlf|_inf, 1)``.
    The default objective is ``0.5 |x|^2`` in three dimensions from ``x0 = 1``.
    Raises :class:`FeasibilityError` when ``delta * omega_L > 1``.  If the
    iterates blow up the comparison stops there and ``diverged`` is set.
    """
    fp = FilterParams(delta, params.omega_H, params.omega_L, r)
    hp = params_from_discretization(delta, params.omega_H, params.omega_L, r)
    if oracle is None:
        oracle = quadratic_objective(np.eye(3), np.zeros(3)).oracle()
    if x0 is None:
        x0 = np.ones(oracle.dim)
    U = sample_sphere(RngStream(seed), oracle.dim, steps)
    s_ff = init_filter_state(x0)
    s_h = init_state(x0)
    X_ff = np.empty((steps, oracle.dim))
    X_h = np.empty((steps, oracle.dim))
    strict, oracle.strict = oracle.strict, False
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            for k, u in enumerate(U):
                s_ff = step_filter_form(s_ff, oracle, fp, u=u)
                s_h = step_hlf(s_h, oracle, hp, u=u)
                X_ff[k] = s_ff.x
                X_h[k] = s_h.x
    finally:
        oracle.strict = strict
    with np.errstate(invalid="ignore"):
        scale = np.max(np.abs(X_h), axis=1)
        ok = (scale < DIVERGENCE_THRESHOLD) & np.all(np.isfinite(X_ff), axis=1)
        done = steps if ok.all() else int(np.argmin(ok))
        dev = np.max(np.abs(X_ff[:done] - X_h[:done]), axis=1) / np.maximum(scale[:done], 1.0)
    worst = float(dev.max()) if done else 0.0
    if done < steps:
        return BridgeReport(hyperparams=hp, steps=done, max_rel_deviation=worst, diverged=True)
    return BridgeReport(hyperparams=hp, steps=done, max_rel_deviation=worst)


def write_trajectory_csv(path, traj: EsTrajectory, f: ScalarFn, method: str = "es",
                         trial: int = 0, f_star: Optional[float] = 0.0):
    """Write ``method,trial,t,f_value,gap,queries``; ``queries`` counts RK4 evaluations so far."""
    fx = np.asarray(f(traj.x), dtype=np.float64)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "trial", "t", "f_value", "gap", "queries"])
        for t, v, s in zip(traj.t, fx, traj.step):
            gap = "" if f_star is None else repr(float(v - f_star))
            w.writerow([method, trial, repr(float(t)), repr(float(v)), gap, int(4 * s)])
