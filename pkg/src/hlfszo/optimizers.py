"""Zeroth-order update rules as explicit single-step state machines.

Every stepper takes a state, a counted oracle, hyperparameters and either a
random stream or a forced direction ``u``.  States may carry leading batch
axes, in which case one call advances a whole stack of independent trials;
the arithmetic per trial is identical to the unbatched call.

Query cost per step is 1 for the single-point family (``vanilla_szo``,
``hf_szo``, ``lf_szo``, ``hlf_szo``, ``filter_form``) and 2 for the two-point
family.  With ``init="appendix"`` the first high-pass step spends one extra
query on a symmetric difference.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .core import DimensionError, HlfszoError, ObjectiveOracle, Trace, as_vector
from .sampling import RngStream, sample_sphere

__all__ = [
    "Method",
    "QUERY_COST",
    "DIVERGENCE_THRESHOLD",
    "SzoHyperparams",
    "SzoState",
    "FilterState",
    "FilterParams",
    "FeasibilityError",
    "init_state",
    "init_filter_state",
    "step_vanilla",
    "step_two_point_symmetric",
    "step_two_point_forward",
    "step_hf",
    "step_lf",
    "step_hlf",
    "step_filter_form",
    "params_from_discretization",
    "run_batch",
    "run_optimizer",
    "SecondMomentLogger",
    "BoundCase",
    "TheoremBounds",
    "theorem_bounds",
]

DIVERGENCE_THRESHOLD = 1e12


class Method(str, enum.Enum):
    VANILLA = "vanilla_szo"
    TWO_POINT_SYM = "two_point_sym"
    TWO_POINT_FWD = "two_point_fwd"
    HF = "hf_szo"
    LF = "lf_szo"
    HLF = "hlf_szo"
    FILTER_FORM = "filter_form"


QUERY_COST = {
    Method.VANILLA: 1,
    Method.TWO_POINT_SYM: 2,
    Method.TWO_POINT_FWD: 2,
    Method.HF: 1,
    Method.LF: 1,
    Method.HLF: 1,
    Method.FILTER_FORM: 1,
}

_HIGH_PASS = (Method.HF, Method.HLF, Method.FILTER_FORM)

# How the high-pass state is started (see _high_pass).
INITS = ("main", "appendix", "probe")


class FeasibilityError(HlfszoError, ValueError):
    pass


@dataclass(frozen=True)
class SzoHyperparams:
    """Step size ``eta``, smoothing radius ``r``, momentum ``alpha``, high-pass ``beta``."""

    eta: float
    r: float
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        for name in ("eta", "r", "alpha", "beta"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite, got {getattr(self, name)!r}")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta!r}")
        if not self.r > 0:
            raise ValueError(f"r must be positive, got {self.r!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha!r}")
        if not self.beta >= 0:
            raise ValueError(f"beta must be non-negative, got {self.beta!r}")


@dataclass(frozen=True)
class FilterParams:
    """Discretization step and filter cutoffs of the ES-style recursion."""

    delta: float
    omega_H: float
    omega_L: float
    r: float

    def __post_init__(self):
        if not self.delta > 0:
            raise FeasibilityError(f"delta must be positive, got {self.delta!r}")
        if not self.omega_H >= 0:
            raise FeasibilityError(f"omega_H must be non-negative, got {self.omega_H!r}")
        if not self.omega_L > 0:
            raise FeasibilityError(f"omega_L must be positive, got {self.omega_L!r}")
        if self.delta * self.omega_L > 1:
            raise FeasibilityError(
                f"delta * omega_L = {self.delta * self.omega_L:g} > 1 gives a negative momentum coefficient")
        if not self.r > 0:
            raise ValueError(f"r must be positive, got {self.r!r}")


@dataclass(frozen=True)
class SzoState:
    """Iterate pair, filtered residual ``z_{k-1}`` and last perturbed query ``f_prev``.

    At ``k = 0`` both ``z_prev`` and ``f_prev`` are zero, so the first
    high-pass update yields ``z_0 = f(x_0 + r u_0)`` exactly.
    """

    x: np.ndarray
    x_prev: np.ndarray
    z_prev: np.ndarray
    f_prev: np.ndarray
    k: int = 0


@dataclass(frozen=True)
class FilterState:
    x: np.ndarray
    y: np.ndarray
    z_prev: np.ndarray
    f_prev: np.ndarray
    k: int = 0


def init_state(x0) -> SzoState:
    x0 = np.array(x0, dtype=np.float64)
    zero = np.zeros(x0.shape[:-1])
    return SzoState(x=x0, x_prev=x0.copy(), z_prev=zero, f_prev=zero.copy(), k=0)


def init_filter_state(x0) -> FilterState:
    x0 = np.array(x0, dtype=np.float64)
    zero = np.zeros(x0.shape[:-1])
    return FilterState(x=x0, y=np.zeros_like(x0), z_prev=zero, f_prev=zero.copy(), k=0)


def _direction(x, rng, u):
    if u is not None:
        u = np.asarray(u, dtype=np.float64)
        if u.shape != x.shape:
            raise DimensionError(f"forced direction has shape {u.shape}, iterate has {x.shape}")
        return u
    if rng is None:
        raise ValueError("either rng or a forced direction u is required")
    return sample_sphere(rng, x.shape[-1], x.shape[:-1] or None)


def _query(oracle, x):
    return np.asarray(oracle.evaluate(x), dtype=np.float64)


def step_vanilla(state: SzoState, oracle: ObjectiveOracle, hp: SzoHyperparams,
                 rng: Optional[RngStream] = None, u=None) -> SzoState:
    x = state.x
    d = x.shape[-1]
    u = _direction(x, rng, u)
    f = _query(oracle, x + hp.r * u)
    g = (d / hp.r) * f[..., None] * u
    return SzoState(x=x - hp.eta * g, x_prev=x, z_prev=f, f_prev=f, k=state.k + 1)


def step_two_point_symmetric(state: SzoState, oracle: ObjectiveOracle, hp: SzoHyperparams,
                             rng: Optional[RngStream] = None, u=None) -> SzoState:
    x = state.x
    d = x.shape[-1]
    u = _direction(x, rng, u)
    f_plus = _query(oracle, x + hp.r * u)
    f_minus = _query(oracle, x - hp.r * u)
    g = (d / (2 * hp.r)) * (f_plus - f_minus)[..., None] * u
    return SzoState(x=x - hp.eta * g, x_prev=x, z_prev=f_plus - f_minus, f_prev=f_plus, k=state.k + 1)


def step_two_point_forward(state: SzoState, oracle: ObjectiveOracle, hp: SzoHyperparams,
                           rng: Optional[RngStream] = None, u=None) -> SzoState:
    x = state.x
    d = x.shape[-1]
    u = _direction(x, rng, u)
    f_plus = _query(oracle, x + hp.r * u)
    f_zero = _query(oracle, x)
    g = (d / hp.r) * (f_plus - f_zero)[..., None] * u
    return SzoState(x=x - hp.eta * g, x_prev=x, z_prev=f_plus - f_zero, f_prev=f_plus, k=state.k + 1)


def _high_pass(state, oracle, x, u, r, beta, init):
    """Filtered residual ``z_k = (1 - beta) z_{k-1} + f_k - f_{k-1}`` and ``f_k``.

    Evaluated as ``((1 - beta) z_{k-1} - f_{k-1}) + f_k`` so that with
    ``beta = 0`` and ``z_{k-1} == f_{k-1}`` the result is ``f_k`` bit for bit.
    """
    f = _query(oracle, x + r * u)
    if state.k == 0 and init == "probe":
        return f, f
    if state.k == 0 and init == "appendix":
        f_minus = _query(oracle, x - r * u)
        return 0.5 * (f - f_minus), f
    return ((1.0 - beta) * state.z_prev - state.f_prev) + f, f


def step_hf(state: SzoState, oracle: ObjectiveOracle, hp: SzoHyperparams,
            rng: Optional[RngStream] = None, u=None, init: str = "main") -> SzoState:
    """High-pass filtered step; ``hp.alpha`` is ignored."""
    x = state.x
    d = x.shape[-1]
    u = _direction(x, rng, u)
    z, f = _high_pass(state, oracle, x, u, hp.r, hp.beta, init)
    if state.k == 0 and init == "probe":
        return SzoState(x=x, x_prev=x, z_prev=z, f_prev=f, k=1)
    g = (d / hp.r) * z[..., None] * u
    return SzoState(x=x - hp.eta * g, x_prev=x, z_prev=z, f_prev=f, k=state.k + 1)


def step_lf(state: SzoState, oracle: ObjectiveOracle, hp: SzoHyperparams,
            rng: Optional[RngStream] = None, u=None) -> SzoState:
    """Low-pass (heavy-ball) step; ``hp.beta`` is ignored."""
    x = state.x
    d = x.shape[-1]
    u = _direction(x, rng, u)
    f = _query(oracle, x + hp.r * u)
    g = (d / hp.r) * f[..., None] * u
    x_new = x - hp.eta * g + hp.alpha * (x - state.x_prev)
    return SzoState(x=x_new, x_prev=x, z_prev=f, f_prev=f, k=state.k + 1)


def step_hlf(state: SzoState, oracle: ObjectiveOracle, hp: SzoHyperparams,
             rng: Optional[RngStream] = None, u=None, init: str = "main") -> SzoState:
    x = state.x
    d = x.shape[-1]
    u = _direction(x, rng, u)
    z, f = _high_pass(state, oracle, x, u, hp.r, hp.beta, init)
    if state.k == 0 and init == "probe":
        return SzoState(x=x, x_prev=x, z_prev=z, f_prev=f, k=1)
    g = (d / hp.r) * z[..., None] * u
    x_new = x - hp.eta * g + hp.alpha * (x - state.x_prev)
    return SzoState(x=x_new, x_prev=x, z_prev=z, f_prev=f, k=state.k + 1)


def params_from_discretization(delta: float, omega_H: float, omega_L: float, r: float = 1.0) -> SzoHyperparams:
    """Map a time step and filter cutoffs to ``beta = delta*omega_H``,
    ``eta = delta**2 * omega_L`` and ``alpha = 1 - delta*omega_L``.

    ``r`` is passed through unchanged.
    """
    fp = FilterParams(delta, omega_H, omega_L, r)
    return SzoHyperparams(eta=fp.delta ** 2 * fp.omega_L, r=fp.r,
                          alpha=1.0 - fp.delta * fp.omega_L, beta=fp.delta * fp.omega_H)


def step_filter_form(state: FilterState, oracle: ObjectiveOracle, fp: FilterParams,
                     rng: Optional[RngStream] = None, u=None, init: str = "main") -> FilterState:
    """Explicit Euler discretization of high-pass, low-pass and integrator.

    ``z_k = (1 - delta w_H) z_{k-1} + f_k - f_{k-1}``,
    ``y_{k+1} = (1 - delta w_L) y_k + delta w_L g_k`` with ``g_k = (d/r) z_k u_k``,
    ``x_{k+1} = x_k - delta y_{k+1}``.
    """
    x = state.x
    d = x.shape[-1]
    u = _direction(x, rng, u)
    z, f = _high_pass(state, oracle, x, u, fp.r, fp.delta * fp.omega_H, init)
    if state.k == 0 and init == "probe":
        return FilterState(x=x, y=state.y, z_prev=z, f_prev=f, k=1)
    g = (d / fp.r) * z[..., None] * u
    lam = fp.delta * fp.omega_L
    y = (1.0 - lam) * state.y + lam * g
    return FilterState(x=x - fp.delta * y, y=y, z_prev=z, f_prev=f, k=state.k + 1)


_STEPPERS = {
    Method.VANILLA: step_vanilla,
    Method.TWO_POINT_SYM: step_two_point_symmetric,
    Method.TWO_POINT_FWD: step_two_point_forward,
    Method.HF: step_hf,
    Method.LF: step_lf,
    Method.HLF: step_hlf,
}


class SecondMomentLogger:
    """Per-iteration averages over live trials of ``z_k**2`` and ``||x_{k+1} - x_k||**2``.

    Inspection aid only; pass as ``callback`` to :func:`run_batch`.
    """

    def __init__(self):
        self.iters = []
        self.z_sq = []
        self.disp_sq = []

    def __call__(self, k, state):
        z = np.asarray(state.z_prev)
        self.iters.append(k)
        self.z_sq.append(float(np.mean(z * z)))
        if isinstance(state, SzoState):
            disp = state.x - state.x_prev
            self.disp_sq.append(float(np.mean(np.sum(disp * disp, axis=-1))))
        else:
            self.disp_sq.append(float("nan"))


def _make_step(method, hp, fp, init):
    method = Method(method)
    if method is Method.FILTER_FORM:
        if fp is None:
            raise ValueError("filter_form needs FilterParams")
        return lambda s, o, u: step_filter_form(s, o, fp, u=u, init=init)
    if hp is None:
        raise ValueError(f"{method.value} needs SzoHyperparams")
    fn = _STEPPERS[method]
    if method in (Method.HF, Method.HLF):
        return lambda s, o, u: fn(s, o, hp, u=u, init=init)
    return lambda s, o, u: fn(s, o, hp, u=u)


def _take(state, keep):
    kw = {}
    for name in state.__dataclass_fields__:
        v = getattr(state, name)
        kw[name] = v if name == "k" else v[keep]
    return replace(state, **kw)


def _bad_rows(values, threshold):
    values = np.asarray(values)
    with np.errstate(invalid="ignore"):
        return ~np.isfinite(values) | (np.abs(values) > threshold)


def run_batch(method, oracle: ObjectiveOracle, x0, T: int, rngs: Sequence[RngStream],
              hp: Optional[SzoHyperparams] = None, fp: Optional[FilterParams] = None,
              record_stride: int = 1, store_x: Optional[bool] = None, init: str = "main",
              chunk: int = 1024, callback: Optional[Callable] = None,
              f_star: Optional[float] = None) -> list:
    """Run ``len(rngs)`` independent trials of one method in lock step.

    Trial ``i`` draws its directions only from ``rngs[i]``, so its trajectory
    does not depend on the other trials.  ``f(x_k)`` is recorded at ``k = 0``,
    every ``record_stride`` iterations and at ``k = T`` using bookkeeping
    evaluations.  A trial whose queried value or recorded value is
    non-finite or exceeds the divergence threshold is dropped from the batch
    and its trace is truncated and flagged ``diverged``.
    """
    method = Method(method)
    if T < 0:
        raise ValueError(f"T must be non-negative, got {T}")
    if record_stride < 1:
        raise ValueError(f"record_stride must be >= 1, got {record_stride}")
    if init not in INITS:
        raise ValueError(f"init must be one of {INITS}, got {init!r}")
    x0 = as_vector(x0, oracle.dim)
    if store_x is None:
        store_x = x0.size <= 10
    step = _make_step(method, hp, fp, init)
    cost = QUERY_COST[method]
    extra = 1 if (init == "appendix" and method in _HIGH_PASS) else 0

    strict, oracle.strict = oracle.strict, False
    try:
        return _run(step, oracle, x0, T, rngs, method, cost, extra, record_stride, store_x,
                    chunk, callback, f_star)
    finally:
        oracle.strict = strict


def _run(step, oracle, x0, T, rngs, method, cost, extra, record_stride, store_x, chunk, callback, f_star):
    n = len(rngs)
    d = x0.size
    grid = list(range(0, T + 1, record_stride))
    if grid[-1] != T:
        grid.append(T)
    R = len(grid)
    rec_f = np.empty((n, R))
    rec_x = np.empty((n, R, d)) if store_x else None
    n_rec = np.zeros(n, dtype=np.int64)
    steps = np.zeros(n, dtype=np.int64)
    diverged = np.zeros(n, dtype=bool)

    X0 = np.broadcast_to(x0, (n, d)).copy()
    state = init_filter_state(X0) if method is Method.FILTER_FORM else init_state(X0)
    ids = np.arange(n)

    f0 = np.asarray(oracle.evaluate(X0, bookkeeping=True))
    rec_f[:, 0] = f0
    if store_x:
        rec_x[:, 0] = X0
    n_rec[:] = 1
    bad = _bad_rows(f0, DIVERGENCE_THRESHOLD)
    if bad.any():
        diverged[bad] = True
        state, ids = _take(state, ~bad), ids[~bad]

    U = None
    r = 1
    for k in range(T):
        if ids.size == 0:
            break
        j = k % chunk
        if j == 0:
            m = min(chunk, T - k)
            U = np.stack([sample_sphere(rngs[i], d, m) for i in ids])
        state = step(state, oracle, U[:, j])
        steps[ids] = k + 1
        if callback is not None:
            callback(k, state)
        bad = _bad_rows(state.f_prev, DIVERGENCE_THRESHOLD) | ~np.all(np.isfinite(state.x), axis=-1)
        if k + 1 == grid[r]:
            fx = np.asarray(oracle.evaluate(state.x, bookkeeping=True))
            bad |= _bad_rows(fx, DIVERGENCE_THRESHOLD)
            good = ids[~bad]
            rec_f[good, r] = fx[~bad]
            if store_x:
                rec_x[good, r] = state.x[~bad]
            n_rec[good] += 1
            r += 1
        if bad.any():
            diverged[ids[bad]] = True
            keep = ~bad
            state, ids, U = _take(state, keep), ids[keep], U[keep]

    queries = [0] + [it * cost + extra for it in grid[1:]]
    traces = []
    for i in range(n):
        m = int(n_rec[i])
        traces.append(Trace(iters=grid[:m], f_values=rec_f[i, :m].tolist(), queries=queries[:m],
                            xs=list(rec_x[i, :m]) if store_x else [], store_x=store_x,
                            diverged=bool(diverged[i]), f_star=f_star, steps=int(steps[i])))
    return traces


def run_optimizer(method, oracle: ObjectiveOracle, x0, T: int, hp: Optional[SzoHyperparams] = None,
                  rng: Optional[RngStream] = None, fp: Optional[FilterParams] = None,
                  record_stride: int = 1, store_x: Optional[bool] = None, init: str = "main",
                  f_star: Optional[float] = None) -> Trace:
    """Single-trial convenience wrapper around :func:`run_batch`.

    The returned trace carries ``trace.diverged``.
    """
    if rng is None:
        raise ValueError("run_optimizer needs an RngStream")
    return run_batch(method, oracle, x0, T, [rng], hp=hp, fp=fp, record_stride=record_stride,
                     store_x=store_x, init=init, f_star=f_star)[0]


class BoundCase(str, enum.Enum):
    CONVEX = "convex"
    NONCONVEX = "nonconvex"


@dataclass(frozen=True)
class TheoremBounds:
    """Step-size and radius conditions of the HLF convergence theorems.

    ``eta`` is the step size the radius window and the bound were evaluated
    at (``eta_max`` unless one was supplied).  ``bound_leading_term`` is
    ``None`` when no distance/gap constant was given.
    """

    eta_max: float
    r_min: float
    r_max: float
    bound_leading_term: Optional[float]
    case: BoundCase
    eta: float
    feasible: bool
    reasons: tuple = ()

    def report(self) -> dict:
        return {
            "case": self.case.value,
            "eta_max": self.eta_max,
            "eta": self.eta,
            "r_min": self.r_min,
            "r_max": self.r_max,
            "bound_leading_term": self.bound_leading_term,
            "feasible": self.feasible,
            "reasons": list(self.reasons),
        }


def theorem_bounds(L: float, G: float, d: int, T: int, alpha: float, beta: float,
                   case="convex", constant: Optional[float] = None,
                   eta: Optional[float] = None) -> TheoremBounds:
    """Evaluate the theorem conditions for HLF-SZO.

    With ``bt = 1 - |1 - beta|``::

        eta_max = (1 - alpha) bt**2 / (25 L d T**(1/3))
        r_min   = 4 eta d G / (bt (1 - alpha))
        r_max   = G / (L T**(1/3))

    ``constant`` is ``||x_1 - x*||**2`` in the convex case and
    ``f(x_1) - f*`` in the nonconvex case.  The bound reported is
    ``3(1-alpha) D / (4 eta T) + 3 G**2 / (4 L T**(2/3))`` (convex) or
    ``4(1-alpha) D / (eta T) + 8 G**2 / T**(2/3)`` (nonconvex), which at
    ``eta = eta_max`` equals the closed-form ``d / T**(2/3)`` leading term.
    An infeasible window is reported in ``reasons``, never clamped.
    """
    case = BoundCase(case)
    if not (L > 0 and G > 0):
        raise ValueError(f"L and G must be positive, got L={L!r}, G={G!r}")
    if d < 1 or T < 1:
        raise ValueError(f"d and T must be >= 1, got d={d!r}, T={T!r}")
    if not 0.0 <= alpha < 1.0:
        raise FeasibilityError(f"alpha must lie in [0, 1) for the theorem, got {alpha!r}")
    if not 0.0 < beta < 2.0:
        raise FeasibilityError(f"beta must lie in (0, 2) for the theorem, got {beta!r}")
    if constant is not None and constant < 0:
        raise ValueError(f"distance/gap constant must be non-negative, got {constant!r}")
    bt = 1.0 - abs(1.0 - beta)
    t3 = float(np.cbrt(T))
    eta_max = (1.0 - alpha) * bt * bt / (25.0 * L * d * t3)
    if eta is None:
        eta = eta_max
    elif not eta > 0:
        raise ValueError(f"eta must be positive, got {eta!r}")
    r_min = 4.0 * eta * d * G / (bt * (1.0 - alpha))
    r_max = G / (L * t3)

    reasons = []
    if eta > eta_max:
        reasons.append(f"eta={eta:g} exceeds eta_max={eta_max:g}")
    if r_min > r_max:
        reasons.append(f"radius window empty: r_min={r_min:g} > r_max={r_max:g}")

    bound = None
    if constant is not None:
        if case is BoundCase.CONVEX:
            bound = 3.0 * (1.0 - alpha) * constant / (4.0 * eta * T) + 3.0 * G * G / (4.0 * L * t3 * t3)
        else:
            bound = 4.0 * (1.0 - alpha) * constant / (eta * T) + 8.0 * G * G / (t3 * t3)
    return TheoremBounds(eta_max=eta_max, r_min=r_min, r_max=r_max, bound_leading_term=bound,
                         case=case, eta=float(eta), feasible=not reasons, reasons=tuple(reasons))
