"""Named self-check suites with fixed seeds, shared by the CLI and the tests.

Each suite returns a report ``{"suite", "passed", "checks": [...]}`` where
every check carries its measured value and the limit it was held to.
"""
from __future__ import annotations

import numpy as np

from .es_sim import EsParams, average_dynamics, discretization_bridge, integrate_es
from .objectives import (BealeObjective, LogisticObjective, MatyasObjective, RidgeObjective,
                         gen_logistic, gen_ridge, quadratic_objective)
from .optimizers import SzoHyperparams, run_optimizer, theorem_bounds
from .sampling import RngStream, estimate_smoothed_gradient, estimate_smoothed_value, sample_ball, sample_sphere

__all__ = ["SUITES", "run_suite", "Report"]


class Report:
    def __init__(self, suite: str):
        self.suite = suite
        self.checks = []

    def check(self, name: str, ok, value=None, limit=None):
        self.checks.append({"name": name, "passed": bool(ok), "value": _plain(value), "limit": _plain(limit)})
        return bool(ok)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def as_dict(self) -> dict:
        return {"suite": self.suite, "passed": self.passed, "checks": self.checks}


def _plain(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def random_quadratic(rng: np.random.Generator, d: int, convex: bool = True):
    Q = rng.standard_normal((d, d))
    A = Q @ Q.T / d + (0.1 * np.eye(d) if convex else -0.5 * np.eye(d))
    return quadratic_objective(A, rng.standard_normal(d))


# -- sampling ----------------------------------------------------------------

def gradient_coverage(obj, points, radii, n: int, seed: int = 0):
    """Fraction of components whose ``n``-sample mean estimate lies within 3 stderr of the exact gradient."""
    hits = total = 0
    for j, (x, r) in enumerate(zip(points, radii)):
        g, se = estimate_smoothed_gradient(obj.oracle(), x, r, n, RngStream(seed).derive(j), with_stderr=True)
        exact = obj.smoothed_grad(x, r)
        hits += int(np.sum(np.abs(g - exact) <= 3 * se))
        total += g.size
    return hits / total


def smoothing_checks(obj, points, r: float, L: float, n: int, seed: int = 0):
    """Largest excess of ``|f_r - f|`` over ``L r^2 / 2 + 3 se`` and of ``f - f_r`` over ``3 se``."""
    over_gap, over_lower = -np.inf, -np.inf
    for j, x in enumerate(points):
        fr, se = estimate_smoothed_value(obj.oracle(), x, r, n, RngStream(seed).derive(j))
        f = float(obj.value(x))
        over_gap = max(over_gap, abs(fr - f) - (L * r * r / 2 + 3 * se))
        over_lower = max(over_lower, (f - fr) - 3 * se)
    return over_gap, over_lower


def suite_sampling(n: int = 200_000) -> Report:
    rep = Report("sampling")
    rng = RngStream(11)
    for d in (1, 2, 5, 50):
        u = sample_sphere(rng, d, 10_000)
        err = float(np.max(np.abs(np.linalg.norm(u, axis=-1) - 1.0)))
        rep.check(f"sphere norm d={d}", err <= 1e-12, err, 1e-12)
        rad = np.linalg.norm(sample_ball(rng, d, 10_000), axis=-1)
        # E|y| = d / (d + 1) for the uniform ball.
        z = abs(rad.mean() - d / (d + 1)) / (rad.std(ddof=1) / np.sqrt(rad.size))
        rep.check(f"ball radius mean d={d}", rad.max() <= 1.0 and z <= 4.0, float(z), 4.0)
    g = np.random.default_rng(5)
    obj = random_quadratic(g, 4)
    pts = g.standard_normal((5, 4))
    cov = gradient_coverage(obj, pts, g.uniform(0.05, 0.5, 5), n)
    rep.check("single-point estimate unbiased (3 se coverage)", cov >= 0.95 - 1e-12, cov, 0.95)
    errs = []
    for j, x in enumerate(pts):
        fr, se = estimate_smoothed_value(obj.oracle(), x, 0.3, n, RngStream(3).derive(j))
        errs.append(abs(fr - obj.smoothed_value(x, 0.3)) / se)
    rep.check("smoothed value matches closed form", max(errs) <= 4.0, max(errs), 4.0)
    return rep


# -- reductions ----------------------------------------------------------------

def reduction_identities(steps: int = 1000, seed: int = 3):
    """Pairs of trajectories that must coincide bitwise under a shared stream."""
    ds = gen_ridge(5, 50, np.full(5, 0.5), 0.1, np.sqrt(0.1), RngStream(seed))
    obj = RidgeObjective(ds)
    x0 = np.zeros(5)
    eta, r, a, b = 1e-4, 0.1, 0.9, 0.7

    def run(method, alpha, beta):
        tr = run_optimizer(method, obj.oracle(), x0, steps, SzoHyperparams(eta, r, alpha, beta),
                           rng=RngStream(seed + 100), store_x=True)
        return np.array(tr.xs)

    return {
        "hlf(alpha=0) == hf": (run("hlf_szo", 0.0, b), run("hf_szo", 0.0, b)),
        "hlf(beta=0) == lf": (run("hlf_szo", a, 0.0), run("lf_szo", a, 0.0)),
        "hf(beta=0) == vanilla": (run("hf_szo", 0.0, 0.0), run("vanilla_szo", 0.0, 0.0)),
        "lf(alpha=0) == vanilla": (run("lf_szo", 0.0, 0.0), run("vanilla_szo", 0.0, 0.0)),
    }


def suite_reductions(steps: int = 1000) -> Report:
    rep = Report("reductions")
    for name, (p, q) in reduction_identities(steps).items():
        same = p.shape == q.shape and np.array_equal(p, q)
        rep.check(f"{name} over {steps} steps", same, float(np.max(np.abs(p - q))) if p.shape == q.shape else None, 0.0)
    return rep


# -- filter bridge -------------------------------------------------------------

def random_filter_params(rng: np.random.Generator):
    """Feasible ``(delta, omega_H, omega_L)``: ``delta omega_L <= 1`` and ``delta omega_H <= 2``."""
    delta = 10 ** rng.uniform(-3, -1)
    omega_L = rng.uniform(0.05, 1.0) / delta
    omega_H = rng.uniform(0.0, 2.0) / delta
    return delta, omega_H, omega_L


def suite_filter_bridge(cases: int = 5, steps: int = 10_000) -> Report:
    rep = Report("filter_bridge")
    rng = np.random.default_rng(17)
    for _ in range(cases):
        delta, wH, wL = random_filter_params(rng)
        res = discretization_bridge(EsParams(a=0.1, omega=1.0, omega_H=wH, omega_L=wL, use_filters=True), delta,
                                    steps=steps)
        rep.check(f"delta={delta:.3g} omega_H={wH:.3g} omega_L={wL:.3g}",
                  res.max_rel_deviation <= 1e-12 and not res.diverged and res.steps == steps,
                  res.max_rel_deviation, 1e-12)
    res = discretization_bridge(EsParams(a=0.1, omega=1.0, omega_H=50.0, omega_L=100.0, use_filters=True), 0.01,
                                steps=steps)
    rep.check("delta*omega_L = 1 boundary", res.max_rel_deviation <= 1e-12 and not res.diverged,
              res.max_rel_deviation, 1e-12)
    return rep


# -- ES averaging --------------------------------------------------------------

def halving_ratio(f, fprime, x: float, a: float, omega: float = 1.0) -> float:
    e1 = abs(average_dynamics(f, x, a, omega) - fprime(x))
    e2 = abs(average_dynamics(f, x, a / 2, omega) - fprime(x))
    return e1 / e2


# f(x) = x^2 tracked against the averaged flow x' = -2x.  The ripple of the
# unfiltered loop scales like x^2 / (a w), so w must be large next to 1/a.
TRACK_PARAMS = dict(a=0.01, omega=1e4)


def tracking_error(horizon: float = 1.0, steps_per_period: int = 40, transient: float = 0.05) -> float:
    """Sup-norm of ``x(t) - exp(-2t)`` for ``t >= transient`` from ``x0 = 1``."""
    p = EsParams(**TRACK_PARAMS)
    tr = integrate_es(1.0, p, lambda t: t * t, horizon, p.period / steps_per_period)
    keep = tr.t >= transient
    return float(np.max(np.abs(tr.x[keep] - np.exp(-2.0 * tr.t[keep]))))


def rk4_orders(horizon: float = 0.05, steps_per_period: int = 80, halvings: int = 3):
    """Observed orders ``log2(|e_h - e_h/2| / |e_h/2 - e_h/4|)`` of the endpoint under dt halving."""
    p = EsParams(**TRACK_PARAMS)
    n0 = round(horizon / p.period * steps_per_period)
    ends = [integrate_es(1.0, p, lambda t: t * t, horizon, horizon / (n0 * 2 ** i)).x[-1]
            for i in range(halvings + 1)]
    d = np.abs(np.diff(ends))
    return [float(v) for v in np.log2(d[:-1] / d[1:])]


def suite_es_averaging() -> Report:
    rep = Report("es_averaging")
    rng = np.random.default_rng(23)
    worst = 0.0
    for _ in range(20):
        p, q, s, x = rng.uniform(-3, 3, 4)
        a = 10 ** rng.uniform(-3, 0)
        h = average_dynamics(lambda t: p * t * t + q * t + s, x, a, rng.uniform(1, 100))
        worst = max(worst, abs(h - (2 * p * x + q)))
    rep.check("quadratic exactness (20 random)", worst <= 1e-10, worst, 1e-10)
    c = abs(average_dynamics(lambda t: 3.0 + 0 * t, 1.0, 0.01, 100.0))
    rep.check("constant f averages to zero", c <= 1e-10, c, 1e-10)
    ratio = halving_ratio(lambda t: t ** 4, lambda t: 4 * t ** 3, 1.0, 0.01)
    rep.check("x^4 a-halving error ratio", 3.0 <= ratio <= 5.0, ratio, [3.0, 5.0])
    err = tracking_error()
    rep.check("RK4 tracks the averaged gradient flow", err <= 0.05, err, 0.05)
    orders = rk4_orders()
    rep.check("RK4 observed order", all(3.5 <= o <= 4.5 for o in orders), orders, [3.5, 4.5])
    return rep


# -- analytic gradients ----------------------------------------------------------

def fd_relative_error(obj, x, h: float = 1e-6) -> float:
    """``|fd - grad| / max(|grad|, 1)`` with a central difference of step ``h max(1, |x_i|)``."""
    g = obj.grad(x)
    fd = np.empty_like(g)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h * max(1.0, abs(x[i]))
        fd[i] = (obj.value(x + e) - obj.value(x - e)) / (2 * e[i])
    return float(np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1.0))


def gradient_objectives(seed: int = 0):
    g = np.random.default_rng(seed)
    return {
        "logistic": (LogisticObjective(gen_logistic(5, 40, np.full(5, 0.5), RngStream(seed))),
                     lambda: g.standard_normal(5)),
        "ridge": (RidgeObjective(gen_ridge(5, 40, np.full(5, 0.5), 0.1, np.sqrt(0.1), RngStream(seed))),
                  lambda: g.standard_normal(5)),
        "beale": (BealeObjective(), lambda: g.uniform(-4.5, 4.5, 2)),
        "matyas": (MatyasObjective(), lambda: g.uniform(-10, 10, 2)),
        "quadratic": (random_quadratic(g, 5, convex=False), lambda: g.standard_normal(5)),
    }


def suite_gradients(points: int = 100, tol: float = 1e-6) -> Report:
    rep = Report("gradients")
    for name, (obj, draw) in gradient_objectives().items():
        worst = max(fd_relative_error(obj, draw()) for _ in range(points))
        rep.check(f"{name} gradient vs central differences", worst <= tol, worst, tol)
    return rep


# -- theorem arithmetic ----------------------------------------------------------

def suite_theorem_arith() -> Report:
    rep = Report("theorem_arith")
    b = theorem_bounds(L=1, G=1, d=2, T=1000, alpha=0.0, beta=1.0)
    rep.check("worked example eta_max", b.eta_max == 0.002, b.eta_max, 0.002)
    rep.check("worked example r_min", b.r_min == 0.016, b.r_min, 0.016)
    rep.check("worked example r_max", b.r_max == 0.1, b.r_max, 0.1)
    rep.check("worked example feasible", b.feasible, b.feasible, True)
    inf = theorem_bounds(L=1, G=1, d=50, T=8, alpha=0.9, beta=1.0, eta=8e-4)
    rep.check("infeasible window reported (eta=8e-4)", not inf.feasible and np.isclose(inf.r_min, 1.6)
              and inf.r_max == 0.5, [inf.r_min, inf.r_max], "r_min=1.6 > r_max=0.5")
    betas = np.linspace(0.05, 1.95, 39)
    etas = [theorem_bounds(1, 1, 2, 1000, 0.0, bb).eta_max for bb in betas]
    rep.check("beta=1 maximizes eta_max", betas[int(np.argmax(etas))] == 1.0, float(betas[int(np.argmax(etas))]), 1.0)
    ok = True
    grid = [(L, d, T) for L in (0.5, 1.0, 4.0) for d in (1, 2, 10) for T in (1, 10, 1000)]
    for L, d, T in grid:
        base = theorem_bounds(L, 1.0, d, T, 0.3, 0.8)
        ok &= theorem_bounds(2 * L, 1.0, d, T, 0.3, 0.8).eta_max < base.eta_max
        ok &= theorem_bounds(L, 1.0, d + 1, T, 0.3, 0.8).eta_max < base.eta_max
        later = theorem_bounds(L, 1.0, d, 2 * T, 0.3, 0.8)
        ok &= later.eta_max < base.eta_max and later.r_max < base.r_max
    rep.check(f"monotone in L, d, T over {len(grid)} grid points", ok, ok, True)
    return rep


SUITES = {
    "sampling": suite_sampling,
    "reductions": suite_reductions,
    "filter_bridge": suite_filter_bridge,
    "es_averaging": suite_es_averaging,
    "gradients": suite_gradients,
    "theorem_arith": suite_theorem_arith,
}


def run_suite(name: str) -> dict:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return SUITES[name]().as_dict()
