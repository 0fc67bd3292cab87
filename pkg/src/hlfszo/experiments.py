"""Multi-trial runner, mean/3-sigma aggregates and convergence metrics.

Trial ``i`` of the ``m``-th method draws its directions from the stream
``derive(RngStream(base_seed), m, i)``, so results do not depend on how
methods are spread over workers.
"""
from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .config import ExperimentSpec, MethodSpec, ObjectiveSpec
from .core import HlfszoError, Trace
from .objectives import (BealeObjective, LogisticObjective, MatyasObjective,
                         RidgeObjective, gen_logistic, gen_ridge, solve_optimum)
from .optimizers import QUERY_COST, FilterParams, Method, SzoHyperparams, run_batch
from .sampling import RngStream, derive

__all__ = [
    "AggregateStats",
    "TrialResults",
    "build_objective",
    "run_trials",
    "aggregate",
    "iterations_to_threshold",
    "rate_slope",
    "variance_ratio",
    "spec_hash",
    "write_trace_csv",
    "write_aggregate_csv",
    "write_metadata",
    "TRACE_HEADER",
    "AGGREGATE_HEADER",
]

TRACE_HEADER = ["method", "trial", "iter", "f_value", "gap", "queries"]
AGGREGATE_HEADER = ["method", "iter", "mean_gap", "std_gap", "band_lo", "band_hi", "n_alive"]


def build_objective(obj: ObjectiveSpec, trial: Optional[int] = None):
    """Instantiate the objective and its certificate.

    With ``trial`` set the dataset comes from substream ``trial`` of the
    dataset seed instead of the seed itself.
    """
    rng = RngStream(obj.dataset_seed)
    if trial is not None:
        rng = rng.derive(trial)
    if obj.name == "logistic":
        x_star = np.broadcast_to(np.asarray(obj.x_star, dtype=np.float64), (obj.d,))
        o = LogisticObjective(gen_logistic(obj.d, obj.N, x_star, rng, noise=obj.noise))
    elif obj.name == "ridge":
        x_star = np.broadcast_to(np.asarray(obj.x_star, dtype=np.float64), (obj.d,))
        o = RidgeObjective(gen_ridge(obj.d, obj.N, x_star, obj.c, obj.noise_std, rng))
    elif obj.name == "beale":
        o = BealeObjective()
    else:
        o = MatyasObjective()
    return o, solve_optimum(o)


def _x0(spec: ExperimentSpec) -> np.ndarray:
    return np.broadcast_to(np.asarray(spec.x0, dtype=np.float64), (spec.objective.dim,)).copy()


def _params(m: MethodSpec):
    if m.method is Method.FILTER_FORM:
        return None, FilterParams(m.delta, m.omega_H, m.omega_L, m.r)
    return SzoHyperparams(eta=m.eta, r=m.r, alpha=m.alpha, beta=m.beta), None


class TrialResults(dict):
    """``label -> list of Trace`` plus per-label algorithmic query totals."""

    def __init__(self, *args, query_totals=None, certificate=None, wall_clock=0.0):
        super().__init__(*args)
        self.query_totals = dict(query_totals or {})
        self.certificate = certificate
        self.wall_clock = wall_clock


def _run_method(spec: ExperimentSpec, index: int):
    m = spec.methods[index]
    hp, fp = _params(m)
    base = RngStream(spec.base_seed)
    rngs = [derive(base, index, i) for i in range(spec.n_trials)]
    x0 = _x0(spec)
    kw = dict(hp=hp, fp=fp, record_stride=spec.record_stride, store_x=spec.store_x, init=spec.init)
    if not spec.dataset_per_trial:
        obj, cert = build_objective(spec.objective)
        oracle = obj.oracle()
        traces = run_batch(m.method, oracle, x0, spec.T, rngs, f_star=cert.f_star, **kw)
        return traces, oracle.query_count
    traces, total = [], 0
    for i, rng in enumerate(rngs):
        obj, cert = build_objective(spec.objective, trial=i)
        oracle = obj.oracle()
        traces += run_batch(m.method, oracle, x0, spec.T, [rng], f_star=cert.f_star, **kw)
        total += oracle.query_count
    return traces, total


def run_trials(spec: ExperimentSpec, workers: int = 1) -> TrialResults:
    """Run every method for ``n_trials`` trials; methods are spread over ``workers`` processes."""
    t0 = time.perf_counter()
    idx = range(len(spec.methods))
    if workers > 1 and len(spec.methods) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(spec.methods))) as pool:
            outs = list(pool.map(_run_method, [spec] * len(idx), idx))
    else:
        outs = [_run_method(spec, i) for i in idx]
    cert = None if spec.dataset_per_trial else build_objective(spec.objective)[1]
    res = TrialResults(((m.name, o[0]) for m, o in zip(spec.methods, outs)),
                       query_totals={m.name: o[1] for m, o in zip(spec.methods, outs)},
                       certificate=cert)
    res.wall_clock = time.perf_counter() - t0
    return res


@dataclass(frozen=True)
class AggregateStats:
    """Per-record statistics of ``gap = f(x_k) - f*`` over non-diverged trials."""

    iters: np.ndarray
    mean_gap: np.ndarray
    std_gap: np.ndarray
    band_lo: np.ndarray
    band_hi: np.ndarray
    n_alive: int
    diverged: int

    @property
    def final_mean_gap(self) -> float:
        return float(self.mean_gap[-1])

    @property
    def final_std_gap(self) -> float:
        return float(self.std_gap[-1])


def aggregate(traces: List[Trace], f_star: Optional[float] = None) -> AggregateStats:
    """Mean, sample standard deviation (ddof 1) and ``mean +- 3 std`` per record.

    ``f_star`` defaults to each trace's own certificate value.  Values are
    sorted across trials before reducing, so the result does not depend on
    trial order.
    """
    alive = [t for t in traces if not t.diverged]
    if not alive:
        raise HlfszoError(f"no surviving trials to aggregate ({len(traces)} diverged)")
    iters = np.asarray(alive[0].iters)
    gaps = np.empty((len(alive), iters.size))
    for j, t in enumerate(alive):
        if len(t.iters) != iters.size or np.any(np.asarray(t.iters) != iters):
            raise HlfszoError("traces do not share a recording grid")
        fs = t.f_star if f_star is None else f_star
        if fs is None:
            raise HlfszoError("aggregate needs f_star, from the argument or the traces")
        gaps[j] = np.asarray(t.f_values) - fs
    gaps = np.sort(gaps, axis=0)
    mean = gaps.mean(axis=0)
    std = gaps.std(axis=0, ddof=1) if len(alive) > 1 else np.zeros_like(mean)
    return AggregateStats(iters=iters, mean_gap=mean, std_gap=std, band_lo=mean - 3 * std,
                          band_hi=mean + 3 * std, n_alive=len(alive),
                          diverged=len(traces) - len(alive))


def iterations_to_threshold(agg: AggregateStats, eps: float) -> Optional[int]:
    """First recorded iteration whose mean gap is at most ``eps``, else ``None``."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps!r}")
    hit = np.flatnonzero(agg.mean_gap <= eps)
    return int(agg.iters[hit[0]]) if hit.size else None


def rate_slope(agg: AggregateStats, window) -> float:
    """Least-squares slope of ``log mean_gap`` against ``log iter`` for ``lo <= iter <= hi``."""
    lo, hi = window
    sel = (agg.iters >= max(lo, 1)) & (agg.iters <= hi)
    if sel.sum() < 2:
        raise ValueError(f"window {window} holds fewer than two positive iterations")
    g = agg.mean_gap[sel]
    if np.any(g <= 0):
        raise ValueError("mean gaps must be positive inside the window")
    return float(np.polyfit(np.log(agg.iters[sel]), np.log(g), 1)[0])


def variance_ratio(agg_a: AggregateStats, agg_b: AggregateStats, k: int) -> float:
    """``std_a(k) / std_b(k)`` at recorded iteration ``k``."""
    ia = np.flatnonzero(agg_a.iters == k)
    ib = np.flatnonzero(agg_b.iters == k)
    if not ia.size or not ib.size:
        raise ValueError(f"iteration {k} is not on both recording grids")
    sb = agg_b.std_gap[ib[0]]
    if sb == 0:
        raise ZeroDivisionError(f"std of the reference aggregate is zero at iteration {k}")
    return float(agg_a.std_gap[ia[0]] / sb)


def spec_hash(spec: ExperimentSpec) -> str:
    blob = json.dumps(spec.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _num(v) -> str:
    return repr(float(v))


def write_trace_csv(path, results: Dict[str, List[Trace]]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for label, traces in results.items():
            for i, t in enumerate(traces):
                for it, fv, q in zip(t.iters, t.f_values, t.queries):
                    gap = "" if t.f_star is None else _num(fv - t.f_star)
                    w.writerow([label, i, it, _num(fv), gap, q])


def write_aggregate_csv(path, aggs: Dict[str, AggregateStats]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AGGREGATE_HEADER)
        for label, a in aggs.items():
            for j, it in enumerate(a.iters):
                w.writerow([label, int(it), _num(a.mean_gap[j]), _num(a.std_gap[j]),
                            _num(a.band_lo[j]), _num(a.band_hi[j]), a.n_alive])


def write_metadata(path, spec: ExperimentSpec, results: TrialResults, aggs: Dict[str, AggregateStats],
                   extra: Optional[dict] = None):
    """Spec echo, seeds, version, timing, query totals and divergence counts as JSON."""
    meta = {
        "spec": spec.model_dump(mode="json"),
        "spec_hash": spec_hash(spec),
        "base_seed": spec.base_seed,
        "dataset_seed": spec.objective.dataset_seed,
        "version": __version__,
        "wall_clock_s": results.wall_clock,
        "f_star": None if results.certificate is None else results.certificate.f_star,
        "queries": results.query_totals,
        "queries_per_iter": {m.name: QUERY_COST[m.method] for m in spec.methods},
        "diverged": {k: a.diverged for k, a in aggs.items()},
        "n_alive": {k: a.n_alive for k, a in aggs.items()},
    }
    if extra:
        meta.update(extra)
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
