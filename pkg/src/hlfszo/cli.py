"""Command-line front end: ``hlfszo {run, sweep-beta, verify, theorem}``.

Every flag of ``run`` and ``sweep-beta`` can also be set through an
environment variable with the ``HLFSZO_`` prefix (``HLFSZO_CONFIG``,
``HLFSZO_OUT``, ``HLFSZO_SEED``, ``HLFSZO_WORKERS``, ``HLFSZO_TRIALS``,
``HLFSZO_ITERS``); an explicit flag wins.

Exit status: 0 on success, 1 when a verify suite fails, 2 on a structured
error (bad config, infeasible request, failed run).
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import shutil
import sys
import warnings
from pathlib import Path

from pydantic import ValidationError

from .config import ConfigError, RunConfig, _format_errors, dump_config, parse_config
from .core import HlfszoError
from .experiments import (aggregate, run_trials, write_aggregate_csv, write_metadata,
                          write_trace_csv)
from .optimizers import Method, theorem_bounds
from .verify import SUITES, run_suite

ENV_PREFIX = "HLFSZO_"
DEFAULT_BETAS = "0.6,0.8,1.0,1.2,1.4"
_BETA_METHODS = (Method.HF, Method.HLF)


def _env(name, default=None):
    return os.environ.get(ENV_PREFIX + name, default)


class _Outputs:
    """Tracks files written into ``root`` so a failed command can remove them."""

    def __init__(self, root: Path):
        self.root = root
        self.created_root = not root.exists()
        self.files = []

    def path(self, *parts) -> Path:
        p = self.root.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(p)
        return p

    def discard(self):
        for p in self.files:
            p.unlink(missing_ok=True)
        if self.created_root:
            shutil.rmtree(self.root, ignore_errors=True)


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    data = cfg.model_dump()
    if args.seed is not None:
        data["base_seed"] = args.seed
    if args.trials is not None:
        data["n_trials"] = args.trials
    if args.iters is not None:
        data["T"] = args.iters
    if args.workers is not None:
        data["workers"] = args.workers
    try:
        return RunConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(f"invalid override: {_format_errors(err)}") from None


def _load(args) -> RunConfig:
    if not args.config:
        raise ConfigError("no config given (use --config or HLFSZO_CONFIG)")
    return _apply_overrides(parse_config(args.config), args)


def _out_dir(args, cfg: RunConfig) -> Path:
    return Path(args.out or cfg.out_dir or os.path.join("runs", cfg.case))


def _execute(cfg: RunConfig, out: _Outputs, sub=(), extra=None):
    """Run one config and write traces, aggregates and metadata under ``out.root / sub``."""
    spec = cfg.spec()
    res = run_trials(spec, workers=cfg.workers or os.cpu_count() or 1)
    aggs, dead = {}, []
    for label, traces in res.items():
        if all(t.diverged for t in traces):
            dead.append(label)
            print(f"warning: every trial of {label} diverged; no aggregate written for it", file=sys.stderr)
            continue
        aggs[label] = aggregate(traces)
    write_trace_csv(out.path(*sub, "trace.csv"), res)
    write_aggregate_csv(out.path(*sub, "aggregate.csv"), aggs)
    meta = {"case": cfg.case, "all_diverged": dead}
    meta.update(extra or {})
    write_metadata(out.path(*sub, "metadata.json"), spec, res, aggs, extra=meta)
    out.path(*sub, "config.json").write_text(dump_config(cfg))
    return aggs, dead


def cmd_run(args) -> int:
    cfg = _load(args)
    out = _Outputs(_out_dir(args, cfg))
    try:
        aggs, _ = _execute(cfg, out)
    except BaseException:
        out.discard()
        raise
    for label, a in aggs.items():
        print(f"{label}: final mean_gap={a.final_mean_gap:.6g} std_gap={a.final_std_gap:.6g} "
              f"alive={a.n_alive} diverged={a.diverged}")
    print(f"wrote {out.root}")
    return 0


def _parse_betas(text: str):
    try:
        betas = [float(b) for b in text.split(",") if b.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse beta list {text!r}") from None
    if not betas:
        raise ConfigError("empty beta list")
    for b in betas:
        if not b >= 0:
            raise ConfigError(f"beta must be non-negative, got {b}")
        if not 0 < b < 2:
            warnings.warn(f"beta={b:g} lies outside (0, 2) where the convergence theorem applies; running anyway",
                          stacklevel=2)
    return betas


def _with_beta(cfg: RunConfig, beta: float) -> RunConfig:
    data = cfg.model_dump()
    for m in data["methods"]:
        if Method(m["method"]) in _BETA_METHODS:
            m["beta"] = beta
    return RunConfig.model_validate(data)


def cmd_sweep_beta(args) -> int:
    cfg = _load(args)
    if not any(m.method in _BETA_METHODS for m in cfg.methods):
        raise ConfigError("sweep-beta needs at least one hf_szo or hlf_szo method in the config")
    betas = _parse_betas(args.betas)
    out = _Outputs(_out_dir(args, cfg))
    rows = []
    try:
        for b in betas:
            sub = () if len(betas) == 1 else (f"beta_{b:g}",)
            aggs, dead = _execute(_with_beta(cfg, b), out, sub, extra={"beta": b})
            for label, a in aggs.items():
                rows.append([repr(b), label, int(a.iters[-1]), repr(a.final_mean_gap),
                             repr(a.final_std_gap), a.n_alive])
            rows += [[repr(b), label, "", "", "", 0] for label in dead]
        with open(out.path("summary.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["beta", "method", "iter", "final_mean_gap", "final_std_gap", "n_alive"])
            w.writerows(rows)
    except BaseException:
        out.discard()
        raise
    for r in rows:
        gap = f"{float(r[3]):.6g}" if r[3] else "all trials diverged"
        print(f"beta={r[0]} {r[1]}: final mean_gap={gap}")
    print(f"wrote {out.root}")
    return 0


def cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    reports = [run_suite(n) for n in names]
    print(json.dumps(reports if len(reports) > 1 else reports[0], indent=2))
    return 0 if all(r["passed"] for r in reports) else 1


def _monotone_report(a) -> dict:
    def eta(L, d, T):
        return theorem_bounds(L, a.G, d, T, a.alpha, a.beta, a.case).eta_max

    def rmax(T):
        return theorem_bounds(a.L, a.G, a.d, T, a.alpha, a.beta, a.case).r_max

    Ls = [a.L * s for s in (0.5, 1, 2, 4)]
    ds = [max(1, a.d + s) for s in (0, 1, 2, 5)]
    Ts = [a.T * s for s in (1, 2, 4, 8)]
    dec = lambda v: all(x > y for x, y in zip(v, v[1:]))
    return {
        "eta_max_decreasing_in_L": dec([eta(L, a.d, a.T) for L in Ls]),
        "eta_max_decreasing_in_d": dec([eta(a.L, d, a.T) for d in ds]),
        "eta_max_decreasing_in_T": dec([eta(a.L, a.d, T) for T in Ts]),
        "r_max_decreasing_in_T": dec([rmax(T) for T in Ts]),
    }


def cmd_theorem(args) -> int:
    b = theorem_bounds(args.L, args.G, args.d, args.T, args.alpha, args.beta, args.case,
                       constant=args.constant, eta=args.eta)
    rep = b.report()
    rep["monotone"] = _monotone_report(args)
    print(json.dumps(rep, indent=2))
    return 0


def _run_parser(sub, name, help_):
    p = sub.add_parser(name, help=help_)
    p.add_argument("--config", default=_env("CONFIG"), help="config file or canned case name (case_1_1a, ...)")
    p.add_argument("--out", default=_env("OUT"), help="output directory (default runs/<case>)")
    p.add_argument("--seed", type=int, default=_env("SEED"), help="override base_seed")
    p.add_argument("--workers", type=int, default=_env("WORKERS"), help="worker processes (default: CPU count)")
    p.add_argument("--trials", type=int, default=_env("TRIALS"), help="override n_trials")
    p.add_argument("--iters", type=int, default=_env("ITERS"), help="override T")
    return p


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hlfszo", description="Filtered single-point zeroth-order optimization.")
    sub = ap.add_subparsers(dest="command", required=True)
    _run_parser(sub, "run", "run all methods of a config and write CSV output").set_defaults(func=cmd_run)
    p = _run_parser(sub, "sweep-beta", "rerun a config for several high-pass coefficients")
    p.add_argument("--betas", default=_env("BETAS", DEFAULT_BETAS), help="comma-separated beta list")
    p.set_defaults(func=cmd_sweep_beta)
    p = sub.add_parser("verify", help="run a named self-check suite")
    p.add_argument("suite", choices=list(SUITES) + ["all"])
    p.set_defaults(func=cmd_verify)
    p = sub.add_parser("theorem", help="step-size and radius conditions of the convergence theorems")
    p.add_argument("--L", type=float, required=True)
    p.add_argument("--G", type=float, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--case", choices=["convex", "nonconvex"], default="convex")
    p.add_argument("--constant", type=float, default=None,
                   help="|x_1 - x*|^2 (convex) or f(x_1) - f* (nonconvex)")
    p.add_argument("--eta", type=float, default=None, help="evaluate at this step size instead of eta_max")
    p.set_defaults(func=cmd_theorem)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (HlfszoError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
