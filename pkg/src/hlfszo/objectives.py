"""Benchmark objectives, dataset generators and optimum certificates.

All value and gradient functions are vectorized: ``x`` may have shape ``(d,)``
or ``(..., d)``.  Objective objects are immutable and picklable so one
instance can be shared by every trial; call :meth:`oracle` to get a fresh
counted oracle per trial.
"""
from __future__ import annotations

import enum
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg

from .core import DimensionError, GradientOracle, HlfszoError, as_vector
from .sampling import RngStream

__all__ = [
    "LogisticDataset",
    "RidgeDataset",
    "CertificateMethod",
    "OptimumCertificate",
    "SolverError",
    "gen_logistic",
    "gen_ridge",
    "logistic_value",
    "logistic_grad",
    "ridge_value",
    "ridge_grad",
    "ridge_optimum",
    "beale_value",
    "beale_grad",
    "matyas_value",
    "matyas_grad",
    "LogisticObjective",
    "RidgeObjective",
    "BealeObjective",
    "MatyasObjective",
    "QuadraticObjective",
    "quadratic_objective",
    "solve_optimum",
    "save_dataset",
    "load_dataset",
]

# Condition number above which the ridge normal equations are rejected.
_MAX_COND = 1e14


class SolverError(HlfszoError, RuntimeError):
    def __init__(self, message, residual_grad_norm=None):
        super().__init__(message)
        self.residual_grad_norm = residual_grad_norm


@dataclass(frozen=True, eq=False)
class LogisticDataset:
    A: np.ndarray
    y: np.ndarray
    x_star: Optional[np.ndarray] = None
    seed: Optional[int] = None
    noise: float = 0.5

    def __post_init__(self):
        if self.A.ndim != 2 or self.y.shape != (self.A.shape[0],):
            raise DimensionError(f"A has shape {self.A.shape} but y has shape {self.y.shape}")
        if not np.all(np.abs(self.y) == 1.0):
            raise ValueError("logistic labels must be -1 or +1")

    @property
    def N(self):
        return self.A.shape[0]

    @property
    def d(self):
        return self.A.shape[1]


@dataclass(frozen=True, eq=False)
class RidgeDataset:
    H: np.ndarray
    b: np.ndarray
    c: float = 0.1
    x_star: Optional[np.ndarray] = None
    seed: Optional[int] = None
    noise_std: float = 0.0

    def __post_init__(self):
        if self.H.ndim != 2 or self.b.shape != (self.H.shape[0],):
            raise DimensionError(f"H has shape {self.H.shape} but b has shape {self.b.shape}")
        if not self.c > 0:
            raise ValueError(f"ridge regularization c must be positive, got {self.c}")

    @property
    def N(self):
        return self.H.shape[0]

    @property
    def d(self):
        return self.H.shape[1]


class CertificateMethod(str, enum.Enum):
    CLOSED_FORM = "closed_form"
    DETERMINISTIC_DESCENT = "deterministic_descent"
    KNOWN_CONSTANT = "known_constant"


@dataclass(frozen=True)
class OptimumCertificate:
    x_star: np.ndarray
    f_star: float
    method: CertificateMethod
    residual_grad_norm: float


# -- generators ---------------------------------------------------------------

def gen_logistic(d: int, N: int, x_star, rng: RngStream, noise: float = 0.5) -> LogisticDataset:
    """Draw ``A_ij ~ U[-1, 1]`` then ``eps_i ~ U[-noise, noise]``; ``y = sign(A x* + eps)``.

    ``sign(0)`` is taken as ``+1``.
    """
    if d < 1 or N < 1:
        raise DimensionError(f"need d, N >= 1, got d={d}, N={N}")
    x_star = as_vector(x_star, d)
    A = rng.uniform(-1.0, 1.0, (N, d))
    eps = rng.uniform(-noise, noise, N)
    y = np.where(A @ x_star + eps >= 0.0, 1.0, -1.0)
    return LogisticDataset(A=A, y=y, x_star=x_star, seed=getattr(rng, "seed", None), noise=noise)


def gen_ridge(d: int, N: int, x_star, c: float, noise_std: float, rng: RngStream) -> RidgeDataset:
    """Draw ``H_ij ~ N(0, 1)`` then ``eps_i ~ N(0, noise_std**2)``; ``b = H x* + eps``."""
    if d < 1 or N < 1:
        raise DimensionError(f"need d, N >= 1, got d={d}, N={N}")
    if not c > 0:
        raise ValueError(f"ridge regularization c must be positive, got {c}")
    if noise_std < 0:
        raise ValueError(f"noise_std must be non-negative, got {noise_std}")
    x_star = as_vector(x_star, d)
    H = rng.standard_normal((N, d))
    eps = rng.normal(0.0, noise_std, N)
    b = H @ x_star + eps
    return RidgeDataset(H=H, b=b, c=float(c), x_star=x_star, seed=getattr(rng, "seed", None),
                        noise_std=float(noise_std))


# -- logistic regression ------------------------------------------------------

def _softplus_neg(m):
    # log(1 + exp(-m)) without overflow for large |m|
    return np.log1p(np.exp(-np.abs(m))) + np.maximum(-m, 0.0)


def _sigmoid(t):
    e = np.exp(-np.abs(t))
    return np.where(t >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def logistic_value(ds: LogisticDataset, x):
    m = ds.y * (np.asarray(x) @ ds.A.T)
    return _softplus_neg(m).mean(axis=-1)


def logistic_grad(ds: LogisticDataset, x):
    m = ds.y * (np.asarray(x) @ ds.A.T)
    w = -ds.y * _sigmoid(-m)
    return (w @ ds.A) / ds.N


def _logistic_hessian(ds: LogisticDataset, x):
    s = _sigmoid(ds.A @ x)
    w = s * (1.0 - s)
    return (ds.A.T * w) @ ds.A / ds.N


# -- ridge regression ---------------------------------------------------------

def ridge_value(ds: RidgeDataset, x):
    x = np.asarray(x)
    res = ds.b - x @ ds.H.T
    return 0.5 * np.sum(res * res, axis=-1) + 0.5 * ds.c * np.sum(x * x, axis=-1)


def ridge_grad(ds: RidgeDataset, x):
    x = np.asarray(x)
    return (x @ ds.H.T - ds.b) @ ds.H + ds.c * x


def ridge_optimum(ds: RidgeDataset) -> OptimumCertificate:
    """Solve ``(H^T H + c I) x = H^T b`` by Cholesky, with one refinement step."""
    M = ds.H.T @ ds.H + ds.c * np.eye(ds.d)
    rhs = ds.H.T @ ds.b
    try:
        cond = np.linalg.cond(M)
        if not np.isfinite(cond) or cond > _MAX_COND:
            raise SolverError(f"ridge normal matrix is ill-conditioned (cond={cond:.3g})")
        factor = scipy.linalg.cho_factor(M)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"ridge solve failed: {exc}") from exc
    x = scipy.linalg.cho_solve(factor, rhs)
    x = x + scipy.linalg.cho_solve(factor, rhs - M @ x)
    g = float(np.linalg.norm(ridge_grad(ds, x)))
    return OptimumCertificate(x_star=x, f_star=float(ridge_value(ds, x)),
                              method=CertificateMethod.CLOSED_FORM, residual_grad_norm=g)


# -- test functions -----------------------------------------------------------

def _check2(x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != 2:
        raise DimensionError(f"test function is two-dimensional, got shape {x.shape}")
    return x[..., 0], x[..., 1]


def beale_value(x):
    x1, x2 = _check2(x)
    t1 = 1.5 - x1 + x1 * x2
    t2 = 2.25 - x1 + x1 * x2 ** 2
    t3 = 2.625 - x1 + x1 * x2 ** 3
    return t1 ** 2 + t2 ** 2 + t3 ** 2


def beale_grad(x):
    x1, x2 = _check2(x)
    t1 = 1.5 - x1 + x1 * x2
    t2 = 2.25 - x1 + x1 * x2 ** 2
    t3 = 2.625 - x1 + x1 * x2 ** 3
    g1 = 2 * t1 * (x2 - 1) + 2 * t2 * (x2 ** 2 - 1) + 2 * t3 * (x2 ** 3 - 1)
    g2 = 2 * t1 * x1 + 4 * t2 * x1 * x2 + 6 * t3 * x1 * x2 ** 2
    return np.stack([g1, g2], axis=-1)


def matyas_value(x):
    x1, x2 = _check2(x)
    return 0.26 * (x1 ** 2 + x2 ** 2) - 0.48 * x1 * x2


def matyas_grad(x):
    x1, x2 = _check2(x)
    return np.stack([0.52 * x1 - 0.48 * x2, 0.52 * x2 - 0.48 * x1], axis=-1)


# -- objective objects --------------------------------------------------------

class _Objective:
    name = ""
    dim = 0

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def oracle(self, strict: bool = True) -> GradientOracle:
        return GradientOracle(self.value, self.grad, self.dim, name=self.name, strict=strict)

    def __call__(self, x):
        return self.value(x)


class LogisticObjective(_Objective):
    name = "logistic"

    def __init__(self, ds: LogisticDataset):
        self.ds = ds
        self.dim = ds.d

    def value(self, x):
        return logistic_value(self.ds, x)

    def grad(self, x):
        return logistic_grad(self.ds, x)

    def hessian(self, x):
        return _logistic_hessian(self.ds, as_vector(x, self.dim))

    @property
    def smoothness(self):
        """Lipschitz constant of the gradient: ``||A||_2^2 / (4N)``."""
        return float(np.linalg.norm(self.ds.A, 2) ** 2 / (4 * self.ds.N))


class RidgeObjective(_Objective):
    name = "ridge"

    def __init__(self, ds: RidgeDataset):
        self.ds = ds
        self.dim = ds.d

    def value(self, x):
        return ridge_value(self.ds, x)

    def grad(self, x):
        return ridge_grad(self.ds, x)

    @property
    def smoothness(self):
        return float(np.linalg.norm(self.ds.H, 2) ** 2 + self.ds.c)


class BealeObjective(_Objective):
    name = "beale"
    dim = 2
    x_star = np.array([3.0, 0.5])

    def value(self, x):
        return beale_value(x)

    def grad(self, x):
        return beale_grad(x)


class MatyasObjective(_Objective):
    name = "matyas"
    dim = 2
    x_star = np.array([0.0, 0.0])

    def value(self, x):
        return matyas_value(x)

    def grad(self, x):
        return matyas_grad(x)


class QuadraticObjective(_Objective):
    """``f(x) = x^T A x / 2 + b^T x`` with its exact ball-smoothed surrogate.

    For a constant Hessian the ball average only shifts the value:
    ``f_r(x) = f(x) + r^2 tr(A) / (2 (d + 2))`` and ``grad f_r = grad f``.
    """

    name = "quadratic"

    def __init__(self, A, b):
        A = np.array(A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got shape {A.shape}")
        scale = max(float(np.max(np.abs(A))), 1.0) if A.size else 1.0
        if not np.allclose(A, A.T, rtol=0.0, atol=1e-12 * scale):
            raise ValueError("quadratic objective needs a symmetric matrix A")
        self.A = A
        self.b = as_vector(b, A.shape[0])
        self.dim = A.shape[0]

    def value(self, x):
        x = np.asarray(x, dtype=np.float64)
        return 0.5 * ((x @ self.A) * x).sum(axis=-1) + x @ self.b

    def grad(self, x):
        return np.asarray(x, dtype=np.float64) @ self.A + self.b

    def smoothed_value(self, x, r):
        return self.value(x) + r ** 2 * np.trace(self.A) / (2 * (self.dim + 2))

    def smoothed_grad(self, x, r):
        return self.grad(x)

    @property
    def smoothness(self):
        return float(np.max(np.abs(np.linalg.eigvalsh(self.A)))) if self.dim else 0.0

    @property
    def is_convex(self):
        return bool(np.min(np.linalg.eigvalsh(self.A)) >= 0.0)


def quadratic_objective(A, b) -> QuadraticObjective:
    return QuadraticObjective(A, b)


# -- optimum certificates -----------------------------------------------------

def _logistic_descent(obj: LogisticObjective, tol: float, max_iter: int) -> OptimumCertificate:
    # Newton direction with Armijo backtracking; falls back to the negative
    # gradient when the Newton step is not a descent direction.
    x = np.zeros(obj.dim)
    fx = float(obj.value(x))
    g = obj.grad(x)
    for _ in range(max_iter):
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol:
            return OptimumCertificate(x_star=x, f_star=fx,
                                      method=CertificateMethod.DETERMINISTIC_DESCENT,
                                      residual_grad_norm=gnorm)
        try:
            p = -np.linalg.solve(obj.hessian(x), g)
        except np.linalg.LinAlgError:
            p = -g
        if not np.all(np.isfinite(p)) or g @ p >= 0:
            p = -g
        t = 1.0
        while True:
            x_new = x + t * p
            f_new = float(obj.value(x_new))
            if f_new <= fx + 1e-4 * t * (g @ p) or t < 1e-20:
                break
            t *= 0.5
        g_new = obj.grad(x_new)
        if t < 1e-20 and np.linalg.norm(g_new) >= gnorm:
            break
        x, fx, g = x_new, f_new, g_new
    gnorm = float(np.linalg.norm(g))
    raise SolverError(f"logistic descent did not reach |grad| <= {tol:g} "
                      f"(residual {gnorm:.3e}); the data may be separable", residual_grad_norm=gnorm)


def solve_optimum(objective, tol: float = 1e-10, max_iter: int = 10_000) -> OptimumCertificate:
    """Certified minimizer for any of the shipped objectives."""
    if isinstance(objective, RidgeObjective):
        return ridge_optimum(objective.ds)
    if isinstance(objective, (BealeObjective, MatyasObjective)):
        x = objective.x_star.copy()
        return OptimumCertificate(x_star=x, f_star=0.0, method=CertificateMethod.KNOWN_CONSTANT,
                                  residual_grad_norm=float(np.linalg.norm(objective.grad(x))))
    if isinstance(objective, LogisticObjective):
        return _logistic_descent(objective, tol, max_iter)
    if isinstance(objective, QuadraticObjective):
        x = np.linalg.lstsq(objective.A, -objective.b, rcond=None)[0]
        return OptimumCertificate(x_star=x, f_star=float(objective.value(x)),
                                  method=CertificateMethod.CLOSED_FORM,
                                  residual_grad_norm=float(np.linalg.norm(objective.grad(x))))
    raise TypeError(f"no optimum solver for {type(objective).__name__}")


# -- plain-text dataset format ------------------------------------------------
#
#   # hlfszo-dataset 1
#   # kind: logistic | ridge
#   # d: <int>
#   # N: <int>
#   # seed: <int or none>
#   # x_star: <d floats or none>
#   # noise: <float>            logistic: half-width of the label noise
#   # noise_std: <float>        ridge
#   # c: <float>                ridge
#   # columns: y a_1 .. a_d     or   b h_1 .. h_d
#   <N rows, whitespace separated, %.17g>

_MAGIC = "hlfszo-dataset 1"


def _fmt_floats(v):
    return " ".join(f"{float(t):.17g}" for t in v)


def save_dataset(ds, path) -> None:
    if isinstance(ds, LogisticDataset):
        header = {"kind": "logistic", "noise": f"{ds.noise:.17g}"}
        first, M, col = ds.y, ds.A, "y a"
    elif isinstance(ds, RidgeDataset):
        header = {"kind": "ridge", "noise_std": f"{ds.noise_std:.17g}", "c": f"{ds.c:.17g}"}
        first, M, col = ds.b, ds.H, "b h"
    else:
        raise TypeError(f"cannot export {type(ds).__name__}")
    header["d"] = str(M.shape[1])
    header["N"] = str(M.shape[0])
    header["seed"] = "none" if ds.seed is None else str(ds.seed)
    header["x_star"] = "none" if ds.x_star is None else _fmt_floats(ds.x_star)
    name, prefix = col.split()
    header["columns"] = " ".join([name] + [f"{prefix}_{j + 1}" for j in range(M.shape[1])])
    buf = io.StringIO()
    buf.write(f"# {_MAGIC}\n")
    for k, v in header.items():
        buf.write(f"# {k}: {v}\n")
    for t, row in zip(first, M):
        buf.write(f"{float(t):.17g} {_fmt_floats(row)}\n")
    Path(path).write_text(buf.getvalue())


def load_dataset(path):
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != f"# {_MAGIC}":
        raise ValueError(f"{path}: not a dataset file (missing '# {_MAGIC}' header)")
    meta = {}
    body = []
    for line in lines[1:]:
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            meta[key.strip()] = val.strip()
        elif line.strip():
            body.append([float(t) for t in line.split()])
    d, N = int(meta["d"]), int(meta["N"])
    data = np.array(body, dtype=np.float64).reshape(N, d + 1)
    seed = None if meta.get("seed", "none") == "none" else int(meta["seed"])
    xs = meta.get("x_star", "none")
    x_star = None if xs == "none" else np.array([float(t) for t in xs.split()])
    if meta["kind"] == "logistic":
        return LogisticDataset(A=data[:, 1:].copy(), y=data[:, 0].copy(), x_star=x_star, seed=seed,
                               noise=float(meta.get("noise", 0.5)))
    if meta["kind"] == "ridge":
        return RidgeDataset(H=data[:, 1:].copy(), b=data[:, 0].copy(), c=float(meta["c"]),
                            x_star=x_star, seed=seed, noise_std=float(meta.get("noise_std", 0.0)))
    raise ValueError(f"{path}: unknown dataset kind {meta['kind']!r}")
