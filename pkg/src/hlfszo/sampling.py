"""Seeded random streams, sphere/ball samplers and single-point estimators."""
from __future__ import annotations

import numpy as np

from .core import DimensionError, HlfszoError, ObjectiveOracle, as_vector

__all__ = [
    "RngStream",
    "derive",
    "mix64",
    "sample_sphere",
    "sample_ball",
    "single_point_estimate",
    "estimate_smoothed_value",
    "estimate_smoothed_gradient",
]

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# Monte-Carlo estimators evaluate at most this many points at once.
_CHUNK = 1 << 16


def mix64(z: int) -> int:
    """SplitMix64 finalizer: a bijective 64-bit avalanche hash."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class RngStream:
    """A reproducible random stream backed by numpy's PCG64.

    Substreams are keyed on ``(seed, index)`` only, never on how many draws
    the parent has made:  ``seed' = mix64(seed + (index + 1) * GOLDEN)``.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed) & _MASK64
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def derive(self, index: int) -> "RngStream":
        if index < 0:
            raise ValueError(f"substream index must be non-negative, got {index}")
        return RngStream(mix64(self.seed + (int(index) + 1) * _GOLDEN))

    def standard_normal(self, shape):
        return self._gen.standard_normal(shape)

    def random(self, shape=None):
        return self._gen.random(shape)

    def uniform(self, low, high, shape=None):
        return self._gen.uniform(low, high, shape)

    def normal(self, loc, scale, shape=None):
        return self._gen.normal(loc, scale, shape)

    def __repr__(self):
        return f"RngStream(seed={self.seed})"


def derive(stream: RngStream, *indices: int) -> RngStream:
    """Substream of ``stream`` keyed by a path of indices, e.g. ``(method, trial)``."""
    for i in indices:
        stream = stream.derive(i)
    return stream


def _shape(size):
    if size is None:
        return ()
    if isinstance(size, (int, np.integer)):
        return (int(size),)
    return tuple(size)


def sample_sphere(rng: RngStream, d: int, size=None) -> np.ndarray:
    """Uniform draw(s) on the unit sphere ``S^{d-1}`` by normalizing a Gaussian.

    Returns shape ``(d,)`` or ``(*size, d)``.  Rows with zero norm are redrawn.
    """
    if d < 1:
        raise DimensionError(f"sphere dimension must be >= 1, got {d}")
    shape = _shape(size)
    g = rng.standard_normal(shape + (d,)).reshape(-1, d)
    norm = np.sqrt(np.sum(g * g, axis=-1))
    for i in np.flatnonzero(norm == 0.0):
        row = rng.standard_normal(d)
        while not np.any(row):
            row = rng.standard_normal(d)
        g[i] = row
        norm[i] = np.sqrt(np.sum(row * row))
    return (g / norm[:, None]).reshape(shape + (d,))


def sample_ball(rng: RngStream, d: int, size=None) -> np.ndarray:
    """Uniform draw(s) in the closed unit ball: sphere direction times ``U**(1/d)``."""
    u = sample_sphere(rng, d, size)
    radius = rng.random(_shape(size)) ** (1.0 / d)
    return u * np.asarray(radius)[..., None]


def single_point_estimate(oracle: ObjectiveOracle, x, r: float, u) -> np.ndarray:
    """One-query gradient estimate ``(d / r) * f(x + r u) * u``.

    ``x`` and ``u`` may carry matching leading batch axes.
    """
    if not r > 0:
        raise HlfszoError(f"smoothing radius must be positive, got {r}")
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if x.shape[-1] != u.shape[-1]:
        raise DimensionError(f"x has dimension {x.shape[-1]} but u has {u.shape[-1]}")
    d = x.shape[-1]
    fval = np.asarray(oracle.evaluate(x + r * u))
    return (d / r) * fval[..., None] * u


def _check_n(n):
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")


def estimate_smoothed_value(oracle: ObjectiveOracle, x, r: float, n: int, rng: RngStream):
    """Monte-Carlo estimate of ``f_r(x) = E_{y ~ Unif(B_d)} f(x + r y)``.

    Returns ``(mean, stderr)`` and spends exactly ``n`` queries.
    """
    _check_n(n)
    x = as_vector(x, oracle.dim)
    d = x.size
    vals = []
    done = 0
    while done < n:
        m = min(_CHUNK, n - done)
        vals.append(oracle.evaluate(x + r * sample_ball(rng, d, m)))
        done += m
    vals = np.concatenate(vals)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n))


def estimate_smoothed_gradient(oracle: ObjectiveOracle, x, r: float, n: int, rng: RngStream,
                               with_stderr: bool = False):
    """Average of ``n`` independent single-point estimates; estimates ``grad f_r(x)``.

    With ``with_stderr=True`` returns ``(mean, componentwise standard error)``.
    """
    _check_n(n)
    x = as_vector(x, oracle.dim)
    d = x.size
    s1 = np.zeros(d)
    s2 = np.zeros(d)
    done = 0
    while done < n:
        m = min(_CHUNK, n - done)
        u = sample_sphere(rng, d, m)
        g = single_point_estimate(oracle, np.broadcast_to(x, u.shape), r, u)
        s1 += g.sum(axis=0)
        s2 += (g * g).sum(axis=0)
        done += m
    mean = s1 / n
    if not with_stderr:
        return mean
    var = np.maximum(s2 - n * mean * mean, 0.0) / (n - 1)
    return mean, np.sqrt(var / n)
