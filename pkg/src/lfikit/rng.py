"""Deterministic, splittable random number generation.

Every stochastic routine in the toolkit draws from an :class:`RngStream`,
a counter-based Philox generator keyed by ``(seed, stream_id)``. Distinct
stream ids under one seed give statistically independent streams, so
parallel workers can own disjoint substreams and reproduce the exact
sequence a serial run would produce.

All named distributions are generated from raw uniform draws by explicit
algorithms (Box-Muller, inverse CDF, Poisson inversion / transformed
rejection), keeping the accelerated and fallback kernel paths bit-identical.
"""

import math
import struct

import numpy as np

from ._accel import jit_kernel
from .errors import InvalidArgumentError

_MASK64 = (1 << 64) - 1


def mix64(z: int) -> int:
    """SplitMix64 finalizer; a bijective 64-bit hash used to derive stream ids."""
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def hash_floats(values) -> int:
    """Stable 64-bit hash of a float sequence (bit patterns, not rounded values)."""
    h = 0x243F6A8885A308D3
    for v in np.asarray(values, dtype=float).ravel():
        (bits,) = struct.unpack("<Q", struct.pack("<d", float(v)))
        h = mix64(h ^ bits)
    return h


class RngStream:
    """A single-owner random stream addressed by ``(seed, stream_id)``.

    The same ``(seed, stream_id)`` always replays the same draw sequence,
    on any platform. Substreams derived through :meth:`substream` hash the
    given ids into a fresh stream id, so per-task streams are reproducible
    regardless of scheduling order.
    """

    __slots__ = ("seed", "stream_id", "_gen")

    def __init__(self, seed, stream_id=0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        self._gen = np.random.Generator(
            np.random.Philox(key=np.array([self.seed, self.stream_id], dtype=np.uint64))
        )

    @property
    def generator(self) -> np.random.Generator:
        """The underlying numpy Generator (consumed by kernels)."""
        return self._gen

    def substream(self, *ids) -> "RngStream":
        """Derive an independent stream from integer ids (pair index, attempt, ...)."""
        h = mix64(self.stream_id ^ 0x9E3779B97F4A7C15)
        for x in ids:
            h = mix64(h ^ (int(x) & _MASK64))
        return RngStream(self.seed, h)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


# ---------------------------------------------------------------------------
# scalar kernels (jitted when numba is enabled; plain Python otherwise)
# ---------------------------------------------------------------------------


@jit_kernel
def _std_normal(gen):
    # Box-Muller, one variate per pair of uniforms; u1 shifted into (0, 1].
    u1 = 1.0 - gen.random()
    u2 = gen.random()
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@jit_kernel
def _std_exponential(gen):
    # Inverse CDF; 1 - u lies in (0, 1] so the log stays finite.
    return -math.log1p(-gen.random())


@jit_kernel
def _poisson(gen, lam):
    if lam <= 0.0:
        return 0
    if lam < 30.0:
        # inversion by sequential search; lam < 30 keeps exp(-lam) well above
        # the underflow threshold and the loop short
        p = math.exp(-lam)
        s = p
        u = gen.random()
        k = 0
        while u > s and k < 1000:
            k += 1
            p *= lam / k
            s += p
        return k
    # transformed rejection with squeeze (Hormann's PTRS), exact for large lam
    slam = math.sqrt(lam)
    loglam = math.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        u = gen.random() - 0.5
        v = gen.random()
        us = 0.5 - abs(u)
        k = int(math.floor((2.0 * a / us + b) * u + lam + 0.43))
        if us >= 0.07 and v <= vr:
            return k
        if k < 0 or (us < 0.013 and v > us):
            continue
        if (math.log(v) + math.log(invalpha) - math.log(a / (us * us) + b)) <= (
            -lam + k * loglam - math.lgamma(k + 1.0)
        ):
            return k


@jit_kernel
def _uniform_box_fill(gen, lo, hi, out):
    for i in range(out.shape[0]):
        out[i] = lo[i] + (hi[i] - lo[i]) * gen.random()


@jit_kernel
def _event_index(gen, weights, total):
    x = gen.random() * total
    acc = 0.0
    last_positive = 0
    for i in range(weights.shape[0]):
        w = weights[i]
        if w > 0.0:
            last_positive = i
            acc += w
            if x < acc:
                return i
    # float roundoff can leave x a hair above the final cumulative sum
    return last_positive


# ---------------------------------------------------------------------------
# public sampling operations
# ---------------------------------------------------------------------------


def _require_finite(name, value):
    if not math.isfinite(value):
        raise InvalidArgumentError(f"{name} must be finite, got {value!r}")


def sample_normal(rng: RngStream, mu: float, sigma: float) -> float:
    """Draw from Normal(mu, sigma^2); sigma = 0 returns mu exactly."""
    _require_finite("mu", mu)
    _require_finite("sigma", sigma)
    if sigma < 0:
        raise InvalidArgumentError(f"sigma must be >= 0, got {sigma}")
    return mu + sigma * _std_normal(rng.generator)


def sample_poisson(rng: RngStream, lam: float) -> int:
    """Draw a Poisson(lam) count; exact for all lam >= 0."""
    _require_finite("lambda", lam)
    if lam < 0:
        raise InvalidArgumentError(f"lambda must be >= 0, got {lam}")
    return int(_poisson(rng.generator, float(lam)))


def sample_exponential(rng: RngStream, rate: float) -> float:
    """Draw from Exponential(rate), mean 1/rate."""
    _require_finite("rate", rate)
    if rate <= 0:
        raise InvalidArgumentError(f"rate must be > 0, got {rate}")
    return _std_exponential(rng.generator) / rate


def sample_uniform_box(rng: RngStream, lo, hi) -> np.ndarray:
    """Draw a vector with independent components uniform on [lo[i], hi[i])."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.ndim != 1 or lo.shape != hi.shape:
        raise InvalidArgumentError("lo and hi must be 1-d vectors of equal length")
    if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
        raise InvalidArgumentError("box bounds must be finite")
    if not (lo < hi).all():
        raise InvalidArgumentError("box requires lo[i] < hi[i] for every component")
    out = np.empty(lo.shape[0])
    _uniform_box_fill(rng.generator, lo, hi, out)
    return out


def sample_event_index(rng: RngStream, weights) -> int:
    """Pick index i with probability weights[i] / sum(weights)."""
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 1 or weights.shape[0] == 0:
        raise InvalidArgumentError("weights must be a non-empty 1-d vector")
    if not np.isfinite(weights).all():
        raise InvalidArgumentError("weights must be finite")
    if (weights < 0).any():
        raise InvalidArgumentError("weights must be non-negative")
    total = float(weights.sum())
    if total <= 0:
        raise InvalidArgumentError("at least one weight must be positive")
    return int(_event_index(rng.generator, weights, total))
