"""Counter-based random streams and the distribution primitives used by the generators.

Every draw is a pure function of ``(master_seed, path, counter)``.  A path is a
sequence of ``(Label, index)`` pairs folded into a 64-bit key with the
SplitMix64 finalizer, so a subject's draws never depend on how many other
subjects, replications or workers came before it.

The generators address each draw directly by path, following this fixed order
per subject (``Draw`` codes in brackets)::

    visit 0:  propensity [PROPENSITY], baseline latent [BASELINE_LATENT],
              baseline confounder noise [BASELINE_NOISE]
    visit k:  latent noise [LATENT_NOISE], confounder noise [CONFOUNDER_NOISE],
              treatment Bernoulli [TREATMENT], event uniform [EVENT]

A slot is reserved whether or not the draw is used: the treatment uniform of a
forced visit exists but is ignored, so turning forcing off leaves every other
draw untouched.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

__all__ = [
    "Label",
    "Draw",
    "StreamKey",
    "RngStream",
    "derive_stream",
    "derive_key",
    "key_uniform",
    "key_open_uniform",
    "key_normal",
    "gamma_inverse_cdf",
]

_MASK = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_LABEL_SALT = np.uint64(0xD1B54A32D192ED03)
_TWO_M53 = 2.0**-53


class Label(enum.IntEnum):
    """Purpose of one level of a stream path."""

    SCENARIO = 1
    REPLICATION = 2
    SUBJECT = 3
    VISIT = 4
    DRAW = 5
    REGIME = 6


class Draw(enum.IntEnum):
    PROPENSITY = 0
    BASELINE_LATENT = 1
    BASELINE_NOISE = 2
    LATENT_NOISE = 3
    CONFOUNDER_NOISE = 4
    TREATMENT = 5
    EVENT = 6


def _mix(z: np.ndarray) -> np.ndarray:
    # SplitMix64 finalizer; uint64 arithmetic wraps modulo 2**64.
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _as_u64(x) -> np.ndarray:
    arr = np.asarray(x)
    if arr.dtype.kind == "u":
        return arr.astype(np.uint64)
    if arr.dtype.kind in "iO" or arr.dtype.kind == "b":
        # Negative or >64-bit python ints are reduced modulo 2**64.
        if arr.ndim == 0:
            return np.asarray(int(arr) & _MASK, dtype=np.uint64)
        if arr.dtype.kind == "O" or arr.min(initial=0) < 0:
            return np.array([int(v) & _MASK for v in arr.ravel()], dtype=np.uint64).reshape(arr.shape)
        return arr.astype(np.uint64)
    raise TypeError(f"stream indices must be integers, got dtype {arr.dtype}")


def derive_key(master_seed: int, path: Sequence[tuple[int, object]]) -> np.ndarray:
    """Fold ``path`` into a 64-bit key.

    Any index in ``path`` may be an integer array, in which case the result is
    an array of keys (broadcast across indices).
    """
    with np.errstate(over="ignore"):
        h = _mix(_as_u64(master_seed) ^ _GOLDEN)
        for label, index in path:
            tag = _mix(np.uint64(int(label)) * _LABEL_SALT + _GOLDEN)
            h = _mix(h ^ tag)
            h = _mix(h + _mix(_as_u64(index) + _GOLDEN))
    return h


def _bits(key: np.ndarray, counter) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = key ^ (_as_u64(counter) * _GOLDEN)
        return _mix(_mix(x) + key)


def key_uniform(key, counter=0) -> np.ndarray:
    """Uniform draws in [0, 1) for ``key`` at position ``counter``."""
    return (_bits(np.asarray(key, dtype=np.uint64), counter) >> np.uint64(11)).astype(np.float64) * _TWO_M53


def key_open_uniform(key, counter=0) -> np.ndarray:
    """Uniform draws strictly inside (0, 1); used wherever a draw feeds a log or an inverse CDF."""
    bits = _bits(np.asarray(key, dtype=np.uint64), counter) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * _TWO_M53


def key_normal(key, mean, sd, counter=0) -> np.ndarray:
    sd = np.asarray(sd, dtype=float)
    if np.any(sd < 0):
        raise ValueError("normal standard deviation must be >= 0")
    z = special.ndtri(key_open_uniform(key, counter))
    return np.where(sd == 0, mean, mean + sd * z)


@dataclass(frozen=True)
class StreamKey:
    """Address of a stream: master seed plus an ordered ``(Label, index)`` path."""

    master_seed: int
    path: tuple[tuple[Label, int], ...] = ()

    def child(self, label: Label, index: int) -> "StreamKey":
        return StreamKey(self.master_seed, self.path + ((Label(label), int(index)),))

    @property
    def key(self) -> int:
        return int(derive_key(self.master_seed, self.path))


@dataclass
class RngStream:
    """Sequential view of one counter-based stream.

    Streams are cheap value objects; copying one and drawing from both copies
    yields the same numbers.
    """

    key: int
    counter: int = field(default=0)

    def _next_key(self):
        c = self.counter
        self.counter += 1
        return np.uint64(self.key), c

    def uniform(self) -> float:
        k, c = self._next_key()
        return float(key_uniform(k, c))

    def open_uniform(self) -> float:
        k, c = self._next_key()
        return float(key_open_uniform(k, c))

    def uniforms(self, size: int) -> np.ndarray:
        c0 = self.counter
        self.counter += size
        return key_uniform(np.uint64(self.key), np.arange(c0, c0 + size, dtype=np.uint64))

    def normal(self, mean: float = 0.0, sd: float = 1.0) -> float:
        if sd < 0:
            raise ValueError("normal standard deviation must be >= 0")
        u = self.open_uniform()
        if sd == 0:
            return float(mean)
        return float(mean + sd * special.ndtri(u))

    def bernoulli(self, p: float) -> int:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"Bernoulli probability must lie in [0, 1], got {p!r}")
        return int(self.uniform() < p)


def derive_stream(key: StreamKey) -> RngStream:
    return RngStream(key.key)


def _gamma_logpdf(y, shape):
    return (shape - 1.0) * np.log(y) - y - special.gammaln(shape)


def gamma_inverse_cdf(u, shape: float, scale: float):
    """Quantile function of the Gamma(shape, scale) distribution.

    Bisection on the regularized lower incomplete gamma function followed by a
    few guarded Newton steps.  Accepts scalars or arrays; ``u`` must lie
    strictly inside (0, 1).

    Examples
    --------
    >>> round(float(gamma_inverse_cdf(0.5, 3.0, 154.0)), 1)
    411.8
    """
    if shape <= 0 or scale <= 0:
        raise ValueError("gamma shape and scale must be positive")
    u_arr = np.asarray(u, dtype=float)
    if np.any(~((u_arr > 0.0) & (u_arr < 1.0))):
        raise ValueError("gamma_inverse_cdf requires u strictly inside (0, 1)")
    u_flat = np.atleast_1d(u_arr).ravel()

    lo = np.zeros_like(u_flat)
    hi = np.full_like(u_flat, shape + 10.0 * np.sqrt(shape) + 10.0)
    while True:
        short = special.gammainc(shape, hi) < u_flat
        if not short.any():
            break
        hi[short] *= 2.0

    # Elements stop individually, so each result is independent of the batch.
    active = np.ones(u_flat.shape, dtype=bool)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = special.gammainc(shape, mid) < u_flat
        lo = np.where(active & below, mid, lo)
        hi = np.where(active & ~below, mid, hi)
        active &= hi - lo > 1e-12 * np.maximum(hi, 1e-300)
        if not active.any():
            break

    y = 0.5 * (lo + hi)
    for _ in range(4):
        resid = special.gammainc(shape, y) - u_flat
        step = resid / np.exp(_gamma_logpdf(np.maximum(y, 1e-300), shape))
        cand = y - step
        # Newton must not leave the bisection bracket.
        y = np.where(np.isfinite(cand) & (cand >= lo) & (cand <= hi), cand, y)

    x = y * scale
    if u_arr.ndim == 0:
        return float(x[0])
    return x.reshape(u_arr.shape)
