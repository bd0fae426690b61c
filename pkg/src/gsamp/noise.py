"""Symmetric alpha-stable noise.

The characteristic function is ``exp(i*mu*t - gamma*|t|**alpha)``, so ``gamma``
is the dispersion: a standard draw is multiplied by ``gamma**(1/alpha)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

RNG_NAME = "numpy.random.Philox (Philox4x64-10, counter-based)"
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SasParams:
    alpha: float
    gamma: float
    mu: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 2.0:
            raise ValidationError(f"alpha={self.alpha} outside (0, 2]")
        if not self.gamma > 0.0:
            raise ValidationError(f"gamma={self.gamma} must be positive")
        if not np.isfinite(self.mu):
            raise ValidationError("mu must be finite")

    @property
    def scale(self) -> float:
        return self.gamma ** (1.0 / self.alpha)


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(seed: int, *keys) -> int:
    """Fold integer or string keys into ``seed`` with splitmix64."""
    h = splitmix64(int(seed) & _MASK64)
    for key in keys:
        if isinstance(key, str):
            # FNV-1a keeps string keys stable across interpreter runs
            k = 0xCBF29CE484222325
            for byte in key.encode():
                k = ((k ^ byte) * 0x100000001B3) & _MASK64
        else:
            k = int(key) & _MASK64
        h = splitmix64(h ^ k)
    return h


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(int(seed) & _MASK64))


def standard_sas(alpha: float, size, rng: np.random.Generator) -> np.ndarray:
    """Chambers-Mallows-Stuck draw with characteristic function exp(-|t|^alpha)."""
    U = rng.uniform(-np.pi / 2, np.pi / 2, size=size)
    W = rng.exponential(1.0, size=size)
    if alpha == 2.0:
        return 2.0 * np.sqrt(W) * np.sin(U)
    if alpha == 1.0:
        return np.tan(U)
    return (
        np.sin(alpha * U)
        / np.cos(U) ** (1.0 / alpha)
        * (np.cos(U - alpha * U) / W) ** ((1.0 - alpha) / alpha)
    )


def sample_sas(params: SasParams, n, seed) -> np.ndarray:
    """``n`` i.i.d. SaS draws; ``n`` may be a shape tuple, ``seed`` an int or Generator."""
    if isinstance(n, (int, np.integer)) and n < 1:
        raise ValidationError(f"sample count must be >= 1, got {n}")
    x = standard_sas(params.alpha, n, make_rng(seed))
    return params.scale * x + params.mu


def empirical_char_fn(samples, t: float) -> float:
    """Real part of the empirical characteristic function at ``t``."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValidationError("empty sample")
    return float(np.mean(np.cos(t * x)))
