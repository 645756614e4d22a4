"""Exact survival functions for Brownian exit problems on intervals and cubes.

Two independent series give P(tau > t) for Brownian motion started at
x in (0, a) and killed on leaving the interval:

* the image (reflection) series, fast for small t / coarse intervals,
* the sine eigenfunction series, fast for large t.

Coordinates of a d-dimensional Brownian motion are independent, so the
survival in a cube started at the center is the d-th power of the 1D
value from the midpoint.  These closed forms are the ground truth the
stochastic sampler is validated against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

__all__ = [
    "IntervalSurvivalQuery",
    "interval_survival_reflection",
    "interval_survival_eigen",
    "interval_survival",
    "cube_survival",
]


@dataclass(frozen=True)
class IntervalSurvivalQuery:
    """Start position x in (0, a), interval length a, elapsed time t."""

    x: float
    a: float
    t: float

    def __post_init__(self):
        if not (0.0 < self.x < self.a):
            raise ValueError(f"start x={self.x} must lie strictly inside (0, {self.a})")
        if self.t < 0.0:
            raise ValueError(f"time t={self.t} must be nonnegative")
        if not (math.isfinite(self.x) and math.isfinite(self.a) and math.isfinite(self.t)):
            raise ValueError("query fields must be finite")


def _clip_unit(p: float) -> float:
    return min(1.0, max(0.0, p))


def interval_survival_reflection(q: IntervalSurvivalQuery, n_terms: int = 32) -> float:
    """Survival probability via the method of images.

    Sums Gaussian masses of the killed heat kernel over reflected copies
    of the interval, |k| <= n_terms.  Terms decay like exp(-(2ka)^2/2t),
    so a handful of images suffices whenever t <~ a^2.
    """
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    if q.t == 0.0:
        return 1.0
    rt = math.sqrt(q.t)
    ks = np.arange(-n_terms, n_terms + 1, dtype=float)
    shift = 2.0 * ks * q.a
    terms = (
        ndtr((shift + q.a - q.x) / rt)
        - ndtr((shift - q.x) / rt)
        - ndtr((shift + q.a + q.x) / rt)
        + ndtr((shift + q.x) / rt)
    )
    return _clip_unit(float(np.sum(terms)))


def interval_survival_eigen(q: IntervalSurvivalQuery, n_terms: int = 64) -> float:
    """Survival probability via the sine eigenfunction expansion.

    P(tau > t) = (4/pi) * sum_{n>=0} exp(-(2n+1)^2 pi^2 t / (2 a^2))
                 * sin((2n+1) pi x / a) / (2n+1)

    Truncation error after the n-th term is below the first omitted
    exponential factor; the result is clamped to [0, 1].
    """
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    if q.t == 0.0:
        return 1.0
    m = 2.0 * np.arange(n_terms, dtype=float) + 1.0
    decay = np.exp(-(m**2) * math.pi**2 * q.t / (2.0 * q.a**2))
    s = np.sum(decay * np.sin(m * math.pi * q.x / q.a) / m)
    return _clip_unit(float(4.0 / math.pi * s))


def interval_survival(x: float, a: float, t: float, n_terms: int = 64) -> float:
    """P(tau_x > t) with the series chosen by regime (images for t <= a^2)."""
    q = IntervalSurvivalQuery(x=x, a=a, t=t)
    if t <= a * a:
        return interval_survival_reflection(q, n_terms=max(n_terms, 16))
    return interval_survival_eigen(q, n_terms=n_terms)


def cube_survival(side: float, d: int, t: float, n_terms: int = 64) -> float:
    """Survival of Brownian motion started at the center of a d-cube.

    Coordinate independence gives the exact value as the d-th power of
    the 1D interval survival from the midpoint.
    """
    if side <= 0.0:
        raise ValueError("side must be positive")
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if t < 0.0:
        raise ValueError("time must be nonnegative")
    if t == 0.0:
        return 1.0
    return interval_survival(side / 2.0, side, t, n_terms=n_terms) ** d
