"""Stopping thresholds.

``beta_osrl`` is the mixture-martingale threshold with a per-arm
``3 ln(1 + ln N)`` part and a constant part built from ``phi``;
``beta_simple`` is the usual ``ln(2 t (A - 1) / delta)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .errors import UsageError

ZETA2 = math.pi ** 2 / 6.0


def p(u: float) -> float:
    return u - math.log(u)


def p_inv(y: float) -> float:
    """Inverse of ``u - ln u`` on ``[1, inf)``."""
    if y < 1.0:
        raise UsageError(f"p_inv is defined on [1, inf), got {y!r}")
    if y == 1.0:
        return 1.0
    return brentq(lambda u: p(u) - y, 1.0, 2.0 * y + 2.0, xtol=1e-12, rtol=4 * np.finfo(float).eps)


def p_tilde(z: float, x: float) -> float:
    """Two-branch helper; ``z`` in ``[1, e]``."""
    if x >= p_inv(1.0 / math.log(z)):
        u = p_inv(x)
        return math.exp(1.0 / u) * u
    return z * (x - math.log(math.log(z)))


def phi(x: float) -> float:
    if x < 0:
        raise UsageError(f"phi is defined for x >= 0, got {x!r}")
    return 2.0 * p_tilde(1.5, (p_inv(1.0 + x) + math.log(2.0 * ZETA2)) / 2.0)


@lru_cache(maxsize=None)
def beta_constant(X: int, G: int, H: int, delta_g: float) -> float:
    """The count-free part ``K phi(ln((G - 1) / delta) / K)`` with ``K = XGH``."""
    if not 0.0 < delta_g < 1.0:
        raise UsageError(f"delta_g must lie in (0, 1), got {delta_g!r}")
    if G < 2:
        raise UsageError("need at least two representations")
    K = X * G * H
    return K * phi(math.log((G - 1) / delta_g) / K)


def beta_counts(pulls) -> float:
    """``3 * sum ln(1 + ln N)``; unpulled arms contribute nothing."""
    n = np.asarray(pulls, dtype=np.float64).ravel()
    n = n[n >= 1]
    return float(3.0 * np.log1p(np.log(n)).sum())


def beta_osrl(counts, delta_g: float) -> float:
    X, G, H = counts.shape
    return beta_counts(counts.pulls) + beta_constant(X, G, H, float(delta_g))


def beta_simple(t: int, arms: int, delta: float) -> float:
    if t < 1 or arms < 2:
        raise UsageError(f"need t >= 1 and at least two arms, got t={t}, arms={arms}")
    return math.log(2.0 * t * (arms - 1) / delta)


@dataclass(frozen=True)
class ThresholdParams:
    """Which threshold a stopping rule compares against."""

    variant: str = "osrl"
    delta: float = 0.1

    def __post_init__(self):
        if self.variant not in ("osrl", "simple"):
            raise UsageError(f"unknown threshold variant {self.variant!r}")
        if not 0.0 < self.delta < 1.0:
            raise UsageError(f"delta must lie in (0, 1), got {self.delta!r}")
