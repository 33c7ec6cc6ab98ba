"""Bernoulli KL divergence and the weighted Jensen-Shannon form built on it."""
from __future__ import annotations

import math

from numba import njit

from .errors import UsageError

DEFAULT_EPS = 1e-12


@njit(cache=True)
def kl_kernel(a, b, eps):
    # only the second argument is clamped; 0*log(0) = 0 on the first
    if b < eps:
        b = eps
    elif b > 1.0 - eps:
        b = 1.0 - eps
    r = 0.0
    if a > 0.0:
        r += a * math.log(a / b)
    if a < 1.0:
        r += (1.0 - a) * math.log((1.0 - a) / (1.0 - b))
    return r if r > 0.0 else 0.0


def _check_mean(name, v):
    if not (0.0 <= v <= 1.0):
        raise UsageError(f"{name}={v!r} is not a mean in [0, 1]")


def _check_eps(eps):
    if not (0.0 < eps < 0.5):
        raise UsageError(f"clamp epsilon must lie in (0, 0.5), got {eps!r}")


def bern_kl(a: float, b: float, eps: float = DEFAULT_EPS) -> float:
    """KL divergence kl(a, b) between Bernoulli(a) and Bernoulli(b).

    ``b`` is clamped to ``[eps, 1 - eps]`` so the result stays finite when the
    hypothesized mean touches the boundary.
    """
    _check_mean("a", a)
    _check_mean("b", b)
    _check_eps(eps)
    return kl_kernel(float(a), float(b), float(eps))


def jensen_shannon_alpha(alpha: float, m1: float, m2: float, eps: float = DEFAULT_EPS) -> float:
    """alpha * kl(m1, d) + (1 - alpha) * kl(m2, d) with d = alpha*m1 + (1-alpha)*m2."""
    if not (0.0 <= alpha <= 1.0):
        raise UsageError(f"alpha={alpha!r} is not in [0, 1]")
    _check_mean("m1", m1)
    _check_mean("m2", m2)
    _check_eps(eps)
    return js_kernel(float(alpha), float(m1), float(m2), float(eps))


@njit(cache=True)
def js_kernel(alpha, m1, m2, eps):
    d = alpha * m1 + (1.0 - alpha) * m2
    out = 0.0
    if alpha > 0.0:
        out += alpha * kl_kernel(m1, d, eps)
    if alpha < 1.0:
        out += (1.0 - alpha) * kl_kernel(m2, d, eps)
    return out


def kl_binary_risk(d: float) -> float:
    """kl(d, 1 - d), the information needed to reach risk ``d``."""
    if not (0.0 < d < 1.0):
        raise UsageError(f"risk must lie strictly inside (0, 1), got {d!r}")
    return bern_kl(d, 1.0 - d)
