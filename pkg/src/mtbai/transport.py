"""Confusing sets, transport costs and the allocation objective.

For a task ``x`` and a challenger arm ``(gb, hb)``, the cheapest alternative
model that makes the challenger optimal pools a set of arms (the confusing
set) at their weighted mean and leaves every other arm untouched. The pooled
KL cost is the transport cost; minimizing it over challengers gives ``rho``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import FrozenSet, Iterable, NamedTuple, Tuple

import numpy as np
from numba import njit

from .divergence import DEFAULT_EPS, kl_kernel
from .errors import DegenerateWeightError, StructureError, UsageError
from .model import CountTensor, ModelTensor, structure_kernel

Pair = Tuple[int, int]

TIE_RTOL = 1e-12


# --------------------------------------------------------------------------
# compiled kernels on flat (X, G*H) arrays
# --------------------------------------------------------------------------


@njit(cache=True)
def uset_kernel(mu_x, w_x, chal, mask):
    """Fill ``mask`` with the confusing set of ``chal``; return (mean, weight)."""
    K = mu_x.shape[0]
    wc = w_x[chal]
    mc = mu_x[chal]
    for a in range(K):
        if a == chal:
            mask[a] = True
            continue
        ma = mu_x[a]
        # member iff mu_a >= weighted mean of {b: mu_b >= mu_a} + chal, as a
        # signed sum; ties up to rounding count as members
        d = wc * (mc - ma)
        scale = wc
        for b in range(K):
            if b != chal and mu_x[b] >= ma:
                d += w_x[b] * (mu_x[b] - ma)
                scale += w_x[b]
        mask[a] = d <= TIE_RTOL * scale
    sw = 0.0
    swm = 0.0
    for a in range(K):
        if mask[a]:
            sw += w_x[a]
            swm += w_x[a] * mu_x[a]
    if sw > 0.0:
        m = swm / sw
    else:
        m = mc
    return m, sw


@njit(cache=True)
def transport_kernel(mu_x, w_x, chal, eps, mask):
    m, sw = uset_kernel(mu_x, w_x, chal, mask)
    if sw <= 0.0:
        return 0.0, m
    c = 0.0
    for a in range(mu_x.shape[0]):
        if mask[a] and w_x[a] > 0.0:
            c += w_x[a] * kl_kernel(mu_x[a], m, eps)
    return c, m


@njit(cache=True)
def rho_kernel(mu, w, G, H, gref, eps, hbar):
    """min over gb != gref of sum_x min_hb transport; fills ``hbar``, returns (value, gb).

    Ties go to the smallest indices. ``w`` need not be normalized.
    """
    X, K = mu.shape
    mask = np.zeros(K, dtype=np.bool_)
    tmp = np.zeros(X, dtype=np.int64)
    best = np.inf
    gbest = -1
    for gb in range(G):
        if gb == gref:
            continue
        total = 0.0
        for x in range(X):
            mn = np.inf
            hsel = 0
            for hb in range(H):
                c, _ = transport_kernel(mu[x], w[x], gb * H + hb, eps, mask)
                if c < mn:
                    mn = c
                    hsel = hb
            total += mn
            tmp[x] = hsel
        if total < best:
            best = total
            gbest = gb
            for x in range(X):
                hbar[x] = tmp[x]
    return best, gbest


# --------------------------------------------------------------------------
# public API on ModelTensor / (X, G, H) allocations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConfusingSet:
    task: int
    challenger: Pair
    members: FrozenSet[Pair]
    weighted_mean: float


class RhoValue(NamedTuple):
    value: float
    gbar: int
    hbar: Tuple[int, ...]


def _alloc(model: ModelTensor, alloc) -> np.ndarray:
    w = np.asarray(alloc, dtype=np.float64)
    if w.shape != model.means.shape:
        raise UsageError(f"allocation shape {w.shape} does not match model {model.means.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise UsageError("allocation weights must be finite and nonnegative")
    return w


def _normalized(model: ModelTensor, q) -> np.ndarray:
    w = _alloc(model, q)
    if abs(w.sum() - 1.0) > 1e-9:
        raise UsageError(f"allocation must sum to 1 (got {w.sum()!r})")
    return w


def weighted_mean(model: ModelTensor, x: int, alloc, members: Iterable[Pair]) -> float:
    w = _alloc(model, alloc)
    members = list(members)
    if not members:
        raise UsageError("members must be nonempty")
    tw = sum(w[x, g, h] for g, h in members)
    if tw <= 0.0:
        raise DegenerateWeightError(f"members {members} carry zero weight in task {x}")
    return float(sum(w[x, g, h] * model.means[x, g, h] for g, h in members) / tw)


def _check_mandatory(model, w, x, challenger):
    gb, hb = challenger
    if not (0 <= gb < model.G and 0 <= hb < model.H):
        raise UsageError(f"challenger {challenger!r} out of range")
    top = np.unravel_index(np.argmax(model.means[x]), model.means[x].shape)
    for g, h in (top, challenger):
        if w[x, g, h] <= 0.0:
            raise DegenerateWeightError(
                f"mandatory arm {(int(g), int(h))} has zero weight in task {x}")


def confusing_set(model: ModelTensor, x: int, challenger: Pair, alloc) -> ConfusingSet:
    """Arms that must move to the pooled mean for ``challenger`` to become optimal."""
    w = _alloc(model, alloc)
    _check_mandatory(model, w, x, challenger)
    H = model.H
    mask = np.zeros(model.G * H, dtype=np.bool_)
    m, _ = uset_kernel(model.flat()[x], np.ascontiguousarray(w[x].ravel()),
                       challenger[0] * H + challenger[1], mask)
    members = frozenset((int(a // H), int(a % H)) for a in np.flatnonzero(mask))
    return ConfusingSet(x, (int(challenger[0]), int(challenger[1])), members, float(m))


def confusing_set_recursive(model: ModelTensor, x: int, challenger: Pair, alloc) -> ConfusingSet:
    """Same set built by enlargement: start from the best arm and the challenger,
    then keep adding the highest excluded arm while it sits at or above the pooled mean.
    """
    w = _alloc(model, alloc)
    _check_mandatory(model, w, x, challenger)
    mu = model.means[x]
    chal = (int(challenger[0]), int(challenger[1]))
    pairs = [(g, h) for g in range(model.G) for h in range(model.H)]
    top = max(pairs, key=lambda p: mu[p])
    members = {top, chal}
    rest = sorted((p for p in pairs if p not in members), key=lambda p: -mu[p])
    for p in rest:
        m = weighted_mean(model, x, w, members | {p})
        if m - mu[p] > TIE_RTOL:
            break
        members.add(p)
    m = weighted_mean(model, x, w, members)
    return ConfusingSet(x, chal, frozenset(members), m)


def transport_cost(model: ModelTensor, x: int, challenger: Pair, alloc,
                   eps: float = DEFAULT_EPS) -> float:
    """Minimal weighted KL to make ``challenger`` the best arm of task ``x``."""
    w = _alloc(model, alloc)
    _check_mandatory(model, w, x, challenger)
    H = model.H
    mask = np.zeros(model.G * H, dtype=np.bool_)
    c, _ = transport_kernel(model.flat()[x], np.ascontiguousarray(w[x].ravel()),
                            challenger[0] * H + challenger[1], eps, mask)
    return float(c)


def _require_class(mu_flat, G, H):
    hstar = np.zeros(mu_flat.shape[0], dtype=np.int64)
    g = structure_kernel(mu_flat, G, H, hstar)
    if g < 0:
        raise StructureError("model has no unique shared optimal representation")
    return g, hstar


def rho_with_minimizer(model: ModelTensor, q, eps: float = DEFAULT_EPS) -> RhoValue:
    w = _normalized(model, q)
    mu = model.flat()
    gstar, _ = _require_class(mu, model.G, model.H)
    hbar = np.zeros(model.X, dtype=np.int64)
    val, gb = rho_kernel(mu, np.ascontiguousarray(w.reshape(mu.shape)),
                         model.G, model.H, gstar, eps, hbar)
    return RhoValue(float(val), int(gb), tuple(int(h) for h in hbar))


def rho(model: ModelTensor, q, eps: float = DEFAULT_EPS) -> float:
    """Worst-case transport cost of allocation ``q`` against every wrong representation."""
    return rho_with_minimizer(model, q, eps).value


def rho_sigma(model: ModelTensor, q, sigma: float, eps: float = DEFAULT_EPS) -> float:
    if not sigma > 0:
        raise UsageError(f"sigma must be positive, got {sigma!r}")
    w = np.asarray(q, dtype=np.float64)
    return rho(model, q, eps) - float(np.dot(w.ravel(), w.ravel())) / (2.0 * sigma)


def glrt_statistic(counts: CountTensor, candidate: int, eps: float = DEFAULT_EPS) -> float:
    """Generalized log-likelihood ratio for "``candidate`` is the shared representation"."""
    X, G, H = counts.shape
    if not 0 <= candidate < G:
        raise UsageError(f"candidate representation {candidate} out of range")
    mu = np.ascontiguousarray(counts.empirical_means().reshape(X, G * H))
    _require_class(mu, G, H)
    w = np.ascontiguousarray(counts.pulls.reshape(X, G * H).astype(np.float64))
    hbar = np.zeros(X, dtype=np.int64)
    val, _ = rho_kernel(mu, w, G, H, candidate, eps, hbar)
    return float(val)
