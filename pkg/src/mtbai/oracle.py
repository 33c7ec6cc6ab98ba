"""Optimal allocation solver and the characteristic times built from it.

The regularized objective ``rho(q) - |q|^2 / (2 sigma)`` is concave on the
simplex. It is maximized by entropic mirror ascent using the closed-form
envelope supergradient: on the active challenger's confusing set the partial
derivative of the pooled cost is ``kl(mu, m)`` (the derivative through the
pooled mean vanishes because ``m`` is the weighted average), elsewhere zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .divergence import DEFAULT_EPS, js_kernel, kl_binary_risk, kl_kernel
from .errors import NumericalError, StructureError, UsageError
from .model import ModelTensor, membership_check
from .transport import _alloc, _normalized, _require_class, rho_kernel, uset_kernel

PATIENCE = 25
INTERIOR_FLOOR = 1e-12


@dataclass(frozen=True)
class SolverOptions:
    sigma: float = 1e5
    max_iters_cold: int = 3000
    max_iters_warm: int = 300
    tol: float = 1e-7
    grad_clip: float = 6.0
    warmstart_mix: float = 0.5
    lipschitz_floor: float = 1e-3

    def __post_init__(self):
        for name in ("sigma", "max_iters_cold", "max_iters_warm", "grad_clip", "lipschitz_floor"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not self.tol >= 0:
            raise UsageError(f"tol must be nonnegative, got {self.tol!r}")
        if not 0.0 <= self.warmstart_mix <= 1.0:
            raise UsageError(f"warmstart_mix must lie in [0, 1], got {self.warmstart_mix!r}")


@dataclass
class OracleSolution:
    q_star: np.ndarray
    rho_star: float
    c_sigma: float
    iterations: int
    converged: bool
    lipschitz: float
    best_objective_history: Optional[np.ndarray] = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {
            "q_star": self.q_star.tolist(),
            "rho_star": self.rho_star,
            "c_sigma": self.c_sigma,
            "iterations": self.iterations,
            "converged": self.converged,
        }


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------


@njit(cache=True)
def lipschitz_kernel(mu, eps, floor):
    flat = mu.ravel()
    n = flat.shape[0]
    L = floor
    for i in range(n):
        a = min(max(flat[i], eps), 1.0 - eps)
        for j in range(n):
            if i != j:
                v = kl_kernel(a, flat[j], eps)
                if v > L:
                    L = v
    return L


@njit(cache=True)
def grad_kernel(mu, q, G, H, gstar, sigma, clip, eps, grad):
    """Write the clamped supergradient of the regularized objective into ``grad``; return its value."""
    X, K = mu.shape
    hbar = np.zeros(X, dtype=np.int64)
    val, gb = rho_kernel(mu, q, G, H, gstar, eps, hbar)
    mask = np.zeros(K, dtype=np.bool_)
    sq = 0.0
    for x in range(X):
        m, _ = uset_kernel(mu[x], q[x], gb * H + hbar[x], mask)
        for a in range(K):
            sq += q[x, a] * q[x, a]
            v = -q[x, a] / sigma
            if mask[a]:
                v += kl_kernel(mu[x, a], m, eps)
            if v > clip:
                v = clip
            elif v < -clip:
                v = -clip
            grad[x, a] = v
    return val - sq / (2.0 * sigma)


@njit(cache=True)
def mirror_ascent_kernel(mu, G, H, gstar, q0, sigma, max_iters, tol, clip, L, eps, history):
    """Entropic mirror ascent from ``q0``; returns (best q, best value, iterations, converged, ok)."""
    q = q0.copy()
    n = q.size
    grad = np.zeros_like(q)
    qbest = q.copy()
    best = -np.inf
    scale = math.sqrt(2.0 * math.log(n)) / L if n > 1 else 0.0
    stall = 0
    iters = 0
    converged = False
    for k in range(1, max_iters + 1):
        iters = k
        val = grad_kernel(mu, q, G, H, gstar, sigma, clip, eps, grad)
        if not np.isfinite(val):
            return qbest, val, iters, False, False
        rel = 0.0
        if val > best:
            rel = np.inf if best == -np.inf else (val - best) / max(abs(val), 1e-300)
            best = val
            qbest[:, :] = q
        if k <= history.shape[0]:
            history[k - 1] = best
        if rel < tol:
            stall += 1
            if stall >= PATIENCE:
                converged = True
                break
        else:
            stall = 0
        step = scale / math.sqrt(k)
        zmax = -np.inf
        for x in range(q.shape[0]):
            for a in range(q.shape[1]):
                z = math.log(q[x, a]) + step * grad[x, a]
                q[x, a] = z
                if z > zmax:
                    zmax = z
        tot = 0.0
        for x in range(q.shape[0]):
            for a in range(q.shape[1]):
                v = math.exp(q[x, a] - zmax)
                q[x, a] = v
                tot += v
        tot2 = 0.0
        for x in range(q.shape[0]):
            for a in range(q.shape[1]):
                v = q[x, a] / tot
                if v < INTERIOR_FLOOR:
                    v = INTERIOR_FLOOR
                q[x, a] = v
                tot2 += v
        for x in range(q.shape[0]):
            for a in range(q.shape[1]):
                q[x, a] /= tot2
    return qbest, best, iters, converged, True


@njit(cache=True)
def start_point(shape0, shape1, warm, has_warm, mix):
    n = shape0 * shape1
    q = np.full((shape0, shape1), 1.0 / n)
    if has_warm:
        for x in range(shape0):
            for a in range(shape1):
                q[x, a] = mix * warm[x, a] + (1.0 - mix) / n
        tot = 0.0
        for x in range(shape0):
            for a in range(shape1):
                if q[x, a] < INTERIOR_FLOOR:
                    q[x, a] = INTERIOR_FLOOR
                tot += q[x, a]
        for x in range(shape0):
            for a in range(shape1):
                q[x, a] /= tot
    return q


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------


def lipschitz_constant(model: ModelTensor, floor: float = 1e-3, eps: float = DEFAULT_EPS) -> float:
    """Largest pairwise KL between (clamped) means, floored."""
    return float(lipschitz_kernel(model.flat(), eps, floor))


def supergradient(model: ModelTensor, q, opts: SolverOptions = SolverOptions(),
                  eps: float = DEFAULT_EPS) -> np.ndarray:
    w = _normalized(model, q)
    if np.any(w <= 0):
        raise UsageError("supergradient needs a strictly positive allocation")
    mu = model.flat()
    gstar, _ = _require_class(mu, model.G, model.H)
    grad = np.zeros_like(mu)
    grad_kernel(mu, np.ascontiguousarray(w.reshape(mu.shape)), model.G, model.H, gstar,
                float(opts.sigma), float(opts.grad_clip), eps, grad)
    return grad.reshape(model.means.shape)


def solve_allocation(model: ModelTensor, opts: SolverOptions = SolverOptions(),
                     warm_start=None, max_iters: Optional[int] = None,
                     record_history: bool = False, eps: float = DEFAULT_EPS) -> OracleSolution:
    """Maximize the regularized objective over the simplex.

    Starts at the uniform allocation, or at ``mix * warm_start + (1 - mix) * uniform``.
    The best iterate is returned.
    """
    mu = model.flat()
    gstar, _ = _require_class(mu, model.G, model.H)
    has_warm = warm_start is not None
    warm = (np.ascontiguousarray(_normalized(model, warm_start).reshape(mu.shape))
            if has_warm else np.zeros_like(mu))
    if max_iters is None:
        max_iters = opts.max_iters_warm if has_warm else opts.max_iters_cold
    L = lipschitz_kernel(mu, eps, opts.lipschitz_floor)
    q0 = start_point(mu.shape[0], mu.shape[1], warm, has_warm, opts.warmstart_mix)
    history = np.full(max_iters if record_history else 0, np.nan)
    qb, val, iters, converged, ok = mirror_ascent_kernel(
        mu, model.G, model.H, gstar, q0, float(opts.sigma), int(max_iters), float(opts.tol),
        float(opts.grad_clip), L, eps, history)
    if not ok or not np.isfinite(val):
        raise NumericalError("non-finite objective during mirror ascent",
                             {"iterations": iters, "lipschitz": L, "value": float(val)})
    if record_history:
        history = history[:iters]
    return OracleSolution(
        q_star=qb.reshape(model.means.shape),
        rho_star=float(val),
        c_sigma=1.0 / val if val > 0 else math.inf,
        iterations=int(iters),
        converged=bool(converged),
        lipschitz=float(L),
        best_objective_history=history if record_history else None,
    )


def char_time_G(model: ModelTensor, opts: SolverOptions, delta_g: float) -> float:
    """Regularized characteristic time for the representation, times kl(delta, 1 - delta)."""
    risk = kl_binary_risk(delta_g)
    if risk == 0.0:
        return 0.0
    return solve_allocation(model, opts).c_sigma * risk


def predictor_times(model: ModelTensor, opts: SolverOptions) -> np.ndarray:
    """Per-task characteristic time for identifying the best predictor under the shared representation."""
    verdict = membership_check(model)
    if not verdict.in_class:
        raise StructureError("model has no unique shared optimal representation")
    if model.H == 1:
        return np.zeros(model.X)
    g = verdict.best_representation
    return np.array([solve_allocation(model.reduced(x, g), opts).c_sigma for x in range(model.X)])


def char_time_H(model: ModelTensor, opts: SolverOptions, delta_h: float) -> float:
    risk = kl_binary_risk(delta_h)
    if model.H == 1:
        return 0.0
    return float(predictor_times(model, opts).sum()) * risk


@dataclass
class FeasibilityReport:
    predictor_values: np.ndarray
    predictor_slack: np.ndarray
    representation_value: float
    representation_slack: float
    feasible: bool
    degenerate_tasks: tuple


def predictor_constraint(model: ModelTensor, eta, eps: float = DEFAULT_EPS):
    """Per task: min over h != h* of (eta_best + eta_h) * I_alpha(mu_best, mu_h)."""
    w = _alloc(model, eta)
    verdict = membership_check(model)
    if not verdict.in_class:
        raise StructureError("model has no unique shared optimal representation")
    g = verdict.best_representation
    values = np.full(model.X, np.inf)
    degenerate = []
    for x in range(model.X):
        hs = verdict.best_predictors[x]
        nb = w[x, g, hs]
        for h in range(model.H):
            if h == hs:
                continue
            tot = nb + w[x, g, h]
            if tot <= 0.0:
                degenerate.append(x)
                v = 0.0
            else:
                v = tot * js_kernel(nb / tot, model.means[x, g, hs], model.means[x, g, h], eps)
            values[x] = min(values[x], v)
    return values, tuple(sorted(set(degenerate)))


def representation_constraint(model: ModelTensor, eta, eps: float = DEFAULT_EPS) -> float:
    """min over wrong representations of the summed per-task transport costs, for raw budgets."""
    w = _alloc(model, eta)
    mu = model.flat()
    gstar, _ = _require_class(mu, model.G, model.H)
    hbar = np.zeros(model.X, dtype=np.int64)
    val, _ = rho_kernel(mu, np.ascontiguousarray(w.reshape(mu.shape)), model.G, model.H,
                        gstar, eps, hbar)
    return float(val)


def check_feasibility(model: ModelTensor, eta, delta_g: float, delta_h: float) -> FeasibilityReport:
    """Evaluate both lower-bound constraints for a sampling budget ``eta``."""
    kg, kh = kl_binary_risk(delta_g), kl_binary_risk(delta_h)
    pv, degenerate = predictor_constraint(model, eta)
    rv = representation_constraint(model, eta)
    pslack = pv - kh
    rslack = rv - kg
    feasible = bool(np.all(pslack >= 0) and rslack >= 0)
    return FeasibilityReport(pv, pslack, rv, rslack, feasible, degenerate)


def split_budget(model: ModelTensor, opts: SolverOptions, delta_g: float, delta_h: float):
    """Budgets meeting each constraint separately; their sum meets both.

    Returns ``(eta_g, eta_h)``. Each is a solved allocation scaled up until its
    constraint binds.
    """
    verdict = membership_check(model)
    if not verdict.in_class:
        raise StructureError("model has no unique shared optimal representation")
    g = verdict.best_representation
    kg, kh = kl_binary_risk(delta_g), kl_binary_risk(delta_h)
    q = solve_allocation(model, opts).q_star
    eta_g = q * (kg / representation_constraint(model, q)) * (1 + 1e-9)
    eta_h = np.zeros_like(q)
    if model.H > 1:
        for x in range(model.X):
            qx = solve_allocation(model.reduced(x, g), opts).q_star.ravel()
            block = np.zeros_like(q)
            block[x, g, :] = qx
            vals, _ = predictor_constraint(model, block)
            eta_h[x, g, :] = qx * (kh / vals[x]) * (1 + 1e-9)
    return eta_g, eta_h
