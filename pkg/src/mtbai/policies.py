"""Online identification: D-tracking with forced exploration plus GLRT stopping.

One compiled engine drives every online algorithm. The two-phase procedure
runs it on the full model to find the representation, then once per task on
the predictors of the chosen representation. The unstructured baseline runs it
on a task's flattened arms. The single-step Python functions call the same
kernels the engine loop uses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from numba import njit

from .divergence import DEFAULT_EPS
from .errors import UsageError
from .model import CountTensor, ModelTensor, membership_check, structure_kernel
from .oracle import SolverOptions, lipschitz_kernel, mirror_ascent_kernel, start_point
from .thresholds import ThresholdParams, beta_constant
from .transport import rho_kernel

OSRL, SIMPLE = 0, 1
STATUS_OK, STATUS_MAX_ROUNDS, STATUS_NUMERICAL = 0, 1, 2
DEFAULT_MAX_ROUNDS = 10_000_000

# meta slots shared between Python state and the kernels
HAS_CACHE, CACHE_ROUND, FAILED = 0, 1, 2


@njit(cache=True)
def empirical_kernel(N, S):
    out = np.zeros(N.shape)
    for x in range(N.shape[0]):
        for a in range(N.shape[1]):
            if N[x, a] > 0:
                out[x, a] = S[x, a] / N[x, a]
    return out


@njit(cache=True)
def step_kernel(N, S, t, G, H, q_cache, meta, period, sigma, it_cold, it_warm, tol, clip,
                mix, lip_floor, eps, info):
    """Choose the next arm ``(x, a)``; refresh the cached allocation when due.

    ``info[0]`` receives the solved objective value, ``info[1]`` is set to 1
    when the cache was refreshed this round.
    """
    X, K = N.shape
    n = X * K
    info[1] = 0.0
    thr = math.sqrt(t) - n / 2.0
    under = False
    lx, la = 0, 0
    for x in range(X):
        for a in range(K):
            if N[x, a] < thr:
                under = True
            if N[x, a] < N[lx, la]:
                lx, la = x, a
    if under:
        return lx, la
    mu = empirical_kernel(N, S)
    hstar = np.zeros(X, dtype=np.int64)
    gstar = structure_kernel(mu, G, H, hstar)
    if gstar < 0:
        return lx, la
    if meta[HAS_CACHE] == 0 or (t % period == 0 and meta[CACHE_ROUND] != t):
        warm = meta[HAS_CACHE] == 1
        L = lipschitz_kernel(mu, eps, lip_floor)
        q0 = start_point(X, K, q_cache, warm, mix)
        iters = it_warm if warm else it_cold
        history = np.zeros(0)
        qb, val, _, _, ok = mirror_ascent_kernel(mu, G, H, gstar, q0, sigma, iters, tol,
                                                 clip, L, eps, history)
        if not ok:
            meta[FAILED] = 1
            return lx, la
        q_cache[:, :] = qb
        meta[HAS_CACHE] = 1
        meta[CACHE_ROUND] = t
        info[0] = val
        info[1] = 1.0
    bx, ba = 0, 0
    best = -np.inf
    for x in range(X):
        for a in range(K):
            v = t * q_cache[x, a] - N[x, a]
            if v > best:
                best = v
                bx, ba = x, a
    return bx, ba


@njit(cache=True)
def stop_kernel(N, S, G, H, kind, beta_const, delta, eps):
    """Return (stop, statistic, threshold); never stops outside the structured class."""
    X, K = N.shape
    mu = empirical_kernel(N, S)
    t = 0
    b = 0.0
    for x in range(X):
        for a in range(K):
            t += N[x, a]
            if kind == OSRL and N[x, a] >= 1:
                b += 3.0 * math.log(1.0 + math.log(N[x, a]))
    if kind == OSRL:
        beta = b + beta_const
    else:
        beta = math.log(2.0 * max(t, 1) * (X * K - 1) / delta)
    hstar = np.zeros(X, dtype=np.int64)
    gstar = structure_kernel(mu, G, H, hstar)
    if gstar < 0:
        return False, 0.0, beta
    hbar = np.zeros(X, dtype=np.int64)
    w = N.astype(np.float64)
    psi, _ = rho_kernel(mu, w, G, H, gstar, eps, hbar)
    return psi > beta, psi, beta


@njit(cache=True)
def _grow(buf, n):
    if n < buf.shape[0]:
        return buf
    out = np.full((buf.shape[0] * 2 + 16, buf.shape[1]), np.nan)
    out[:buf.shape[0]] = buf
    return out


@njit(cache=True)
def engine_kernel(mu, G, H, kind, beta_const, delta, period, sigma, it_cold, it_warm, tol,
                  clip, mix, lip_floor, eps, max_rounds, seed, log_series, check_tracking):
    X, K = mu.shape
    n = X * K
    np.random.seed(seed)
    N = np.zeros((X, K), dtype=np.int64)
    S = np.zeros((X, K))
    q_cache = np.zeros((X, K))
    meta = np.zeros(3, dtype=np.int64)
    info = np.zeros(2)
    series = np.full((64, 6), np.nan)
    n_series = 0
    prev_mu = np.zeros((X, K))
    prev_q = np.zeros((X, K))
    violations = 0
    status = STATUS_OK
    t = 0
    psi, beta = 0.0, 0.0
    while True:
        if t > 0:
            stop, psi, beta = stop_kernel(N, S, G, H, kind, beta_const, delta, eps)
            if stop:
                break
        if t >= max_rounds:
            status = STATUS_MAX_ROUNDS
            break
        x, a = step_kernel(N, S, t, G, H, q_cache, meta, period, sigma, it_cold, it_warm, tol,
                           clip, mix, lip_floor, eps, info)
        if meta[FAILED] != 0:
            status = STATUS_NUMERICAL
            break
        if log_series and info[1] > 0:
            series = _grow(series, n_series)
            muh = empirical_kernel(N, S)
            row = series[n_series]
            row[0] = t
            row[1] = math.sqrt(np.sum(muh * muh))
            row[3] = info[0]
            if n_series > 0:
                d = muh - prev_mu
                row[2] = math.sqrt(np.sum(d * d)) / math.sqrt(n)
                dq = q_cache - prev_q
                row[4] = math.sqrt(np.sum(dq * dq)) / math.sqrt(n)
                row[5] = np.max(np.abs(dq))
            prev_mu[:, :] = muh
            prev_q[:, :] = q_cache
            n_series += 1
        r = 1 if np.random.random() < mu[x, a] else 0
        N[x, a] += 1
        S[x, a] += r
        t += 1
        if check_tracking:
            lower = math.sqrt(t) - n / 2.0
            if lower < 0.0:
                lower = 0.0
            for y in range(X):
                for b in range(K):
                    if not N[y, b] > lower - 1.0:
                        violations += 1
    return t, N, S, status, violations, series[:n_series].copy(), psi, beta


# --------------------------------------------------------------------------
# Python surface
# --------------------------------------------------------------------------


@dataclass
class EngineResult:
    tau: int
    pulls: np.ndarray
    reward_sums: np.ndarray
    status: int
    tracking_violations: int
    series: np.ndarray
    statistic: float
    threshold: float

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK

    def empirical_means(self) -> np.ndarray:
        out = np.zeros(self.pulls.shape)
        np.divide(self.reward_sums, self.pulls, out=out, where=self.pulls > 0)
        return out


def _threshold_args(model: ModelTensor, threshold: ThresholdParams):
    if threshold.variant == "osrl":
        return OSRL, beta_constant(model.X, model.G, model.H, float(threshold.delta))
    return SIMPLE, 0.0


def run_engine(model: ModelTensor, threshold: ThresholdParams, opts: SolverOptions, seed: int,
               recompute_period: Optional[int] = None, log_series: bool = False,
               check_tracking: bool = False, max_rounds: int = DEFAULT_MAX_ROUNDS,
               eps: float = DEFAULT_EPS) -> EngineResult:
    """Run tracking + stopping on ``model`` until the GLRT crosses the threshold.

    Rewards are ``uniform < mean`` from a Mersenne Twister seeded with ``seed``
    (the stream of ``numpy.random.RandomState(seed)``).
    """
    period = recompute_period or model.n_arms
    if period < 1:
        raise UsageError("recompute_period must be >= 1")
    kind, bconst = _threshold_args(model, threshold)
    t, N, S, status, viol, series, psi, beta = engine_kernel(
        model.flat(), model.G, model.H, kind, bconst, float(threshold.delta), int(period),
        float(opts.sigma), int(opts.max_iters_cold), int(opts.max_iters_warm), float(opts.tol),
        float(opts.grad_clip), float(opts.warmstart_mix), float(opts.lipschitz_floor), eps,
        int(max_rounds), np.uint32(seed), bool(log_series), bool(check_tracking))
    shape = model.means.shape
    return EngineResult(int(t), N.reshape(shape), S.reshape(shape), int(status), int(viol),
                        series, float(psi), float(beta))


@dataclass
class Phase1State:
    """Mutable state of the representation-identification phase for one replicate."""

    counts: CountTensor
    delta_g: float = 0.1
    delta_h: float = 0.1
    opts: SolverOptions = field(default_factory=SolverOptions)
    recompute_period: Optional[int] = None
    threshold: Optional[ThresholdParams] = None
    cached_q: Optional[np.ndarray] = None
    cached_round: int = -1
    last_objective: float = float("nan")
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        X, G, H = self.counts.shape
        if self.recompute_period is None:
            self.recompute_period = X * G * H
        if self.recompute_period < 1:
            raise UsageError("recompute_period must be >= 1")
        if self.threshold is None:
            self.threshold = ThresholdParams("osrl", self.delta_g)

    @classmethod
    def fresh(cls, model: ModelTensor, **kwargs) -> "Phase1State":
        return cls(CountTensor.zeros(model.X, model.G, model.H), **kwargs)


def _flat_counts(counts: CountTensor):
    X, G, H = counts.shape
    return (np.ascontiguousarray(counts.pulls.reshape(X, G * H)),
            np.ascontiguousarray(counts.reward_sums.reshape(X, G * H)))


def phase1_step(state: Phase1State, model: ModelTensor) -> Tuple[int, int, int]:
    """Next arm to pull: forced exploration, or tracking of the cached optimal allocation."""
    X, G, H = state.counts.shape
    if (X, G, H) != model.means.shape:
        raise UsageError("state and model shapes differ")
    N, S = _flat_counts(state.counts)
    has = state.cached_q is not None
    q = (np.ascontiguousarray(state.cached_q.reshape(X, G * H), dtype=np.float64).copy()
         if has else np.zeros((X, G * H)))
    meta = np.array([int(has), state.cached_round, 0], dtype=np.int64)
    info = np.zeros(2)
    o = state.opts
    x, a = step_kernel(N, S, state.counts.round, G, H, q, meta, int(state.recompute_period),
                       float(o.sigma), int(o.max_iters_cold), int(o.max_iters_warm), float(o.tol),
                       float(o.grad_clip), float(o.warmstart_mix), float(o.lipschitz_floor),
                       state.eps, info)
    if meta[HAS_CACHE]:
        state.cached_q = q.reshape(X, G, H)
        state.cached_round = int(meta[CACHE_ROUND])
    if info[1] > 0:
        state.last_objective = float(info[0])
    return int(x), int(a // H), int(a % H)


def phase1_should_stop(state: Phase1State, model: ModelTensor = None) -> Tuple[bool, float, float]:
    """Compare the GLRT statistic at the empirical best representation with the threshold."""
    X, G, H = state.counts.shape
    N, S = _flat_counts(state.counts)
    if state.threshold.variant == "osrl":
        kind, bconst = OSRL, beta_constant(X, G, H, float(state.threshold.delta))
    else:
        kind, bconst = SIMPLE, 0.0
    stop, psi, beta = stop_kernel(N, S, G, H, kind, bconst, float(state.threshold.delta),
                                  state.eps)
    return bool(stop), float(psi), float(beta)


def phase1_decide(state: Phase1State) -> int:
    """The representation carried by every task's empirical best arm."""
    stop, _, _ = phase1_should_stop(state)
    if not stop:
        raise UsageError("the stopping condition has not been met")
    return decide_representation(state.counts.empirical_means())


def decide_representation(means) -> int:
    verdict = membership_check(ModelTensor(means))
    if not verdict.in_class:
        raise UsageError("empirical model has no shared best representation")
    return verdict.best_representation


@dataclass
class Phase2Result:
    h_hat: Tuple[int, ...]
    tau_h: int
    task_taus: Tuple[int, ...]
    status: int = STATUS_OK
    pulls: Optional[np.ndarray] = None


def phase2_run(model: ModelTensor, g_hat: int, delta_h: float, opts: SolverOptions,
               rng: np.random.Generator, max_rounds: int = DEFAULT_MAX_ROUNDS) -> Phase2Result:
    """Identify each task's best predictor under representation ``g_hat``, task by task."""
    if not 0 <= g_hat < model.G:
        raise UsageError(f"g_hat={g_hat} out of range")
    if model.H == 1:
        return Phase2Result(tuple(0 for _ in range(model.X)), 0, tuple(0 for _ in range(model.X)),
                            pulls=np.zeros((model.X, model.H), dtype=np.int64))
    th = ThresholdParams("simple", delta_h)
    h_hat, taus = [], []
    pulls = np.zeros((model.X, model.H), dtype=np.int64)
    status = STATUS_OK
    for x in range(model.X):
        sub = model.reduced(x, g_hat)
        res = run_engine(sub, th, opts, int(rng.integers(2 ** 32)), max_rounds=max_rounds)
        taus.append(res.tau)
        pulls[x] = res.pulls.ravel()
        status = max(status, res.status)
        h_hat.append(int(np.argmax(res.empirical_means().ravel())))
    return Phase2Result(tuple(h_hat), int(sum(taus)), tuple(taus), status, pulls)


@dataclass
class TasResult:
    pairs: Tuple[Tuple[int, int, int], ...]
    tau: int
    tasks: Tuple[int, ...]
    status: int = STATUS_OK
    pulls: Optional[np.ndarray] = None


def tas_baseline(model: ModelTensor, delta: float, task_mode: str, opts: SolverOptions,
                 rng: np.random.Generator, max_rounds: int = DEFAULT_MAX_ROUNDS) -> TasResult:
    """Unstructured baseline: identify the best ``(g, h)`` pair of a task ignoring sharing.

    ``task_mode='one-random'`` picks one task uniformly; ``'all-sum'`` runs every
    task in turn and adds the stopping times.
    """
    if task_mode == "one-random":
        tasks = [int(rng.integers(model.X))]
    elif task_mode == "all-sum":
        tasks = list(range(model.X))
    else:
        raise UsageError(f"unknown task_mode {task_mode!r}")
    th = ThresholdParams("simple", delta)
    pairs, tau = [], 0
    pulls = np.zeros(model.means.shape, dtype=np.int64)
    status = STATUS_OK
    for x in tasks:
        res = run_engine(model.reduced(x), th, opts, int(rng.integers(2 ** 32)),
                         max_rounds=max_rounds)
        tau += res.tau
        status = max(status, res.status)
        pulls[x] = res.pulls.reshape(model.G, model.H)
        a = int(np.argmax(res.empirical_means().ravel()))
        pairs.append((x, a // model.H, a % model.H))
    return TasResult(tuple(pairs), tau, tuple(tasks), status, pulls)


@dataclass
class OsrlResult:
    g_hat: int
    h_hat: Tuple[int, ...]
    tau_g: int
    tau_h: int
    phase1: EngineResult
    phase2: Optional[Phase2Result]
    status: int

    @property
    def tau(self) -> int:
        return self.tau_g + self.tau_h


def osrl_run(model: ModelTensor, delta_g: float, delta_h: float, opts: SolverOptions,
             rng: np.random.Generator, recompute_period: Optional[int] = None,
             log_series: bool = False, check_tracking: bool = False,
             max_rounds: int = DEFAULT_MAX_ROUNDS) -> OsrlResult:
    """Two-phase identification of the shared representation, then of each task's predictor."""
    p1 = run_engine(model, ThresholdParams("osrl", delta_g), opts, int(rng.integers(2 ** 32)),
                    recompute_period=recompute_period, log_series=log_series,
                    check_tracking=check_tracking, max_rounds=max_rounds)
    if not p1.ok:
        return OsrlResult(-1, (), p1.tau, 0, p1, None, p1.status)
    g_hat = decide_representation(p1.empirical_means())
    p2 = phase2_run(model, g_hat, delta_h, opts, rng, max_rounds=max_rounds)
    return OsrlResult(g_hat, p2.h_hat, p1.tau, p2.tau_h, p1, p2, max(p1.status, p2.status))
