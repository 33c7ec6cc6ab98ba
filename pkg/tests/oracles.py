"""Independent reference implementations used only by the tests."""
import itertools
import math

import numpy as np
from scipy.optimize import linprog, minimize_scalar


def kl(a, b, eps=1e-12):
    b = min(max(b, eps), 1 - eps)
    out = 0.0
    if a > 0:
        out += a * math.log(a / b)
    if a < 1:
        out += (1 - a) * math.log((1 - a) / (1 - b))
    return out


def pooled_level_cost(mu, w, chal):
    """Cheapest alternative making ``chal`` optimal, as a 1-D problem over the common level d.

    Every arm above d is pulled down to d and the challenger is pushed up to d.
    """
    def f(d):
        c = w[chal] * kl(mu[chal], d) if d > mu[chal] else 0.0
        for a in range(len(mu)):
            if a != chal and mu[a] > d:
                c += w[a] * kl(mu[a], d)
        return c

    lo, hi = mu[chal], max(mu)
    if hi <= lo:
        return 0.0
    res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
    return min(res.fun, f(lo), f(hi))


def consistent_sets(mu, w, chal):
    """Every arm set S holding the top arm and ``chal`` that is self-consistent at its pooled mean."""
    K = len(mu)
    top = int(np.argmax(mu))
    others = [a for a in range(K) if a not in (top, chal)]
    out = []
    for r in range(len(others) + 1):
        for extra in itertools.combinations(others, r):
            S = {top, chal, *extra}
            m = sum(w[a] * mu[a] for a in S) / sum(w[a] for a in S)
            if all((a in S) == (mu[a] >= m) for a in range(K) if a != chal):
                out.append((frozenset(S), m))
    return out


def rho_enumerate(mu, w, gstar):
    """min over wrong representations and every predictor vector, inner cost by the 1-D oracle."""
    X, G, H = mu.shape
    best = math.inf
    for gb in range(G):
        if gb == gstar:
            continue
        for hv in itertools.product(range(H), repeat=X):
            tot = sum(pooled_level_cost(mu[x].ravel(), w[x].ravel(), gb * H + hv[x])
                      for x in range(X))
            best = min(best, tot)
    return best


def kelley_max(value_fn, grad_fn, n, iters=400, tol=1e-10):
    """Cutting-plane maximization of a concave function on the simplex."""
    q = np.full(n, 1.0 / n)
    cuts, best, qbest = [], -math.inf, q
    for _ in range(iters):
        qq = np.maximum(q, 1e-12)
        qq /= qq.sum()
        v, g = value_fn(qq), grad_fn(qq)
        if v > best:
            best, qbest = v, qq
        cuts.append((v, g, qq))
        A = [np.r_[-g_, 1.0] for v_, g_, q_ in cuts]
        b = [v_ - g_ @ q_ for v_, g_, q_ in cuts]
        res = linprog(np.r_[np.zeros(n), -1.0], A_ub=A, b_ub=b,
                      A_eq=[np.r_[np.ones(n), 0.0]], b_eq=[1.0],
                      bounds=[(0, 1)] * n + [(None, None)])
        q = res.x[:n]
        if -res.fun - best < tol:
            break
    return best, qbest
