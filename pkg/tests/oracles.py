"""Independent reference computations used by the tests.

Nothing here imports the package under test.
"""

import math

import numpy as np
from scipy import integrate, stats


def _scale_speed(kappa, sigma):
    k1 = kappa + 1.0
    c = 2.0 / (k1 * sigma ** 2)

    def s(y):
        return math.exp(c * abs(y) ** k1)

    def m(z):
        return 2.0 / sigma ** 2 * math.exp(-c * abs(z) ** k1)
    return s, m


def mean_cycle_duration(kappa, sigma, delta):
    """Exact mean of the time to reach ``|x| = delta`` from 0 plus the time back to 0.

    Both are solutions of ``(sigma**2/2) u'' + D u' = -1`` written with the
    scale density ``s`` and speed density ``m``.
    """
    s, m = _scale_speed(kappa, sigma)
    q = dict(epsabs=0.0, epsrel=1e-11, limit=200)
    out_from_zero = integrate.quad(lambda y: s(y) * integrate.quad(m, 0, y, **q)[0], 0, delta, **q)[0]
    back_to_zero = integrate.quad(lambda y: s(y) * integrate.quad(m, y, np.inf, **q)[0],
                                  0, delta, **q)[0]
    return out_from_zero + back_to_zero


def bm_first_passage_density(t, level):
    """Density of the first passage of standard BM from 0 to ``level > 0``."""
    t = np.asarray(t, dtype=float)
    return level / np.sqrt(2 * np.pi * t ** 3) * np.exp(-level ** 2 / (2 * t))


def bm_drift_survival(t, level, sigma, mu):
    """``P(T > t)`` for the first passage of ``sigma B + mu s`` to ``level > 0``.

    Inverse Gaussian cdf written independently of the package.
    """
    st = sigma * math.sqrt(t)
    cdf = stats.norm.cdf((mu * t - level) / st) + \
        math.exp(2 * mu * level / sigma ** 2) * stats.norm.cdf(-(mu * t + level) / st)
    return 1.0 - cdf


def exit_up_constant(mu, amp, a, x, b):
    """Upward exit probability for constant drift, plain-formula version."""
    if mu == 0:
        return (x - a) / (b - a)
    c = 2 * mu / amp ** 2
    return (1 - math.exp(-c * (x - a))) / (1 - math.exp(-c * (b - a)))


def exit_up_mc(drift, amp, a, x, b, replicas, dt, seed):
    """Euler-Maruyama exit from ``(a, b)`` with Brownian-bridge checks at both ends.

    Returns the fraction leaving through ``b`` and its standard error.
    """
    rng = np.random.default_rng(seed)
    pos = np.full(replicas, float(x))
    alive = np.ones(replicas, bool)
    up = np.zeros(replicas, bool)
    sq = amp * math.sqrt(dt)
    k = 2.0 / (amp * amp * dt)
    while alive.any():
        idx = np.flatnonzero(alive)
        xo = pos[idx]
        xn = xo + drift(xo) * dt + sq * rng.standard_normal(idx.size)
        u1, u2 = rng.random(idx.size), rng.random(idx.size)
        hit_b = (xn >= b) | (u1 < np.exp(-k * np.maximum(b - xo, 0) * np.maximum(b - xn, 0)))
        hit_a = (xn <= a) | (u2 < np.exp(-k * np.maximum(xo - a, 0) * np.maximum(xn - a, 0)))
        # both bridges fire only for vanishing dt; resolve by the nearer end
        both = hit_a & hit_b
        closer_b = (b - xn) < (xn - a)
        hit_b = np.where(both, closer_b, hit_b)
        hit_a = np.where(both, ~closer_b, hit_a)
        done = hit_a | hit_b
        up[idx[hit_b]] = True
        alive[idx[done]] = False
        pos[idx] = xn
    p = up.mean()
    return float(p), float(math.sqrt(p * (1 - p) / replicas))
