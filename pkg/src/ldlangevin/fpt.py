"""First-passage densities, their upper bounds and exit probabilities.

For a unit diffusion ``dY = mu(Y) dt + dB`` started at ``x`` and a boundary
``g`` the passage density is bounded by

    (1/t) (|x - g(t)| + K t) q(t, x, g(t)) exp(G(g(t)) - G(x) - t M / 2)

where ``q`` is the heat kernel, ``G`` the antiderivative of ``mu`` and ``M``
the essential infimum of ``mu' + mu**2`` on the side of the boundary that
the path lives on.  A constant-amplitude diffusion ``dX = nu(X) dt + sigma dB``
maps to this setting through ``Y = X / sigma``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize, stats

from .drift import DriftSpec
from .errors import InvalidParameterError
from .noise import BRIDGE, BLOCK, NoiseStream

__all__ = [
    "UnitDiffusion", "lamperti", "BoundaryTask", "heat_kernel", "density_bound",
    "essinf_numeric", "simulate_first_passage", "verify_density_bound", "FptReport",
    "bound_mgf", "exit_probability", "exit_probability_constant",
    "bm_drift_survival", "bm_drift_tail_bound", "bm_drift_tail_bound_corrected",
]


def heat_kernel(t, y, z):
    """Transition density of standard Brownian motion from ``y`` to ``z``."""
    t = np.asarray(t, dtype=float)
    return np.exp(-(z - y) ** 2 / (2 * t)) / np.sqrt(2 * np.pi * t)


def _branch_inf(c, q, s, zlo, zhi, sigma):
    # inf over z in [zlo, zhi] of f(z) = a z**(q-1) + c**2 z**(2q) / sigma**2,
    # a = c q s, where z = |x| and s the sign of x on the branch
    s2 = sigma * sigma
    if q == 0:
        return c * c / s2
    a = c * q * s

    def f(z):
        if math.isinf(z):
            return math.inf
        if z == 0.0:
            if q < 1:
                return -math.inf if a < 0 else (math.inf if a > 0 else 0.0)
            return a if q == 1 else 0.0
        return a * z ** (q - 1) + c * c * z ** (2 * q) / s2

    cand = [f(zlo), f(zhi)]
    rhs = -a * (q - 1) * s2 / (2 * q * c * c)
    if rhs > 0:
        zc = rhs ** (1.0 / (q + 1))
        if zlo < zc < zhi:
            cand.append(f(zc))
    return min(cand)


def essinf_numeric(fun: Callable, lo: float, hi: float, tol: float = 1e-6,
                   cutoff: float = 50.0) -> float:
    """Grid minimum of ``fun`` on ``[lo, hi]`` refined until stable to ``tol``.

    Infinite ends are truncated at ``+-cutoff`` which is doubled until the
    minimum stops moving.
    """
    def grid_min(a, b, n):
        xs = np.linspace(a, b, n)
        with np.errstate(all="ignore"):
            v = np.asarray(fun(xs), dtype=float)
        v = np.where(np.isnan(v), np.inf, v)
        i = int(np.argmin(v))
        best = float(v[i])
        lo_i, hi_i = xs[max(i - 1, 0)], xs[min(i + 1, n - 1)]
        if hi_i > lo_i and math.isfinite(best):
            res = optimize.minimize_scalar(lambda z: float(fun(np.array([z]))[0]),
                                           bounds=(lo_i, hi_i), method="bounded",
                                           options={"xatol": 1e-12})
            if res.fun < best:
                best = float(res.fun)
        return best

    prev = None
    R = cutoff
    for _ in range(12):
        a = max(lo, -R) if math.isinf(lo) else lo
        b = min(hi, R) if math.isinf(hi) else hi
        n = 2001
        cur = grid_min(a, b, n)
        cur2 = grid_min(a, b, 4 * n)
        cur = min(cur, cur2)
        if prev is not None and abs(cur - prev) <= tol * (1 + abs(cur)):
            return cur
        if not (math.isinf(lo) or math.isinf(hi)) and abs(cur2 - cur) <= tol:
            return cur
        prev = cur
        R *= 2
    return prev


@dataclass
class UnitDiffusion:
    """Unit-diffusion drift ``mu(y) = nu(sigma y) / sigma``.

    ``nu`` is a :class:`DriftSpec` (closed forms available) or a vectorised
    callable, in which case derivatives, antiderivatives and essential infima
    are computed numerically.
    """

    nu: object
    sigma: float

    @property
    def analytic(self):
        return isinstance(self.nu, DriftSpec)

    def mu(self, y):
        return np.asarray(self.nu(self.sigma * np.asarray(y, dtype=float)),
                          dtype=float) / self.sigma

    def mu_prime(self, y):
        x = self.sigma * np.asarray(y, dtype=float)
        if self.analytic:
            return self.nu.derivative(x)
        h = 1e-6 * np.maximum(1.0, np.abs(x))
        return (np.asarray(self.nu(x + h)) - np.asarray(self.nu(x - h))) / (2 * h)

    def _one_sided_q(self, y, lo, hi):
        # mu' + mu**2 with one-sided differences whose stencil stays in [lo, hi];
        # at a kink the smaller one-sided value is the essential one
        y = np.asarray(y, dtype=float)
        h = 1e-7 * np.maximum(1.0, np.abs(y))
        m0 = self.mu(y)
        fwd = np.where(y + h <= hi, (self.mu(y + h) - m0) / h, np.inf)
        bwd = np.where(y - h >= lo, (m0 - self.mu(y - h)) / h, np.inf)
        return np.minimum(fwd, bwd) + m0 ** 2

    def G(self, y):
        """``int_0^y mu``."""
        y = np.asarray(y, dtype=float)
        if self.analytic:
            return self.nu.antiderivative(self.sigma * y) / self.sigma ** 2
        out = np.array([integrate.quad(lambda z: float(self.mu(z)), 0.0, yi,
                                       limit=200)[0] for yi in np.atleast_1d(y)])
        return out[0] if y.ndim == 0 else out

    def essinf(self, lo: float, hi: float) -> float:
        """Essential infimum of ``mu' + mu**2`` over ``y`` in ``[lo, hi]``."""
        if lo > hi:
            raise InvalidParameterError("empty interval")
        if not self.analytic:
            return essinf_numeric(lambda y: self._one_sided_q(y, lo, hi), lo, hi)
        xl, xh = self.sigma * lo, self.sigma * hi
        best = math.inf
        for b in self.nu.branches():
            l, h = max(xl, b.lo), min(xh, b.hi)
            if l >= h:
                continue
            if b.q == 0:
                best = min(best, b.c * b.c / self.sigma ** 2)
                continue
            if l >= 0:
                best = min(best, _branch_inf(b.c, b.q, 1.0, l, h, self.sigma))
            else:
                best = min(best, _branch_inf(b.c, b.q, -1.0, -h, -l, self.sigma))
        return best


def lamperti(nu, sigma: float) -> UnitDiffusion:
    """Lamperti transform of ``dX = nu(X) dt + sigma dB`` for constant ``sigma``."""
    if not (sigma > 0 and math.isfinite(sigma)):
        raise InvalidParameterError("sigma must be positive and finite")
    return UnitDiffusion(nu, float(sigma))


@dataclass
class BoundaryTask:
    """Passage of a unit diffusion started at ``x`` through the boundary ``g``.

    Parameters
    ----------
    g : float or callable
        Boundary as a function of time.
    K : float
        One-sided Lipschitz constant.  For an upward passage the boundary may
        not decrease faster than ``K``, for a downward passage it may not
        increase faster than ``K``.
    direction : {"up", "down"}
    x : float
        Start point, below ``g(0)`` for ``up`` and above it for ``down``.
    T : float
        Horizon.
    """

    g: object
    K: float
    direction: str
    x: float
    T: float

    def __post_init__(self):
        if self.direction not in ("up", "down"):
            raise InvalidParameterError("direction must be 'up' or 'down'")
        if not (self.K >= 0 and self.T > 0):
            raise InvalidParameterError("need K >= 0 and T > 0")
        g0 = float(self.gval(0.0))
        if self.direction == "up" and not g0 > self.x:
            raise InvalidParameterError("upward passage needs g(0) > x")
        if self.direction == "down" and not g0 < self.x:
            raise InvalidParameterError("downward passage needs g(0) < x")
        s = np.linspace(0.0, self.T, 2049)
        dg = np.diff(np.asarray(self.gval(s), dtype=float)) / np.diff(s)
        bad = dg < -self.K - 1e-9 if self.direction == "up" else dg > self.K + 1e-9
        if np.any(bad):
            raise InvalidParameterError("boundary violates the increment condition for K")

    @property
    def constant(self):
        return not callable(self.g)

    def gval(self, t):
        if callable(self.g):
            return self.g(t)
        return np.full_like(np.asarray(t, dtype=float), float(self.g))

    def g_range(self, t):
        """``(min, max)`` of ``g`` over ``[0, t]``."""
        if self.constant:
            return float(self.g), float(self.g)
        v = np.asarray(self.gval(np.linspace(0.0, t, 513)), dtype=float)
        return float(v.min()), float(v.max())


def _log_density_bound(task: BoundaryTask, ud: UnitDiffusion, t):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    g = np.asarray(task.gval(t), dtype=float)
    x = task.x
    if task.direction == "up":
        gap = g + task.K * t - x
    else:
        gap = x - g + task.K * t
    if task.constant:
        lo, hi = task.g_range(0.0)
        M = ud.essinf(-math.inf, hi) if task.direction == "up" else ud.essinf(lo, math.inf)
        M = np.full_like(t, M)
    else:
        Ms = []
        for ti in t:
            lo, hi = task.g_range(ti)
            Ms.append(ud.essinf(-math.inf, hi) if task.direction == "up"
                      else ud.essinf(lo, math.inf))
        M = np.array(Ms)
    if not np.all(np.isfinite(M)):
        raise InvalidParameterError("essential infimum is not finite; the bound is void")
    with np.errstate(divide="ignore"):
        lq = -(g - x) ** 2 / (2 * t) - 0.5 * np.log(2 * np.pi * t)
        out = np.log(gap) - np.log(t) + lq + ud.G(g) - ud.G(x) - 0.5 * t * M
    return out


def density_bound(task: BoundaryTask, ud: UnitDiffusion, t):
    """Upper bound on the first-passage density at time(s) ``t``."""
    tt = np.asarray(t, dtype=float)
    out = np.exp(_log_density_bound(task, ud, tt))
    return float(out[0]) if tt.ndim == 0 else out


def simulate_first_passage(ud: UnitDiffusion, task: BoundaryTask, dt: float,
                           seed: int = 0, replicas: int = 10000, bridge: bool = True,
                           chunk: int = 20000):
    """Euler-Maruyama passage times of the unit diffusion; ``inf`` if none by ``T``.

    Passages between grid points are detected with the bridge test for a
    linearly interpolated boundary.
    """
    n_steps = int(math.ceil(task.T / dt - 1e-9))
    up = task.direction == "up"
    stream = NoiseStream(seed)
    sq = math.sqrt(dt)
    out = np.full(replicas, np.inf)
    for c0 in range(0, replicas, chunk):
        ids = np.arange(c0, min(c0 + chunk, replicas))
        y = np.full(ids.size, float(task.x))
        live = np.arange(ids.size)
        step = 0
        while step < n_steps and live.size:
            nb = min(BLOCK, n_steps - step)
            z = stream.normal_matrix(ids[live], step, nb) * sq
            u = stream.uniform_matrix(ids[live], step, nb, BRIDGE) if bridge else None
            yl = y[live]
            alive = np.ones(live.size, dtype=bool)
            for j in range(nb):
                k = step + j
                t0 = k * dt
                g0 = float(task.gval(t0)) if not task.constant else float(task.g)
                g1 = float(task.gval(t0 + dt)) if not task.constant else g0
                yn = yl + ud.mu(yl) * dt + z[j]
                d0, d1 = (g0 - yl, g1 - yn) if up else (yl - g0, yn - g1)
                hit = alive & (d1 <= 0)
                frac = np.where(hit, d0 / np.where(d0 - d1 != 0, d0 - d1, 1.0), 0.0)
                if bridge:
                    with np.errstate(over="ignore"):
                        pb = np.exp(-2.0 * np.maximum(d0, 0) * np.maximum(d1, 0) / dt)
                    bh = alive & ~hit & (u[j] < pb)
                    frac = np.where(bh, d0 / (d0 + d1), frac)
                    hit = hit | bh
                if hit.any():
                    out[ids[live[hit]]] = t0 + dt * np.clip(frac[hit], 0.0, 1.0)
                    alive &= ~hit
                yl = yn
            y[live] = yl
            live = live[alive]
            step += nb
    return out


@dataclass
class FptReport:
    """Histogram of passage times against the bound."""

    bins: list
    empirical: list
    stderr: list
    bound: list
    bound_mid: list
    violations: list
    n_passages: int
    replicas: int
    inconclusive: bool = False
    extra: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps({"bins": self.bins, "empirical": self.empirical,
                           "bound": self.bound, "violations": self.violations,
                           "stderr": self.stderr, "bound_mid": self.bound_mid,
                           "n_passages": self.n_passages, "replicas": self.replicas,
                           "inconclusive": self.inconclusive}, sort_keys=True)


def _bin_average(fun, edges):
    # adaptive: passage densities can peak sharply inside the first bin
    out = np.empty(edges.size - 1)
    for i, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        val, _ = integrate.quad(lambda s: float(np.asarray(fun(np.array([s])))[0])
                                if s > 0 else 0.0, a, b, limit=200, epsrel=1e-10)
        out[i] = val / (b - a)
    return out


def verify_density_bound(ud: UnitDiffusion, task: BoundaryTask, replicas: int = 100000,
                         bins=40, dt: float = 1e-3, seed: int = 0, nsig: float = 3.0,
                         times=None, reference=None) -> FptReport:
    """Compare a passage-time histogram with the bound, bin by bin.

    The bound is averaged over each bin, which is what a histogram estimates.
    A bin violates the bound when ``empirical > bound + nsig * stderr``.

    Parameters
    ----------
    bins : int or array
        Number of equal bins on ``(0, T]`` or explicit edges.
    times : array, optional
        Precomputed passage times (skips the simulation).
    reference : callable, optional
        Density used in place of the bound, for exactness checks.
    """
    if times is None:
        times = simulate_first_passage(ud, task, dt, seed, replicas)
    replicas = times.size
    edges = np.linspace(0.0, task.T, bins + 1) if np.isscalar(bins) else np.asarray(bins)
    counts, _ = np.histogram(times[np.isfinite(times)], bins=edges)
    w = np.diff(edges)
    phat = counts / replicas
    emp = phat / w
    se = np.sqrt(np.maximum(phat * (1 - phat), 1.0 / replicas ** 2) / replicas) / w
    dens = reference if reference is not None else (lambda s: density_bound(task, ud, s))
    bavg = _bin_average(dens, edges)
    mids = 0.5 * (edges[1:] + edges[:-1])
    bmid = np.asarray(dens(mids), dtype=float)
    viol = [int(i) for i in np.flatnonzero(emp > bavg + nsig * se)]
    n_pass = int(np.isfinite(times).sum())
    return FptReport(edges.tolist(), emp.tolist(), se.tolist(), bavg.tolist(),
                     bmid.tolist(), viol, n_pass, int(replicas), n_pass == 0)


def bound_mgf(task: BoundaryTask, ud: UnitDiffusion, theta: float, t_max: float) -> float:
    """``int_0^t_max exp(theta t) * bound(t) dt`` by adaptive quadrature."""
    def integrand(s):
        if s <= 0:
            return 0.0
        return float(np.exp(theta * s + _log_density_bound(task, ud, s)[0]))

    edges = np.unique(np.concatenate(([0.0], np.geomspace(1e-3, t_max, 40))))
    tot = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        tot += integrate.quad(integrand, a, b, limit=200, epsrel=1e-10)[0]
    return tot


# -- exit probabilities through the scale function ------------------------------

def _antiderivative(drift, lo=None, hi=None, n=512):
    if isinstance(drift, DriftSpec):
        return drift.antiderivative, drift.breakpoints()
    if np.isscalar(drift):
        m = float(drift)
        return (lambda u: m * np.asarray(u, dtype=float)), []

    def f(u):
        return float(np.ravel(drift(np.array([u])))[0])

    # cumulative panel integrals from 0, then a short quad from the nearest node
    lo = min(0.0, lo if lo is not None else 0.0)
    hi = max(0.0, hi if hi is not None else 0.0)
    nodes = np.unique(np.concatenate((np.linspace(lo, hi, n + 1), [0.0])))
    pan = np.array([integrate.quad(f, u0, u1, limit=100)[0]
                    for u0, u1 in zip(nodes[:-1], nodes[1:])])
    cum = np.concatenate(([0.0], np.cumsum(pan)))
    cum -= cum[int(np.searchsorted(nodes, 0.0))]

    def anti(u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        i = np.clip(np.searchsorted(nodes, u), 0, nodes.size - 1)
        return np.array([cum[j] + integrate.quad(f, nodes[j], ui, limit=100)[0]
                         for j, ui in zip(i, u)])
    return anti, []


def exit_probability(drift, noise_amp: float, a: float, x: float, b: float) -> float:
    """Probability of leaving ``(a, b)`` through ``b`` when started at ``x``.

    Uses the scale density ``s(u) = exp(-(2/amp**2) int_a^u drift)`` in the log
    domain: the exponent is shifted by its maximum before integrating.

    Parameters
    ----------
    drift : DriftSpec, float or callable
        A float means a constant drift.
    """
    if not a < x < b:
        raise InvalidParameterError("need a < x < b")
    if not noise_amp > 0:
        raise InvalidParameterError("noise amplitude must be positive")
    anti, brk = _antiderivative(drift, a, b)
    k = 2.0 / noise_amp ** 2
    A0 = float(np.atleast_1d(anti(a))[0])

    def phi(u):
        return -k * (np.asarray(anti(u), dtype=float) - A0)

    # the scan only locates the peak of phi; callable drifts are costlier to scan
    n_scan = 513 if callable(drift) and not isinstance(drift, DriftSpec) else 4001
    grid = np.unique(np.concatenate((np.linspace(a, b, n_scan), [x],
                                     [c for c in brk + [0.0] if a < c < b])))
    ph = phi(grid)
    top = float(ph.max())
    peak = float(grid[int(np.argmax(ph))])
    pts = sorted({c for c in brk + [0.0, peak] if a < c < b})

    def integ(lo, hi):
        inner = [c for c in pts if lo < c < hi]
        val, _ = integrate.quad(lambda u: math.exp(float(np.ravel(phi(u))[0]) - top), lo, hi,
                                points=inner or None, limit=400, epsabs=0.0,
                                epsrel=1e-13)
        return val

    left = integ(a, x)
    right = integ(x, b)
    return left / (left + right)


def exit_probability_constant(mu: float, noise_amp: float, a: float, x: float,
                              b: float) -> float:
    """Closed form for a constant drift ``mu``."""
    if mu == 0:
        return (x - a) / (b - a)
    c = 2.0 * mu / noise_amp ** 2
    return float(np.expm1(-c * (x - a)) / np.expm1(-c * (b - a)))


# -- Brownian motion with drift -------------------------------------------------

def bm_drift_survival(t, level: float, sigma: float, drift: float):
    """Exact ``P(T > t)`` for ``T`` the hitting time of ``level > 0`` by
    ``sigma B(s) + drift s`` started at 0.  Tends to ``1 - exp(2 drift level /
    sigma**2)`` when ``drift < 0``."""
    t = np.asarray(t, dtype=float)
    st = sigma * np.sqrt(t)
    a = stats.norm.cdf((level - drift * t) / st)
    # exp(2 m l / s^2) * Phi(...) in the log domain
    lb = 2 * drift * level / sigma ** 2 + stats.norm.logcdf((-level - drift * t) / st)
    return a - np.exp(lb)


def bm_drift_tail_bound(t, level: float, sigma: float, mu: float):
    """Tail bound ``level / (sigma sqrt(2 pi t**3)) exp(mu (2 level - mu t) / (2 sigma**2))``.

    This is the closed form obtained by bounding the inverse Gaussian tail
    integral; see :func:`bm_drift_tail_bound_corrected` for the version that
    keeps the factor produced by the final integration.
    """
    t = np.asarray(t, dtype=float)
    return level / (sigma * np.sqrt(2 * np.pi * t ** 3)) * \
        np.exp(mu * (2 * level - mu * t) / (2 * sigma ** 2))


def bm_drift_tail_bound_corrected(t, level: float, sigma: float, mu: float):
    """Valid tail bound for the hitting time of ``level`` by ``sigma B + mu s``, ``mu > 0``.

    Integrating ``exp(-mu**2 u / (2 sigma**2))`` over ``u > t`` contributes the
    factor ``2 sigma**2 / mu**2``.
    """
    return bm_drift_tail_bound(t, level, sigma, mu) * 2 * sigma ** 2 / mu ** 2
