"""Discretised constrained rate-functional minimisation.

The problem is

    V(x0, T, g, m) = inf { I(xi) : xi(0) = x0, int_0^T |xi|**p >= m }

with ``I(xi) = int_0^T (xi' - g(xi))**2 / sigma**2 ds``.  Paths live on a
uniform grid of ``N + 1`` points.  On each interval the velocity is the
forward difference and the drift is evaluated at the midpoint, the area uses
the trapezoid rule.  The single area constraint is handled by an augmented
Lagrangian with an L-BFGS-B inner solver, which also takes box bounds for the
nonnegative and banded variants.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .drift import DriftFamily, DriftSpec
from .errors import InvalidParameterError

__all__ = [
    "RateFunctionalSpec", "PathVector", "VariationalResult", "rate_functional",
    "path_area", "solve_v", "solve_v_plus", "solve_box", "zero_cost_flow",
    "extend_path", "TExtrapolation", "extrapolate_T", "solve_v_infinite",
    "mollification_gap", "shifted_path_bound_check", "shifted_path_slack",
    "dp_oracle", "write_path_csv", "instance_from_record",
]

AREA_FLOOR = 1e-12


@dataclass(frozen=True)
class RateFunctionalSpec:
    """Drift ``g``, noise level, start point and horizon of one instance."""

    drift: DriftSpec
    sigma: float = 1.0
    x0: float = 0.0
    T: float = 4.0

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise InvalidParameterError(f"horizon T must be positive, got {self.T!r}")
        if not self.sigma > 0:
            raise InvalidParameterError(f"sigma must be positive, got {self.sigma!r}")
        if not math.isfinite(self.x0):
            raise InvalidParameterError("x0 must be finite")

    def with_(self, **kw):
        d = dict(drift=self.drift, sigma=self.sigma, x0=self.x0, T=self.T)
        d.update(kw)
        return RateFunctionalSpec(**d)


@dataclass
class PathVector:
    times: np.ndarray
    values: np.ndarray

    @classmethod
    def on_grid(cls, values, T):
        values = np.asarray(values, dtype=float)
        return cls(np.linspace(0.0, T, values.size), values)

    @property
    def h(self):
        return float(self.times[1] - self.times[0])


@dataclass
class VariationalResult:
    """Outcome of one constrained solve.

    ``area_residual`` is ``area - m`` of the returned path, so a feasible
    path has a nonnegative residual.  ``multiplier`` estimates ``dV/dm``.
    """

    value: float
    path: PathVector
    area_residual: float
    iterations: int
    converged: bool
    multiplier: float = 0.0
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {"value": self.value, "area_residual": self.area_residual,
                "iterations": self.iterations, "converged": self.converged,
                "multiplier": self.multiplier, "N": int(self.path.values.size - 1),
                **self.meta}


# -- discrete functionals ------------------------------------------------------

def _functional_parts(xi, h, drift, sigma, p, grad=True):
    d = np.diff(xi) / h
    mid = 0.5 * (xi[:-1] + xi[1:])
    res = d - drift.value(mid)
    J = h * float(np.dot(res, res)) / sigma ** 2
    a = np.abs(xi)
    ap = a ** p
    A = h * (float(ap.sum()) - 0.5 * (ap[0] + ap[-1]))
    if not grad:
        return J, A
    gp = drift.derivative(mid)
    coef = 2.0 * h * res / sigma ** 2
    gJ = np.zeros_like(xi)
    gJ[1:] += coef * (1.0 / h - 0.5 * gp)
    gJ[:-1] += coef * (-1.0 / h - 0.5 * gp)
    # floor |xi| inside the derivative only, see module notes
    gA = h * p * np.maximum(a, AREA_FLOOR) ** (p - 1) * np.sign(xi)
    gA[0] *= 0.5
    gA[-1] *= 0.5
    return J, gJ, A, gA


def rate_functional(path, spec: RateFunctionalSpec) -> float:
    """Discrete rate functional of ``path`` (a PathVector or an array on ``[0, T]``).

    Examples
    --------
    >>> import numpy as np
    >>> from ldlangevin import DriftSpec
    >>> spec = RateFunctionalSpec(DriftSpec.exact(1.0), 1.0, 0.0, 1.0)
    >>> round(rate_functional(np.linspace(0, 1, 1001), spec), 6)
    2.333333
    """
    xi = path.values if isinstance(path, PathVector) else np.asarray(path, dtype=float)
    h = spec.T / (xi.size - 1)
    d = np.diff(xi) / h
    res = d - spec.drift.value(0.5 * (xi[:-1] + xi[1:]))
    return h * float(np.dot(res, res)) / spec.sigma ** 2


def path_area(path, p, T=None) -> float:
    """Trapezoidal ``int |xi|**p`` of a grid path."""
    if isinstance(path, PathVector):
        xi, h = path.values, path.h
    else:
        xi = np.asarray(path, dtype=float)
        h = T / (xi.size - 1)
    ap = np.abs(xi) ** p
    return h * (float(ap.sum()) - 0.5 * (ap[0] + ap[-1]))


# -- initial paths --------------------------------------------------------------

def _bump(x0, T, N, peak_frac, end_frac, height):
    s = np.linspace(0.0, T, N + 1)
    a, b = peak_frac * T, end_frac * T
    shape = np.where(s <= a, s / a, np.clip((b - s) / (b - a), 0.0, None))
    return x0 + (height - x0) * shape


def _feasible_bump(x0, T, N, p, m, lower, upper, peak_frac=0.3, end_frac=0.7):
    """Tent through ``x0`` whose height meets the area constraint with equality."""
    h = T / N
    lo = -np.inf if lower is None else lower
    hi = np.inf if upper is None else upper

    def area(H):
        return path_area(np.clip(_bump(x0, T, N, peak_frac, end_frac, H), lo, hi), p, T) - m

    H0 = max(abs(x0), 1e-3)
    if area(H0) >= 0:
        return np.clip(_bump(x0, T, N, peak_frac, end_frac, H0), lo, hi)
    top = H0
    cap = hi if math.isfinite(hi) else 1e6
    while area(top) < 0:
        if top >= cap:
            raise InvalidParameterError("area constraint cannot be met inside the box")
        top = min(2 * top + h, cap)
    H = optimize.brentq(area, H0, top, xtol=1e-14, rtol=1e-14) if top > H0 else top
    xi = np.clip(_bump(x0, T, N, peak_frac, end_frac, H), lo, hi)
    # brentq lands within xtol of the root; nudge upward until feasible
    while path_area(xi, p, T) < m:
        H = H * (1 + 1e-12) + 1e-15
        xi = np.clip(_bump(x0, T, N, peak_frac, end_frac, H), lo, hi)
    return xi


def _start_shapes(n_random, seed):
    shapes = [(0.3, 0.7)]
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        a = rng.uniform(0.15, 0.65)
        b = min(a + rng.uniform(0.15, 0.4), 0.98)
        shapes.append((a, b))
    return shapes


# -- augmented Lagrangian ----------------------------------------------------------

def _al_solve(spec, p, m, xi_init, bounds, lam=0.0, mu=10.0, gtol=1e-8,
              feas_tol=1e-8, max_outer=50, max_inner=20000):
    """Augmented Lagrangian for ``min J`` s.t. ``m - A <= 0`` with ``xi[0]`` pinned."""
    N = xi_init.size - 1
    h = spec.T / N
    x0 = spec.x0
    drift, sigma = spec.drift, spec.sigma
    z = xi_init[1:].copy()
    if bounds is not None:
        lo = np.array([-np.inf if b[0] is None else b[0] for b in bounds])
        hi = np.array([np.inf if b[1] is None else b[1] for b in bounds])
        z = np.clip(z, lo, hi)
    nit = 0
    c_prev = np.inf
    J = np.nan
    converged = False
    for _ in range(max_outer):
        lam_k, mu_k = lam, mu

        def fun(zz):
            xi = np.concatenate(([x0], zz))
            Jv, gJ, A, gA = _functional_parts(xi, h, drift, sigma, p)
            c = m - A
            phi = max(0.0, lam_k + mu_k * c)
            return Jv + (phi * phi - lam_k * lam_k) / (2 * mu_k), (gJ - phi * gA)[1:]

        # L-BFGS-B stops on the projected gradient max-norm; grid gradients carry
        # a factor h, hence the scaling
        res = optimize.minimize(
            fun, z, jac=True, method="L-BFGS-B", bounds=bounds,
            options=dict(maxiter=max_inner, maxcor=30, ftol=1e-15,
                         gtol=gtol * h * (1.0 + (abs(J) if np.isfinite(J) else 0.0)) * 1e-2))
        z = res.x
        nit += int(res.nit)
        xi = np.concatenate(([x0], z))
        J_new, A = _functional_parts(xi, h, drift, sigma, p, grad=False)
        c = m - A
        lam_new = max(0.0, lam + mu * c)
        feasible = c <= feas_tol * max(m, 1e-300)
        # the inequality is either active (small |c|) or slack with lam = 0
        settled = abs(lam_new - lam) <= 1e-7 * (1.0 + lam) and (c > -feas_tol * m or lam_new == 0.0)
        stalled = np.isfinite(J) and abs(J_new - J) <= 1e-12 * (1.0 + abs(J_new))
        J = J_new
        lam = lam_new
        if feasible and (settled or stalled):
            converged = True
            break
        if abs(c) > feas_tol * m and abs(c) > 0.25 * c_prev:
            mu *= 10.0
        c_prev = abs(c)
    return xi, lam, nit, converged


def _polish_feasible(xi, spec, p, m, bounds):
    """Scale ``xi`` so the area is at least ``m``; only used when ``x0 == 0``."""
    T = spec.T
    A = path_area(xi, p, T)
    if A >= m or A <= 0 or spec.x0 != 0.0:
        return xi
    scale = (m / A) ** (1.0 / p)
    for _ in range(8):
        cand = xi * scale
        if bounds is not None:
            lo = np.array([-np.inf] + [-np.inf if b[0] is None else b[0] for b in bounds])
            hi = np.array([np.inf] + [np.inf if b[1] is None else b[1] for b in bounds])
            if np.any(cand < lo) or np.any(cand > hi):
                return xi
        if path_area(cand, p, T) >= m:
            return cand
        scale *= 1 + 1e-14
    return xi


def _make_bounds(N, lower, upper):
    if lower is None and upper is None:
        return None
    return [(lower, upper)] * N


def _prolong(xi, N_new):
    old = np.linspace(0.0, 1.0, xi.size)
    return np.interp(np.linspace(0.0, 1.0, N_new + 1), old, xi)


def solve_box(spec: RateFunctionalSpec, p: float, m: float, N: int = 256,
              lower: float | None = None, upper: float | None = None,
              starts: int = 4, seed: int = 0, init=None, coarse: int = 64,
              gtol: float = 1e-8, feas_tol: float = 1e-8) -> VariationalResult:
    """Minimise the rate functional with ``lower <= xi <= upper`` on ``xi[1:]``.

    Parameters
    ----------
    spec : RateFunctionalSpec
    p, m : float
        Area exponent and area threshold.
    N : int
        Number of grid intervals (at least 32).
    lower, upper : float, optional
        Box bounds; ``None`` means unbounded.
    starts : int
        Number of randomised tent starts on top of the default tent.
    seed : int
        Seed for the randomised starts.
    init : array, optional
        Warm start of length ``N + 1``; disables the multi-start stage.
    coarse : int
        Grid size of the multi-start stage; the best coarse optimum is then
        refined by grid doubling up to ``N``.

    Returns
    -------
    VariationalResult
    """
    if N < 32:
        raise InvalidParameterError(f"N must be at least 32, got {N}")
    if m < 0:
        raise InvalidParameterError("m must be nonnegative")
    if p <= 0:
        raise InvalidParameterError("p must be positive")
    x0 = spec.x0
    if (lower is not None and x0 < lower) or (upper is not None and x0 > upper):
        raise InvalidParameterError("x0 lies outside the box")
    # cost of doing nothing: the drift flow from x0
    flow = zero_cost_flow(spec.drift, x0, spec.T, N)
    if m == 0 or (path_area(flow, p, spec.T) >= m and _in_box(flow, lower, upper)):
        return VariationalResult(rate_functional(flow, spec), PathVector.on_grid(flow, spec.T),
                                 path_area(flow, p, spec.T) - m, 0, True, 0.0,
                                 {"starts": 0})
    total_it = 0
    lam = 0.0
    if init is not None:
        init = np.asarray(init, dtype=float)
        if init.size != N + 1:
            init = _prolong(init, N)
        levels = [N]
        cur = init
    else:
        Nc = min(N, max(32, coarse))
        levels = [Nc]
        while levels[-1] < N:
            levels.append(min(N, 2 * levels[-1]))
        cands = []
        for a, b in _start_shapes(starts, seed):
            x_init = _feasible_bump(x0, spec.T, Nc, p, m, lower, upper, a, b)
            xi, lam_i, it, ok = _al_solve(spec, p, m, x_init, _make_bounds(Nc, lower, upper),
                                          gtol=gtol, feas_tol=feas_tol)
            total_it += it
            xi = _polish_feasible(xi, spec, p, m, _make_bounds(Nc, lower, upper))
            cands.append((rate_functional(xi, spec.with_()), float(np.dot(xi, xi)), xi, lam_i))
        best = min(c[0] for c in cands)
        # ties within the optimiser tolerance go to the smallest L2 path
        tied = [c for c in cands if c[0] <= best + 1e-7 * (1 + best)]
        _, _, cur, lam = min(tied, key=lambda c: c[1])
        levels = levels[1:]
    converged = True
    for n in levels:
        x_init = _prolong(cur, n) if cur.size != n + 1 else cur
        bnds = _make_bounds(n, lower, upper)
        cur, lam, it, ok = _al_solve(spec, p, m, x_init, bnds, lam=lam, gtol=gtol,
                                     feas_tol=feas_tol)
        total_it += it
        cur = _polish_feasible(cur, spec, p, m, bnds)
        converged = ok
    if init is None and not levels:
        converged = True
    J = rate_functional(cur, spec)
    A = path_area(cur, p, spec.T)
    return VariationalResult(J, PathVector.on_grid(cur, spec.T), A - m, total_it,
                             bool(converged and A - m >= -feas_tol * m * 10),
                             lam, {"starts": 0 if init is not None else starts + 1})


def _in_box(xi, lower, upper):
    if lower is not None and np.any(xi[1:] < lower):
        return False
    if upper is not None and np.any(xi[1:] > upper):
        return False
    return True


def solve_v(spec: RateFunctionalSpec, p: float, m: float, N: int = 256, **kw) -> VariationalResult:
    """Unconstrained-sign variant of :func:`solve_box`."""
    return solve_box(spec, p, m, N, None, None, **kw)


def solve_v_plus(spec: RateFunctionalSpec, p: float, m: float, N: int = 256, **kw) -> VariationalResult:
    """Variant restricted to nonnegative paths (needs ``x0 >= 0``)."""
    if spec.x0 < 0:
        raise InvalidParameterError("the nonnegative problem needs x0 >= 0")
    return solve_box(spec, p, m, N, 0.0, None, **kw)


# -- horizon extension ---------------------------------------------------------------

def zero_cost_flow(drift: DriftSpec, x0: float, T: float, N: int) -> np.ndarray:
    """Grid path with zero discrete cost: implicit midpoint steps of the drift flow.

    Each step solves for the midpoint ``c = (x + y) / 2`` of
    ``y = x + h g(c)``, i.e. ``c - (h/2) g(c) = x``.  For a nonincreasing drift
    the left side is increasing in ``c``, so the root is unique.  Solving for
    ``c`` rather than ``y`` keeps relative accuracy near the origin, where a
    sublinear drift makes the step map very steep.
    """
    h = T / N
    out = np.empty(N + 1)
    out[0] = x0
    x = float(x0)
    g = drift.scalar()
    for k in range(N):
        if x == 0.0 and g(0.0) == 0.0:
            out[k + 1:] = 0.0
            break

        def f(c, x=x):
            return c - 0.5 * h * g(c) - x

        # the root lies between 0 and x when the drift points at the origin
        lo, hi = min(0.0, x), max(0.0, x)
        w = abs(x) + h * (abs(g(x)) + 1.0)
        while f(lo) > 0:
            lo -= w
            w *= 2
        while f(hi) < 0:
            hi += w
            w *= 2
        c = optimize.brentq(f, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps)
        x = 2.0 * c - x
        out[k + 1] = x
    return out


def extend_path(xi, drift: DriftSpec, h: float, n_extra: int) -> np.ndarray:
    """Append ``n_extra`` zero-cost steps to a grid path."""
    if n_extra <= 0:
        return np.asarray(xi, dtype=float)
    tail = zero_cost_flow(drift, float(xi[-1]), n_extra * h, n_extra)
    return np.concatenate((xi, tail[1:]))


@dataclass
class TExtrapolation:
    T: list
    values: list
    monotone: bool
    plateau: bool
    limit: float
    tail_estimate: float
    results: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {"T": self.T, "values": self.values, "monotone": self.monotone,
                "plateau": self.plateau, "limit": self.limit,
                "tail_estimate": self.tail_estimate}


def extrapolate_T(drift: DriftSpec, p: float, m: float, T_grid, *, x0=0.0, sigma=1.0,
                  steps_per_unit: int = 64, nonneg=True, rel_plateau=1e-3,
                  mono_tol=1e-6, lower=None, upper=None, seed=0) -> TExtrapolation:
    """Solve on an increasing horizon grid with a fixed step and check the limit.

    Every horizon after the first is warm-started from the previous optimum
    extended by the zero-cost flow, which is feasible with the same cost, so a
    value increase can only come from solver error.  ``tail_estimate`` is an
    Aitken extrapolation of the last three values (the last value if the
    differences do not contract).
    """
    T_grid = [float(t) for t in T_grid]
    if len(T_grid) < 3 or any(b <= a for a, b in zip(T_grid, T_grid[1:])):
        raise InvalidParameterError("T grid must be increasing with at least 3 points")
    h = 1.0 / steps_per_unit
    lo = 0.0 if nonneg and lower is None else lower
    vals, results = [], []
    prev = None
    for T in T_grid:
        N = int(round(T / h))
        spec = RateFunctionalSpec(drift, sigma, x0, T)
        if prev is None:
            res = solve_box(spec, p, m, N, lo, upper, seed=seed)
        else:
            warm = extend_path(prev.path.values, drift, h, N - (prev.path.values.size - 1))
            res = solve_box(spec, p, m, N, lo, upper, init=warm)
            # the warm start is feasible, never report worse than it
            if res.value > prev.value:
                res = VariationalResult(rate_functional(warm, spec), PathVector.on_grid(warm, T),
                                        path_area(warm, p, T) - m, res.iterations,
                                        res.converged, prev.multiplier, {"warm": True})
        vals.append(res.value)
        results.append(res)
        prev = res
    monotone = all(b <= a + mono_tol * (1 + abs(a)) for a, b in zip(vals, vals[1:]))
    last, before = vals[-1], vals[-2]
    plateau = abs(before - last) <= rel_plateau * max(abs(last), 1e-300) or last == 0.0
    d1, d2 = vals[-2] - vals[-3], vals[-1] - vals[-2]
    if d1 != 0 and 0 <= d2 / d1 < 1:
        q = d2 / d1
        tail = last + d2 * q / (1 - q)
    else:
        tail = last
    return TExtrapolation(T_grid, vals, monotone, plateau, last, tail, results)


def solve_v_infinite(drift: DriftSpec, p: float, m: float, *, x0=0.0, sigma=1.0,
                     T0=2.0, T_max=64.0, steps_per_unit=64, rel_plateau=1e-3,
                     nonneg=True) -> TExtrapolation:
    """Double the horizon from ``T0`` until consecutive values agree to ``rel_plateau``."""
    Ts = [T0, 2 * T0, 4 * T0]
    while True:
        ext = extrapolate_T(drift, p, m, Ts, x0=x0, sigma=sigma,
                            steps_per_unit=steps_per_unit, nonneg=nonneg,
                            rel_plateau=rel_plateau)
        if ext.plateau or Ts[-1] * 2 > T_max:
            return ext
        Ts.append(2 * Ts[-1])


# -- structural checks -----------------------------------------------------------------

def mollification_gap(eps_grid, p=4.0, N=None, T=8.0, *, kappa=1.0, sigma=1.0, m=1.0,
                      steps_per_unit=32):
    """Start-shift and mollification gaps of the nonnegative problem.

    Returns one dict per ``eps`` with the values ``V+(0, u_eps)``,
    ``V+(eps, u_eps)``, ``V+(0, D)``, the start-shift gap and its bound
    ``4 eps**(2 kappa) / sigma**2``, plus the top-level ``monotone`` flag for
    the shrinkage of ``|V+(0, u_eps) - V+(0, D)|`` as ``eps`` decreases.
    """
    if N is None:
        N = int(round(T * steps_per_unit))
    base = solve_v_plus(RateFunctionalSpec(DriftSpec.exact(kappa), sigma, 0.0, T), p, m, N)
    rows = []
    for eps in sorted(eps_grid, reverse=True):
        if not 0 < eps < 1:
            raise InvalidParameterError("eps must lie in (0, 1)")
        u = DriftSpec(DriftFamily.MOLLIFIED, kappa, eps)
        v0 = solve_v_plus(RateFunctionalSpec(u, sigma, 0.0, T), p, m, N,
                          init=base.path.values)
        ve = solve_v_plus(RateFunctionalSpec(u, sigma, eps, T), p, m, N)
        rows.append({
            "eps": eps, "v0": v0.value, "v_eps": ve.value, "v_exact": base.value,
            "shift_gap": abs(ve.value - v0.value),
            "shift_bound": 4 * eps ** (2 * kappa) / sigma ** 2,
            "moll_gap": abs(base.value - v0.value),
            "below_exact": v0.value <= base.value * (1 + 1e-7),
            "converged": v0.converged and ve.converged,
        })
    gaps = [r["moll_gap"] for r in rows]
    monotone = all(b <= a + 1e-7 * (1 + base.value) for a, b in zip(gaps, gaps[1:]))
    return {"rows": rows, "monotone": monotone, "v_exact": base.value}


def shifted_path_slack(x, M, T, kappa, sigma=1.0):
    """Correction term ``2 x**kappa (M + M**kappa T + x**kappa T) / sigma**2``."""
    return 2 * x ** kappa / sigma ** 2 * (M + M ** kappa * T + x ** kappa * T)


def shifted_path_bound_check(x, y, M, T, p, m, *, kappa=1.0, sigma=1.0, eps=None,
                             N=128, family=DriftFamily.ONE_SIDED):
    """Compare the shifted banded optimum against the nonnegative capped one.

    The left side minimises with drift ``family`` (default the one-sided
    modification) over paths from ``x`` kept in ``[y, M + x]``, minus the
    correction term; the right side minimises with the exact drift over paths
    from 0 kept in ``[0, M]``.  The closed box gives the same infimum as the
    open one.
    """
    eps = x if eps is None else eps
    if not (x >= eps and x > y):
        raise InvalidParameterError("need x >= eps and x > y")
    slack = shifted_path_slack(x, M, T, kappa, sigma)
    rhs = solve_box(RateFunctionalSpec(DriftSpec.exact(kappa), sigma, 0.0, T), p, m, N, 0.0, M)
    lhs = solve_box(RateFunctionalSpec(DriftSpec(family, kappa, eps), sigma, x, T),
                    p, m, N, y, M + x)
    margin = rhs.value - (lhs.value - slack)
    return {"holds": bool(margin > 0), "margin": margin, "lhs": lhs.value,
            "rhs": rhs.value, "slack": slack,
            "converged": lhs.converged and rhs.converged}


# -- dynamic-programming oracle -------------------------------------------------------

def _dp_pass(grids, h, drift, sigma, p, m, n_area, x0, bound=np.inf):
    """Min-cost DP over (time, state, area bucket) on per-time state grids.

    ``grids[k]`` holds the admissible states at time ``k``.  Buckets partition
    ``[0, m)`` plus one terminal bucket for ``area >= m``; each cell keeps the
    cheapest partial path together with its exact area.  Partial paths costing
    more than ``bound`` are dropped.
    """
    n = len(grids) - 1
    da = m / n_area
    nb = n_area + 1
    g0 = grids[0]
    cost = np.full((g0.size, nb), np.inf)
    area = np.zeros((g0.size, nb))
    i0 = int(np.argmin(np.abs(g0 - x0)))
    cost[i0, 0] = 0.0
    back = []
    for k in range(n):
        xa, xb = grids[k], grids[k + 1]
        mid = 0.5 * (xa[:, None] + xb[None, :])
        tc = h * ((xb[None, :] - xa[:, None]) / h - drift.value(mid)) ** 2 / sigma ** 2
        ta = 0.5 * h * (np.abs(xa[:, None]) ** p + np.abs(xb[None, :]) ** p)
        live_i, live_b = np.nonzero(np.isfinite(cost))
        c0 = cost[live_i, live_b]
        a0 = area[live_i, live_b]
        # candidates: (live cell) x (next state)
        cc = (c0[:, None] + tc[live_i, :]).ravel()
        keep = np.flatnonzero(cc <= bound)
        cc = cc[keep]
        aa = (a0[:, None] + ta[live_i, :]).ravel()[keep]
        jj = keep % xb.size
        src = keep // xb.size
        bb = np.minimum((aa / da).astype(np.int64), n_area)
        key = jj * nb + bb
        order = np.lexsort((cc, key))
        ks = key[order]
        first = np.ones(ks.size, dtype=bool)
        first[1:] = ks[1:] != ks[:-1]
        sel = order[first]
        new_cost = np.full((xb.size, nb), np.inf)
        new_area = np.zeros((xb.size, nb))
        prev = np.full((xb.size, nb, 2), -1, dtype=np.int64)
        jsel, bsel = jj[sel], bb[sel]
        new_cost[jsel, bsel] = cc[sel]
        new_area[jsel, bsel] = aa[sel]
        prev[jsel, bsel, 0] = live_i[src[sel]]
        prev[jsel, bsel, 1] = live_b[src[sel]]
        back.append(prev)
        cost, area = new_cost, new_area
    # feasible terminal cells: exact area >= m
    ok = np.isfinite(cost) & (area >= m)
    if not ok.any():
        return np.inf, None
    flat = np.where(ok, cost, np.inf)
    j, b = np.unravel_index(int(np.argmin(flat)), flat.shape)
    best = float(flat[j, b])
    path = np.empty(n + 1)
    for k in range(n, 0, -1):
        path[k] = grids[k][j]
        j, b = back[k - 1][j, b]
    path[0] = grids[0][j]
    return best, path


def _tent_cost(spec, p, m, n, peak):
    try:
        xi = _feasible_bump(spec.x0, spec.T, n, p, m, 0.0, None, peak, min(peak + 0.3, 1.0))
    except InvalidParameterError:
        return np.inf
    return rate_functional(xi, spec) * (1 + 1e-9)


def dp_oracle(spec: RateFunctionalSpec, p: float, m: float, n_steps: int = 64,
              x_max: float | None = None, n_states: int = 81, n_area: int = 200,
              refine: int = 2, band: float = 0.06, band_states: int = 49):
    """Brute-force dynamic-programming bound for the nonnegative problem.

    A coarse pass searches a uniform state grid on ``[0, x_max]`` (every pair of
    consecutive states, i.e. every slope, is a candidate move); each refinement
    pass searches a band of half-width ``band`` around the previous optimum,
    shrinking the band by a factor 4.  Partial paths dearer than a feasible
    tent (or than the previous pass) are pruned.  The returned value is the cost of a
    feasible path of the ``n_steps`` grid, hence an upper bound on that
    discrete problem.  Independent of the gradient solver.

    Returns
    -------
    value : float
    path : ndarray of length ``n_steps + 1``
    """
    T, x0 = spec.T, spec.x0
    h = T / n_steps
    if x_max is None:
        # a path must exceed (m / T)**(1/p) somewhere; allow a generous margin
        x_max = max(3.0 * (m / T) ** (1.0 / p), 2 * abs(x0) + 0.1)
    base = np.linspace(0.0, x_max, n_states)
    if x0 not in base:
        base = np.sort(np.append(base, x0))
    grids = [np.array([x0])] + [base] * n_steps
    bound = min(_tent_cost(spec, p, m, n_steps, f) for f in (0.3, 0.5, 0.7))
    value, path = _dp_pass(grids, h, spec.drift, spec.sigma, p, m, n_area, x0, bound)
    w = band
    for _ in range(refine):
        if path is None:
            break
        grids = [np.array([x0])]
        for k in range(1, n_steps + 1):
            g = path[k] + np.linspace(-w, w, band_states)
            grids.append(g[g >= 0.0] if np.any(g >= 0.0) else np.array([0.0]))
        v, pth = _dp_pass(grids, h, spec.drift, spec.sigma, p, m, n_area, x0,
                          value * (1 + 1e-9))
        if v <= value:
            value, path = v, pth
        w /= 4.0
    return value, path


# -- io -------------------------------------------------------------------------------

def write_path_csv(result: VariationalResult, fname) -> None:
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "value"])
        for t, x in zip(result.path.times, result.path.values):
            w.writerow([repr(float(t)), repr(float(x))])


def instance_from_record(rec: dict):
    """Parse ``{x0, T, m, p, kappa, sigma, drift, eps, N}`` into solver inputs."""
    try:
        drift = DriftSpec(rec.get("drift", "ExactD"), float(rec["kappa"]),
                          float(rec.get("eps", 0.0)))
        spec = RateFunctionalSpec(drift, float(rec.get("sigma", 1.0)),
                                  float(rec.get("x0", 0.0)), float(rec["T"]))
        return spec, float(rec["p"]), float(rec["m"]), int(rec.get("N", 256))
    except KeyError as exc:
        raise InvalidParameterError(f"instance record lacks {exc.args[0]!r}") from None
