"""Rare-event and concentration experiments.

The tail estimators use fixed-effort multilevel splitting on a monotone
running score (cycle area, running additive functional or partial sum).
Levels are placed by a pilot run at its empirical ``1 - p_level`` quantiles;
the estimating runs then use those fixed levels, so every batch is an
unbiased product estimator and the standard error comes from independent
batches.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special, stats

from .cycles import bridge_cross_probability, count_renewals, mgf_estimate, simulate_cycles
from .drift import DriftSpec
from .errors import InvalidParameterError, InvalidRegimeError
from .params import ModelParams, check_regime, scaling_exponents
from .stationary import stationary_moment

__all__ = [
    "SplittingConfig", "SplitResult", "TailCurve", "CycleAreaProcess",
    "AdditiveProcess", "WeibullSumProcess", "pilot_levels", "split_estimate",
    "crude_estimate", "fit_tail", "tail_curve_cycle", "tail_curve_additive",
    "weibull_sum_check", "weibull_conditional_mc", "cramer_rate", "stable_theta",
    "renewal_rate", "n_delta_concentration",
]


@dataclass(frozen=True)
class SplittingConfig:
    """Knobs of the splitting estimator.

    Parameters
    ----------
    n_particles : int
        Particles per stage and batch (fixed effort).
    p_level : float
        Target conditional success probability between levels.
    n_pilot : int
        Particles of the level-placement pilot.
    n_batches : int
        Independent estimating runs; their spread gives the standard error.
    max_levels : int
    """

    n_particles: int = 4000
    p_level: float = 0.2
    n_pilot: int = 2000
    n_batches: int = 8
    max_levels: int = 40

    def __post_init__(self):
        if not 0 < self.p_level < 1:
            raise InvalidParameterError("p_level must lie in (0, 1)")
        if min(self.n_particles, self.n_pilot, self.n_batches) < 2:
            raise InvalidParameterError("splitting needs at least 2 particles and batches")


def _stage_rng(seed, *path):
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in path))
    return np.random.Generator(np.random.Philox(ss))


# -- processes --------------------------------------------------------------------
# A process keeps its state in a dict of equally long arrays.  ``s`` is the
# monotone score and ``done`` marks particles whose run is over.

class CycleAreaProcess:
    """First regeneration cycle started at 0; score is the running area.

    The cycle ends at the first return to 0 after ``|X|`` has reached
    ``delta``; returns between grid points are detected with the Brownian
    bridge test and the last partial step is cut at the interpolated crossing.
    """

    def __init__(self, spec: DriftSpec, amp: float, delta: float, p: float, dt: float,
                 bridge: bool = True):
        self.spec, self.amp, self.delta, self.p, self.dt = spec, amp, delta, p, dt
        self.bridge = bridge
        self.sq = math.sqrt(dt) * amp

    def init(self, n):
        return {"x": np.zeros(n), "s": np.zeros(n), "reached": np.zeros(n, bool),
                "done": np.zeros(n, bool)}

    def draw(self, rng, n):
        return np.stack((rng.standard_normal(n), rng.random(n)))

    def step(self, st, idx, w):
        x = st["x"][idx]
        xn = x + self.spec.value(x) * self.dt + self.sq * w[0]
        reached = st["reached"][idx]
        sc = x * xn <= 0
        ret = reached & sc
        if self.bridge:
            ret |= reached & ~sc & (w[1] < bridge_cross_probability(x, xn, self.amp, self.dt))
        axo, axn = np.abs(x) ** self.p, np.abs(xn) ** self.p
        with np.errstate(invalid="ignore", divide="ignore"):
            f = np.where(sc, np.where(x != xn, x / (x - xn), 0.0),
                         np.abs(x) / (np.abs(x) + np.abs(xn)))
        f = np.clip(np.nan_to_num(f), 0.0, 1.0)
        inc = np.where(ret, 0.5 * self.dt * f * axo, 0.5 * self.dt * (axo + axn))
        st["s"][idx] += inc
        st["x"][idx] = np.where(ret, 0.0, xn)
        st["reached"][idx] = reached | (np.abs(xn) >= self.delta)
        return ret


class AdditiveProcess:
    """``dX = g dt + amp dB`` from ``x0`` on ``[0, horizon]``; score ``int |X|**p``."""

    def __init__(self, spec: DriftSpec, amp: float, p: float, horizon: float, dt: float,
                 x0: float = 0.0):
        self.spec, self.amp, self.p, self.dt, self.x0 = spec, amp, p, dt, x0
        self.n_steps = int(math.ceil(horizon / dt - 1e-9))
        self.sq = math.sqrt(dt) * amp

    def init(self, n):
        return {"x": np.full(n, float(self.x0)), "s": np.zeros(n),
                "k": np.zeros(n, np.int64), "done": np.zeros(n, bool)}

    def draw(self, rng, n):
        return rng.standard_normal(n)[None, :]

    def step(self, st, idx, w):
        x = st["x"][idx]
        xn = x + self.spec.value(x) * self.dt + self.sq * w[0]
        st["s"][idx] += 0.5 * self.dt * (np.abs(x) ** self.p + np.abs(xn) ** self.p)
        st["x"][idx] = xn
        st["k"][idx] += 1
        return st["k"][idx] >= self.n_steps

    def final_scores(self, n, rng, block=512):
        """Scores at the horizon of ``n`` fresh paths (no level stopping)."""
        x = np.full(n, float(self.x0))
        ax = np.abs(x) ** self.p
        s = np.zeros(n)
        k = 0
        while k < self.n_steps:
            nb = min(block, self.n_steps - k)
            z = rng.standard_normal((nb, n))
            z *= self.sq
            for j in range(nb):
                x = x + self.spec.value(x) * self.dt + z[j]
                an = np.abs(x) ** self.p
                s += an + ax
                ax = an
            k += nb
        return 0.5 * self.dt * s


class WeibullSumProcess:
    """Partial sums of ``n`` i.i.d. variables with ``P(X >= t) = exp(-t**r)``.

    The score is ``S_k + (n - k) m``, the conditional mean of the final sum,
    so that early and late partial sums compete on the same scale.  It is
    not monotone; its final value is the full sum.  The state also tracks
    the largest summand, for the max-share statistic.
    """

    monotone = False

    def __init__(self, r: float, n: int):
        if not 0 < r < 1:
            raise InvalidParameterError("shape r must lie in (0, 1)")
        self.r, self.n = r, int(n)
        self.mean = math.gamma(1.0 + 1.0 / r)

    def init(self, n):
        return {"s": np.full(n, self.n * self.mean), "sum": np.zeros(n), "mx": np.zeros(n),
                "k": np.zeros(n, np.int64),
                "done": np.zeros(n, bool) if self.n > 0 else np.ones(n, bool)}

    def draw(self, rng, n):
        return rng.random(n)[None, :]

    def step(self, st, idx, w):
        # inverse transform, 1 - U avoids log(0)
        xv = (-np.log1p(-w[0])) ** (1.0 / self.r)
        st["sum"][idx] += xv
        st["s"][idx] += xv - self.mean
        st["mx"][idx] = np.maximum(st["mx"][idx], xv)
        st["k"][idx] += 1
        return st["k"][idx] >= self.n


# -- splitting engine -----------------------------------------------------------------

def _take(st, sel):
    return {k: v[sel].copy() for k, v in st.items()}


def _run_stage(proc, st, level, rng, max_steps=10_000_000):
    """Advance every particle until its score reaches ``level`` or its run ends.

    Noise is drawn for all particles at every step, so rerunning the stage
    with the same generator reproduces the same paths for any ``level``.
    Returns the success mask and the final scores.
    """
    n = st["s"].size
    active = ~st["done"] & (st["s"] < level)
    steps = 0
    while active.any():
        w = proc.draw(rng, n)
        idx = np.flatnonzero(active)
        fin = proc.step(st, idx, w[:, idx])
        st["done"][idx] |= fin
        stop = fin | (st["s"][idx] >= level)
        active[idx[stop]] = False
        steps += 1
        if steps > max_steps:
            raise RuntimeError("splitting stage did not terminate")
    return st["s"] >= level, st["s"].copy()


def pilot_levels(proc, target, config: SplittingConfig, seed=0):
    """Levels at successive ``1 - p_level`` quantiles of a pilot run, up to ``target``.

    Returns the increasing list of interior levels together with the pilot's
    rough probability for each level (``p_level ** (k + 1)``).
    """
    n = config.n_pilot
    st = proc.init(n)
    levels = []
    for k in range(config.max_levels):
        snap = _take(st, slice(None))
        _, final = _run_stage(proc, st, np.inf, _stage_rng(seed, 0, k))
        lvl = float(np.quantile(final, 1.0 - config.p_level))
        if levels and lvl <= levels[-1]:
            lvl = float(np.min(final[final > levels[-1]], initial=np.inf))
        if not np.isfinite(lvl) or lvl >= target:
            break
        levels.append(lvl)
        st = snap
        succ, _ = _run_stage(proc, st, lvl, _stage_rng(seed, 0, k))
        ok = np.flatnonzero(succ)
        if ok.size == 0:
            break
        pick = _stage_rng(seed, 1, k).integers(0, ok.size, n)
        st = _take(st, ok[pick])
    return levels, [config.p_level ** (k + 1) for k in range(len(levels))]


@dataclass
class SplitResult:
    """Batch-averaged splitting estimates of ``P(score >= u)`` on a grid."""

    u: np.ndarray
    prob: np.ndarray
    stderr: np.ndarray
    levels: list
    batch_probs: np.ndarray = field(repr=False)
    stage_probs: np.ndarray = field(repr=False)
    final_states: list = field(default_factory=list, repr=False)

    @property
    def log_prob(self):
        with np.errstate(divide="ignore"):
            return np.log(self.prob)

    @property
    def log_se(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.stderr / self.prob

    @property
    def degenerate(self):
        return self.prob <= 0


def _split_batch(proc, u, levels, n, seed, batch):
    st = proc.init(n)
    est = np.zeros(u.size)
    stages = []
    P = 1.0
    lo = -np.inf
    bounds = list(levels) + [np.inf]
    final = None
    for k, L in enumerate(bounds):
        succ, score = _run_stage(proc, st, L, _stage_rng(seed, 2, batch, k))
        sel = (u >= lo) & (u < L)
        if not getattr(proc, "monotone", True) and np.isfinite(L):
            # stopped particles may still fall back below u: only the final
            # stage sees terminal scores
            sel[:] = False
        if sel.any():
            est[sel] = P * (score[None, :] >= u[sel, None]).mean(axis=1)
        if not np.isfinite(L):
            final = st
            break
        pk = float(succ.mean())
        stages.append(pk)
        if pk == 0.0:
            break
        P *= pk
        ok = np.flatnonzero(succ)
        pick = _stage_rng(seed, 3, batch, k).integers(0, ok.size, n)
        st = _take(st, ok[pick])
        lo = L
    return est, stages, final


def split_estimate(proc, u_grid, config: SplittingConfig = SplittingConfig(), seed=0,
                   levels=None, threads: int = 1) -> SplitResult:
    """Estimate ``P(score >= u)`` for every ``u`` of an increasing grid.

    Batches run on up to ``threads`` worker threads; each batch owns its
    random streams, so the result does not depend on ``threads``.
    """
    u = np.asarray(u_grid, dtype=float)
    if u.ndim != 1 or u.size == 0 or np.any(np.diff(u) <= 0):
        raise InvalidParameterError("u grid must be strictly increasing")
    if levels is None:
        levels, _ = pilot_levels(proc, float(u[-1]), config, seed)
    if not getattr(proc, "monotone", True):
        levels = [L for L in levels if L <= u[0]]
    B = config.n_batches
    probs = np.zeros((B, u.size))
    stage = np.full((B, len(levels)), np.nan)
    finals = []
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            outs = list(ex.map(lambda b: _split_batch(proc, u, levels, config.n_particles,
                                                      seed, b), range(B)))
    else:
        outs = [_split_batch(proc, u, levels, config.n_particles, seed, b) for b in range(B)]
    for b, (est, sp, fin) in enumerate(outs):
        probs[b] = est
        stage[b, :len(sp)] = sp
        finals.append(fin)
    mean = probs.mean(axis=0)
    se = probs.std(axis=0, ddof=1) / math.sqrt(B)
    return SplitResult(u, mean, se, list(levels), probs, stage, finals)


def crude_estimate(proc, u_grid, n, seed=0, chunk=20000):
    """Plain Monte Carlo ``P(score >= u)`` with binomial standard errors."""
    u = np.asarray(u_grid, dtype=float)
    hits = np.zeros(u.size)
    done = 0
    c = 0
    while done < n:
        m = min(chunk, n - done)
        rng = _stage_rng(seed, 4, c)
        if hasattr(proc, "final_scores"):
            score = proc.final_scores(m, rng)
        else:
            _, score = _run_stage(proc, proc.init(m), np.inf, rng)
        hits += (score[None, :] >= u[:, None]).sum(axis=1)
        done += m
        c += 1
    p = hits / n
    return p, np.sqrt(p * (1 - p) / n), hits.astype(np.int64)


# -- fits -----------------------------------------------------------------------------

@dataclass
class TailCurve:
    """Log-probabilities against a level grid plus the fit against ``level**r``.

    ``slope``/``intercept``/``r2`` come from the weighted fit, the
    ``*_unweighted`` fields from ordinary least squares.
    """

    levels: np.ndarray
    log_prob: np.ndarray
    log_se: np.ndarray
    speed_r: float
    slope: float = np.nan
    intercept: float = np.nan
    r2: float = np.nan
    slope_se: float = np.nan
    slope_unweighted: float = np.nan
    r2_unweighted: float = np.nan
    fit_mask: np.ndarray | None = None
    flags: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def refit(self, r):
        """Fit of the same points against ``level**r`` (for exponent comparison)."""
        m = self.fit_mask if self.fit_mask is not None else np.ones(self.levels.size, bool)
        return fit_tail(self.levels[m], self.log_prob[m], self.log_se[m], r)

    def to_dict(self):
        return {"levels": self.levels.tolist(), "log_prob": self.log_prob.tolist(),
                "log_se": self.log_se.tolist(), "speed_r": self.speed_r,
                "slope": self.slope, "intercept": self.intercept, "r2": self.r2,
                "slope_se": self.slope_se, "slope_unweighted": self.slope_unweighted,
                "r2_unweighted": self.r2_unweighted, "flags": list(self.flags),
                **self.meta}


def fit_tail(levels, log_prob, log_se, r):
    """Weighted and ordinary least squares of ``log_prob`` on ``levels**r``.

    Returns a dict with slope, intercept, weighted R^2, the slope standard
    error (residual-scaled) and the unweighted slope and R^2.
    """
    x = np.asarray(levels, dtype=float) ** r
    y = np.asarray(log_prob, dtype=float)
    se = np.asarray(log_se, dtype=float)
    if x.size < 3:
        raise InvalidParameterError("need at least 3 points to fit a tail")
    w = 1.0 / np.maximum(se, 1e-12) ** 2
    X = np.column_stack((np.ones_like(x), x))
    W = X * w[:, None]
    cov = np.linalg.inv(X.T @ W)
    beta = cov @ (W.T @ y)
    res = y - X @ beta
    ybar = np.sum(w * y) / np.sum(w)
    r2 = 1.0 - np.sum(w * res ** 2) / np.sum(w * (y - ybar) ** 2)
    s2 = np.sum(w * res ** 2) / (x.size - 2)
    # never report a slope error below the one implied by the point errors
    slope_se = math.sqrt(cov[1, 1] * max(s2, 1.0))
    ols = stats.linregress(x, y)
    return {"slope": float(beta[1]), "intercept": float(beta[0]), "r2": float(r2),
            "slope_se": slope_se, "slope_unweighted": float(ols.slope),
            "r2_unweighted": float(ols.rvalue ** 2)}


def _curve(levels, logp, logse, r, mask, flags, meta):
    tc = TailCurve(np.asarray(levels, float), np.asarray(logp, float), np.asarray(logse, float),
                   r, fit_mask=mask, flags=flags, meta=meta)
    if mask.sum() >= 3:
        f = fit_tail(tc.levels[mask], tc.log_prob[mask], tc.log_se[mask], r)
        tc.slope, tc.intercept, tc.r2 = f["slope"], f["intercept"], f["r2"]
        tc.slope_se = f["slope_se"]
        tc.slope_unweighted, tc.r2_unweighted = f["slope_unweighted"], f["r2_unweighted"]
    else:
        flags.append("too few points in the fit window")
    return tc


def _require_regime(params):
    try:
        check_regime(params.kappa, params.p)
    except InvalidRegimeError:
        raise
    return scaling_exponents(params.kappa, params.p)


# -- cycle tail -------------------------------------------------------------------------

def tail_curve_cycle(params: ModelParams, u_grid=None, splitting: SplittingConfig = SplittingConfig(),
                     seed: int = 0, *, spec: DriftSpec | None = None, dt: float = 0.005,
                     prob_window=(1e-5, 1e-2), n_grid: int = 12, r_fit=None,
                     threads: int = 1) -> TailCurve:
    """Splitting estimate of ``P(C >= u)`` for the first cycle area and its fit.

    With ``u_grid=None`` the grid spans the pilot's estimate of the
    probability window with ``n_grid`` points equally spaced in ``u**r``.
    Only points whose estimated probability falls in ``prob_window`` enter
    the fit.
    """
    ex = _require_regime(params)
    r = ex.r if r_fit is None else r_fit
    delta = 0.5 if params.delta is None else params.delta
    spec = DriftSpec.exact(params.kappa) if spec is None else spec
    proc = CycleAreaProcess(spec, params.sigma, delta, params.p, dt)
    p_lo, p_hi = prob_window
    if u_grid is None:
        # run the pilot one level past the smallest target probability
        levels, plev = pilot_levels(proc, np.inf, SplittingConfig(
            splitting.n_particles, splitting.p_level, splitting.n_pilot, splitting.n_batches,
            min(splitting.max_levels,
                int(math.ceil(math.log(p_lo) / math.log(splitting.p_level))) + 1)), seed)
        lp = np.log(plev)
        lv = np.asarray(levels)
        u_hi_ = float(np.interp(math.log(p_lo), lp[::-1], lv[::-1]))
        u_lo_ = float(np.interp(math.log(p_hi), lp[::-1], lv[::-1]))
        u = np.linspace(u_lo_ ** ex.r, u_hi_ ** ex.r, n_grid) ** (1.0 / ex.r)
    else:
        u = np.asarray(u_grid, dtype=float)
        levels = None
    if levels is not None:
        levels = [L for L in levels if L < u[-1]]
    res = split_estimate(proc, u, splitting, seed, levels, threads)
    flags = [f"degenerate at u={uu:.6g}" for uu in u[res.degenerate]]
    mask = (res.prob >= p_lo) & (res.prob <= p_hi)
    meta = {"kind": "cycle", "delta": delta, "dt": dt, "n_levels": len(res.levels),
            "prob": res.prob.tolist(), "stderr": res.stderr.tolist()}
    return _curve(u, res.log_prob, res.log_se, r, mask, flags, meta)


# -- additive functional tail -------------------------------------------------------------

def tail_curve_additive(params: ModelParams, t_grid, b: float, replicas: int = 20000,
                        seed: int = 0, *, spec: DriftSpec | None = None, dt: float = 0.01,
                        splitting: SplittingConfig | None = None, min_hits: int = 50,
                        x0: float = 0.0, threads: int = 1) -> TailCurve:
    """``P(A(t) >= b)`` across horizons, ``A(t) = (1/t) int_0^t |X|**p``.

    Crude Monte Carlo with ``replicas`` paths per horizon; horizons where
    fewer than ``min_hits`` paths exceed ``b`` are re-estimated by splitting
    on the running integral.  Log-probabilities are computed from
    ``(hits + 1/2) / (replicas + 1)`` so that a horizon with no misses (or
    no hits) still carries a finite value and error.
    """
    ex = _require_regime(params)
    spec = DriftSpec.exact(params.kappa) if spec is None else spec
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size < 3 or np.any(np.diff(t_grid) <= 0):
        raise InvalidParameterError("t grid must be increasing with at least 3 points")
    logp, logse, method, flags = [], [], [], []
    for i, t in enumerate(t_grid):
        proc = AdditiveProcess(spec, params.sigma, params.p, t, dt, x0)
        u = [b * proc.n_steps * dt]
        p, _, hits = crude_estimate(proc, u, replicas, seed=_child(seed, 5, i))
        k = int(hits[0])
        if k >= min_hits or splitting is None:
            ps = (k + 0.5) / (replicas + 1)
            logp.append(math.log(ps))
            logse.append(math.sqrt((1 - ps) / (ps * (replicas + 1))))
            method.append("crude")
            if k == 0:
                flags.append(f"no exceedance at t={t:g}")
        else:
            res = split_estimate(proc, u, splitting, _child(seed, 6, i), threads=threads)
            if res.prob[0] <= 0:
                flags.append(f"degenerate splitting at t={t:g}")
                logp.append(-np.inf)
                logse.append(np.inf)
            else:
                logp.append(float(res.log_prob[0]))
                logse.append(float(res.log_se[0]))
            method.append("splitting")
    logp, logse = np.asarray(logp), np.asarray(logse)
    mask = np.isfinite(logp)
    meta = {"kind": "additive", "b": b, "dt": dt, "replicas": replicas, "method": method,
            "moment": stationary_moment(params)}
    return _curve(t_grid, logp, logse, ex.r, mask, flags, meta)


def _child(seed, *keys):
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


# -- weighted Weibull sums -------------------------------------------------------------------

def weibull_conditional_mc(r: float, n_terms: int, level: float, replicas: int = 20000,
                           seed: int = 0, chunk: int = 2000):
    """Conditional Monte Carlo for ``P(S >= level)`` (sum of ``n_terms`` Weibulls).

    Uses ``P(S > s) = n E[Fbar(max(M, s - S'))]`` where ``S'`` and ``M`` are
    the sum and maximum of ``n - 1`` terms.  Also returns the weighted median
    of the max-summand share under the conditional law, drawing the big term
    from its conditional distribution.

    Returns
    -------
    dict with keys prob, stderr, log_prob, share_median
    """
    n = int(n_terms)
    rng = _stage_rng(seed, 7)
    est = []
    shares, weights = [], []
    done = 0
    while done < replicas:
        m = min(chunk, replicas - done)
        xs = (-np.log1p(-rng.random((m, n - 1)))) ** (1.0 / r)
        S, M = xs.sum(axis=1), xs.max(axis=1)
        c = np.maximum(M, level - S)
        w = n * np.exp(-np.maximum(c, 0.0) ** r)
        est.append(w)
        # X | X > c has sqrt-type representation: X**r = c**r + Exp(1)
        y = (np.maximum(c, 0.0) ** r + rng.exponential(size=m)) ** (1.0 / r)
        shares.append(y / (S + y))
        weights.append(w)
        done += m
    w = np.concatenate(est)
    prob = float(w.mean())
    se = float(w.std(ddof=1) / math.sqrt(w.size))
    sh, wt = np.concatenate(shares), np.concatenate(weights)
    order = np.argsort(sh)
    cw = np.cumsum(wt[order])
    med = float(sh[order][np.searchsorted(cw, 0.5 * cw[-1])])
    return {"prob": prob, "stderr": se, "log_prob": math.log(prob), "share_median": med}


def weibull_sum_check(r: float = 0.5, n_grid=(400,), x_grid=(4.0,), B: float = 1.0,
                      splitting: SplittingConfig = SplittingConfig(), seed: int = 0,
                      oracle_replicas: int = 20000, threads: int = 1):
    """Normalised log-probabilities of ``S_floor(nB) / n >= x`` against ``-(x - mB)**r``.

    ``m = Gamma(1 + 1/r)`` is the mean of one summand.  For every ``(n, x)``
    the splitting estimate, the conditional Monte Carlo oracle, the limit and
    the relative error of the splitting value are reported, with the median
    max-summand share among the splitting particles that end above the level
    and the ``0.9 (x - mB) / x`` signature threshold.
    """
    mean = math.gamma(1.0 + 1.0 / r)
    rows = []
    for i, n in enumerate(n_grid):
        k = int(math.floor(n * B))
        for j, x in enumerate(x_grid):
            if x <= mean * B:
                raise InvalidParameterError("x must exceed m B")
            level = n * x
            proc = WeibullSumProcess(r, k)
            res = split_estimate(proc, [level], splitting, _child(seed, 8, i, j),
                                 threads=threads)
            share = []
            for st in res.final_states:
                if st is not None:
                    hit = st["sum"] >= level
                    share.append(st["mx"][hit] / st["sum"][hit])
            share = np.concatenate(share) if share else np.zeros(0)
            orc = weibull_conditional_mc(r, k, level, oracle_replicas, _child(seed, 9, i, j))
            limit = -((x - mean * B) ** r)
            norm = float(res.log_prob[0]) / n ** r if res.prob[0] > 0 else -np.inf
            rows.append({
                "n": n, "x": x, "limit": limit, "normalised": norm,
                "normalised_se": float(res.log_se[0]) / n ** r,
                "oracle_normalised": orc["log_prob"] / n ** r,
                "rel_error": abs(norm - limit) / abs(limit),
                "share_median": float(np.median(share)) if share.size else np.nan,
                "oracle_share_median": orc["share_median"],
                "share_threshold": 0.9 * (x - mean * B) / x,
                "prob": float(res.prob[0]), "prob_se": float(res.stderr[0]),
                "oracle_prob": orc["prob"], "oracle_se": orc["stderr"],
            })
    return {"r": r, "B": B, "mean": mean, "rows": rows}


# -- Cramer rate and renewal concentration ------------------------------------------------------

def stable_theta(durations, threshold: float = 0.85, q: float = 0.99, n_grid: int = 200):
    """Largest positive ``theta`` on a grid before the m.g.f. stability ratio drops.

    The grid runs up to ``10 / mean``.
    """
    s = np.asarray(durations, dtype=float)
    thetas = np.linspace(0.0, 10.0 / s.mean(), n_grid + 1)[1:]
    last = 0.0
    for th in thetas:
        _, ratio = mgf_estimate(s, th, q)
        if ratio < threshold:
            break
        last = float(th)
    return last


def _log_mgf(s, theta):
    return float(special.logsumexp(theta * s) - math.log(s.size))


def cramer_rate(durations, z: float, *, theta_max=None, theta_min=None,
                threshold: float = 0.85) -> float:
    """Empirical Legendre transform ``sup_theta theta z - log mean exp(theta tau)``.

    ``theta`` ranges over ``[theta_min, theta_max]``; the upper end defaults
    to the stable window of :func:`stable_theta` and the lower one to
    ``-50 / mean`` (negative ``theta`` always gives a finite m.g.f.).

    Examples
    --------
    >>> import numpy as np
    >>> tau = np.random.default_rng(1).exponential(size=200000)
    >>> round(cramer_rate(tau, 2.0), 2)
    0.31
    """
    if not z > 0:
        raise InvalidParameterError("z must be positive")
    s = np.asarray(durations, dtype=float)
    if s.size < 2:
        raise InvalidParameterError("need at least two durations")
    mu = s.mean()
    hi = stable_theta(s, threshold) if theta_max is None else theta_max
    lo = -50.0 / mu if theta_min is None else theta_min
    if z >= mu and hi <= 0:
        raise InvalidParameterError("empty stable window for z above the mean")
    a, b = (0.0, hi) if z >= mu else (lo, 0.0)
    res = optimize.minimize_scalar(lambda th: _log_mgf(s, th) - th * z, bounds=(a, b),
                                   method="bounded", options={"xatol": 1e-10})
    return max(0.0, -float(res.fun))


def renewal_rate(durations, x: float, **kw):
    """The combined renewal-count rate built from two empirical Cramer rates.

    With ``mu`` the mean duration, the lower-deviation term is
    ``(x + 1/mu) Lambda*(mu / (1 + x mu))`` and, for ``x < 1/mu``, the
    upper-deviation term is ``(1/mu - x) Lambda*(mu / (1 - x mu))``; the
    rate is the smaller of the two.
    """
    if not x > 0:
        raise InvalidParameterError("x must be positive")
    s = np.asarray(durations, dtype=float)
    mu = s.mean()
    i1 = (x + 1 / mu) * cramer_rate(s, mu / (1 + x * mu), **kw)
    if x * mu < 1:
        i2 = (1 / mu - x) * cramer_rate(s, mu / (1 - x * mu), **kw)
        return min(i1, i2), i1, i2
    return i1, i1, np.inf


def n_delta_concentration(params: ModelParams, t: float, x: float, replicas: int = 100000,
                          *, spec: DriftSpec | None = None, dt: float = 0.01, seed: int = 0,
                          duration_replicas: int = 2000, duration_horizon: float = 200.0,
                          x_in_mean_units: bool = False):
    """Empirical ``P(|N(t)/t - 1/mu| >= x)`` against the assembled Cramer bound.

    Cycle durations for the empirical m.g.f. come from an independent
    simulation (seed stream 1), the counts from ``replicas`` paths (seed
    stream 2).  With ``x_in_mean_units`` the deviation is ``x / mu``.
    """
    delta = 0.5 if params.delta is None else params.delta
    spec = DriftSpec.exact(params.kappa) if spec is None else spec
    tab = simulate_cycles(params, spec, delta, duration_horizon, dt, _child(seed, 1),
                          duration_replicas, powers=(params.p,))
    # equal cycle counts per replica: no preference for short cycles at the horizon
    tau = tab.balanced().durations
    mu = float(tau.mean())
    xx = x / mu if x_in_mean_units else x
    rate, i1, i2 = renewal_rate(tau, xx)
    counts = count_renewals(params, spec, delta, t, dt, _child(seed, 2), replicas)
    dev = np.abs(counts / t - 1.0 / mu)
    k = int(np.sum(dev >= xx))
    freq = k / replicas
    out = {"t": t, "x": xx, "mean_duration": mu, "n_durations": int(tau.size),
           "rate": rate, "rate_lower": i1, "rate_upper": i2, "hits": k,
           "replicas": replicas, "frequency": freq,
           "mean_count_rate": float(counts.mean() / t)}
    if k == 0:
        out.update(log_rate=-np.inf, log_rate_se=np.nan, bound_only=True, holds=True,
                   log_rate_upper=math.log(3.0 / replicas) / t)
    else:
        se = math.sqrt((1 - freq) / (k)) / t
        lr = math.log(freq) / t
        out.update(log_rate=lr, log_rate_se=se, bound_only=False,
                   holds=bool(lr <= -rate + 3 * se))
    return out
