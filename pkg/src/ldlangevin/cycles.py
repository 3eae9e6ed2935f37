"""Regenerative cycles of a path around the origin.

A cycle starts when the path sits at 0, waits until ``|X|`` first reaches
``delta`` (the entry event) and ends when ``X`` next returns to 0.  Entry and
return times are located by linear interpolation inside the step.  Returns
to 0 that happen between two grid points of equal sign are caught by the
Brownian-bridge test: the bridge from ``a`` to ``b`` (``ab > 0``) over a step
``dt`` visits 0 with probability ``exp(-2ab / (amp**2 dt))``.  The same test
is optionally applied to entries (``bridge_entry``); it is off by default.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .drift import DriftSpec
from .errors import InvalidParameterError
from .noise import BLOCK, BRIDGE, ENTRY, NoiseStream
from .params import ModelParams
from .sde import SamplePath

__all__ = [
    "CycleRecord", "CycleTable", "detect_cycles", "simulate_cycles",
    "renewal_count", "regenerative_moment_ratio", "RatioEstimate",
    "mgf_estimate", "big_jump_diagnostic", "count_renewals",
    "write_cycles_csv", "bridge_cross_probability", "entry_cross_probability",
]


@dataclass(frozen=True)
class CycleRecord:
    """One cycle: start and end times, entry time, area and peak ``|X|``."""

    start: float
    end: float
    duration: float
    area: float
    peak: float
    entry: float = math.nan
    complete: bool = True
    replica: int = 0


@dataclass
class CycleTable:
    """Column store of many cycles; ``areas`` has one column per power."""

    replica: np.ndarray
    start: np.ndarray
    entry: np.ndarray
    end: np.ndarray
    areas: np.ndarray
    peak: np.ndarray
    powers: tuple
    horizon: float = math.nan
    n_replicas: int = 0

    @property
    def durations(self):
        return self.end - self.start

    def __len__(self):
        return self.start.size

    def area(self, p=None):
        j = 0 if p is None else self.powers.index(p)
        return self.areas[:, j]

    def records(self, p=None):
        a = self.area(p)
        return [CycleRecord(float(s), float(e), float(e - s), float(c), float(m),
                            float(en), True, int(r))
                for s, e, c, m, en, r in zip(self.start, self.end, a, self.peak,
                                             self.entry, self.replica)]

    def first_cycles(self):
        """Sub-table with the first cycle of every replica."""
        order = np.lexsort((self.start, self.replica))
        rep = self.replica[order]
        keep = order[np.r_[True, rep[1:] != rep[:-1]]] if rep.size else order
        return self.subset(keep)

    def counts(self):
        nrep = self.n_replicas or (int(self.replica.max()) + 1 if self.replica.size else 0)
        return np.bincount(self.replica, minlength=nrep)

    def balanced(self, k=None):
        """First ``k`` cycles of every replica (``k`` defaults to the smallest count).

        Cycles that end before a fixed horizon are biased towards short
        cycles; the first ``k`` cycles of each replica are i.i.d. as long as
        every replica completed ``k`` of them.
        """
        cnt = self.counts()
        k = int(cnt.min()) if k is None else int(k)
        order = np.lexsort((self.start, self.replica))
        rep = self.replica[order]
        first = np.searchsorted(rep, rep, side="left")
        rank = np.arange(rep.size) - first
        return self.subset(order[rank < k])

    def subset(self, idx):
        return CycleTable(self.replica[idx], self.start[idx], self.entry[idx],
                          self.end[idx], self.areas[idx], self.peak[idx],
                          self.powers, self.horizon, self.n_replicas)


def bridge_cross_probability(a, b, amp, dt):
    """Probability that a Brownian bridge from ``a`` to ``b`` hits 0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = a * b
    with np.errstate(over="ignore"):
        prob = np.exp(-2.0 * np.maximum(ab, 0.0) / (amp * amp * dt))
    return np.where(ab <= 0, 1.0, prob)


def _cross_fraction(xo, xn, sign_change):
    # fraction of the step at which the path sits at 0
    with np.errstate(invalid="ignore", divide="ignore"):
        lin = np.where(xo != xn, xo / (xo - xn), 0.0)
        near = np.abs(xo) / (np.abs(xo) + np.abs(xn))
    return np.clip(np.where(sign_change, lin, near), 0.0, 1.0)


def entry_cross_probability(a, b, delta, amp, dt):
    """Probability that a Brownian bridge from ``a`` to ``b`` inside ``(-delta, delta)``
    touches ``+delta`` or ``-delta``; 1 if an endpoint is already outside."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    k = 2.0 / (amp * amp * dt)
    up = np.maximum(delta - a, 0.0) * np.maximum(delta - b, 0.0)
    dn = np.maximum(delta + a, 0.0) * np.maximum(delta + b, 0.0)
    # either barrier; the two events are treated as independent
    pu, pd = np.exp(-k * up), np.exp(-k * dn)
    prob = pu + pd - pu * pd
    return np.where((np.abs(a) >= delta) | (np.abs(b) >= delta), 1.0, prob)


def _entry_fraction(xo, xn, delta):
    lvl = np.where(xn >= 0, delta, -delta)
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.where(xn != xo, (lvl - xo) / (xn - xo), 1.0)
    return np.clip(f, 0.0, 1.0)


def _bridge_entry_fraction(xo, xn, delta):
    # closer endpoint to the layer gets the entry time
    go = delta - np.abs(xo)
    gn = delta - np.abs(xn)
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.where(go + gn > 0, go / (go + gn), 0.5)
    return np.clip(f, 0.0, 1.0)


def _path_uniforms(path, n, channel=BRIDGE):
    if path.noise_amp > 0 and path.seed is not None:
        return NoiseStream(path.seed).uniforms(path.replica, 0, n, channel)
    return None


def detect_cycles(path: SamplePath, delta: float, p: float = 1.0,
                  bridge: bool = True, bridge_entry: bool = False) -> list[CycleRecord]:
    """Split ``path`` into cycles.

    Parameters
    ----------
    path : SamplePath
        Uniformly sampled path.
    delta : float
        Layer half-width.
    p : float
        Power of the area ``int |X|**p`` reported per cycle.
    bridge : bool
        Apply the bridge crossing test to returns to 0.  Only active when the
        path carries a noise amplitude and a seed.
    bridge_entry : bool
        Apply the analogous test to entries into ``|x| >= delta``.  Without it
        the entry is only seen at grid points, which lengthens cycles by
        ``O(sqrt(dt))``.

    Returns
    -------
    list of CycleRecord
        Complete cycles, followed by the trailing partial cycle flagged with
        ``complete=False``.  If the path does not start at 0 the first record
        spans from time 0 and is still reported.
    """
    if not delta > 0:
        raise InvalidParameterError("delta must be positive")
    t, x = path.times, path.values
    n = x.size - 1
    if n < 1:
        return []
    xo, xn = x[:-1], x[1:]
    dt = np.diff(t)
    sign_change = xo * xn <= 0
    cross = sign_change.copy()
    u = _path_uniforms(path, n) if bridge else None
    if u is not None:
        dtb = path.dt
        cross |= u < bridge_cross_probability(xo, xn, path.noise_amp, dtb)
    reach = np.abs(xn) >= delta
    in_step = np.zeros(n, dtype=bool)
    if bridge_entry:
        ue = _path_uniforms(path, n, ENTRY)
        if ue is not None:
            in_step = ~reach & (ue < entry_cross_probability(xo, xn, delta, path.noise_amp,
                                                             path.dt))
            reach |= in_step
    cross_idx = np.flatnonzero(cross)
    reach_idx = np.flatnonzero(reach)
    ax = np.abs(x) ** p
    # cumulative trapezoid: cum[k] = area on [t_0, t_k]
    cum = np.concatenate(([0.0], np.cumsum(0.5 * dt * (ax[:-1] + ax[1:]))))
    absx = np.abs(x)

    def _efrac(k):
        if in_step[k]:
            return _bridge_entry_fraction(xo[k], xn[k], delta)
        return _entry_fraction(xo[k], xn[k], delta)

    out = []
    kb, tb = 0, t[0]
    first = True
    while True:
        i = np.searchsorted(reach_idx, kb)
        ka = int(reach_idx[i]) if i < reach_idx.size else None
        kc = None
        if ka is not None:
            j = np.searchsorted(cross_idx, ka + 1)
            kc = int(cross_idx[j]) if j < cross_idx.size else None
        if kc is None:
            # trailing partial cycle
            head = 0.5 * (t[kb + 1] - tb) * ((ax[kb] if first else 0.0) + ax[kb + 1])
            area = head + cum[n] - cum[kb + 1]
            peak = float(absx[kb + 1:].max()) if kb + 1 <= n else 0.0
            ent = math.nan
            if ka is not None:
                ent = t[ka] + dt[ka] * float(_efrac(ka))
            out.append(CycleRecord(float(tb), float(t[n]), float(t[n] - tb), float(area),
                                   peak, ent, False, path.replica))
            break
        fa = float(_efrac(ka))
        ta = t[ka] + dt[ka] * fa
        fc = float(_cross_fraction(xo[kc], xn[kc], sign_change[kc]))
        tc = t[kc] + dt[kc] * fc
        head = 0.5 * (t[kb + 1] - tb) * ((ax[kb] if first else 0.0) + ax[kb + 1])
        tail = 0.5 * (tc - t[kc]) * ax[kc]
        area = head + (cum[kc] - cum[kb + 1]) + tail
        peak = float(absx[kb + 1:kc + 1].max())
        out.append(CycleRecord(float(tb), float(tc), float(tc - tb), float(area), peak,
                               float(ta), True, path.replica))
        kb, tb, first = kc, tc, False
    return out


def renewal_count(records, t: float) -> int:
    """Number of complete cycles that have ended by time ``t``."""
    if isinstance(records, CycleTable):
        return int(np.count_nonzero(records.end <= t))
    return sum(1 for c in records if c.complete and c.end <= t)


def _arrays(records, p=None):
    if isinstance(records, CycleTable):
        return records.durations, records.area(p)
    recs = [c for c in records if c.complete]
    return (np.array([c.duration for c in recs], dtype=float),
            np.array([c.area for c in recs], dtype=float))


@dataclass(frozen=True)
class RatioEstimate:
    """Regenerative ratio ``sum(area) / sum(duration)`` with a delta-method CI."""

    estimate: float
    stderr: float
    ci_low: float
    ci_high: float
    n_cycles: int

    def overlaps(self, other: "RatioEstimate") -> bool:
        return self.ci_low <= other.ci_high and other.ci_low <= self.ci_high


def regenerative_moment_ratio(records, p=None, level: float = 0.95) -> RatioEstimate:
    """Estimate ``E|X(inf)|**p`` as mean cycle area over mean cycle length.

    ``records`` is a :class:`CycleTable`, a list of :class:`CycleRecord` or a
    sequence of ``(duration, area)`` pairs.
    """
    if len(records) and isinstance(records, (list, tuple)) and \
            not isinstance(records[0], CycleRecord):
        arr = np.asarray(records, dtype=float)
        tau, c = arr[:, 0], arr[:, 1]
    else:
        tau, c = _arrays(records, p)
    n = tau.size
    if n == 0:
        raise InvalidParameterError("no complete cycles")
    est = float(c.sum() / tau.sum())
    if n > 1:
        resid = c - est * tau
        se = float(np.sqrt(resid.var(ddof=1) / n) / tau.mean())
    else:
        se = math.inf
    z = stats.norm.ppf(0.5 + level / 2)
    return RatioEstimate(est, se, est - z * se, est + z * se, n)


def mgf_estimate(samples, theta: float, q: float = 0.99):
    """Empirical ``E exp(theta tau)`` and a stability ratio.

    The ratio compares the estimate after winsorising the sample at its
    ``q`` quantile with the plain estimate.  Values close to 1 indicate that
    the estimate is not driven by the few largest samples.

    Returns
    -------
    value : float
    ratio : float
    """
    s = np.asarray(samples, dtype=float)
    if s.size == 0:
        raise InvalidParameterError("empty sample")
    lv = logsumexp(theta * s) - math.log(s.size)
    cap = np.quantile(s, q)
    lw = logsumexp(theta * np.minimum(s, cap)) - math.log(s.size)
    return float(math.exp(lv)), float(math.exp(lw - lv))


def big_jump_diagnostic(table: CycleTable, t: float, b: float, p=None):
    """Share of the largest cycle in the total area, with and without conditioning.

    For every replica, cycles ending by ``t`` are summed.  The conditioned
    group has ``total / t >= b``.  A one-sided Mann-Whitney test checks that
    the conditioned max-share is stochastically larger.

    Returns
    -------
    dict
        ``share_all``, ``share_cond`` arrays, medians and ``p_value``.
    """
    sel = table.end <= t
    rep = table.replica[sel]
    area = table.area(p)[sel]
    nrep = table.n_replicas or (int(table.replica.max()) + 1 if table.replica.size else 0)
    tot = np.bincount(rep, weights=area, minlength=nrep)
    mx = np.zeros(nrep)
    np.maximum.at(mx, rep, area)
    ok = tot > 0
    share = np.where(ok, mx / np.where(ok, tot, 1.0), np.nan)
    cond = ok & (tot / t >= b)
    share_all = share[ok]
    share_cond = share[cond]
    pval = math.nan
    if share_cond.size and share_all.size:
        pval = float(stats.mannwhitneyu(share_cond, share_all,
                                        alternative="greater").pvalue)
    return {
        "share_all": share_all, "share_cond": share_cond,
        "median_all": float(np.median(share_all)) if share_all.size else math.nan,
        "median_cond": float(np.median(share_cond)) if share_cond.size else math.nan,
        "n_cond": int(share_cond.size), "p_value": pval,
    }


# -- streaming simulation ------------------------------------------------------

def _run_chunk(spec, amp, delta, powers, x0, n_steps, dt, seed, ids, bridge,
               count_only, bridge_entry=False):
    stream = NoiseStream(seed)
    R = ids.size
    x = np.full(R, float(x0))
    phase = np.zeros(R, dtype=np.int8)
    start = np.zeros(R)
    entry = np.full(R, np.nan)
    peak = np.abs(x)
    npow = len(powers)
    acc = np.zeros((R, npow))
    axo = np.abs(x)[:, None] ** np.asarray(powers)[None, :]
    count = np.zeros(R, dtype=np.int64)
    pw = np.asarray(powers, dtype=float)[None, :]
    sq = math.sqrt(dt) * amp
    recs = []
    step = 0
    while step < n_steps:
        nb = min(BLOCK - step % BLOCK, n_steps - step)
        z = stream.normal_matrix(ids, step, nb) * sq
        u = stream.uniform_matrix(ids, step, nb) if bridge else None
        ue = stream.uniform_matrix(ids, step, nb, ENTRY) if bridge_entry else None
        for j in range(nb):
            k = step + j
            t0 = k * dt
            xn = x + spec.value(x) * dt + z[j]
            # returns to 0 of replicas in the second half of their cycle
            in1 = phase == 1
            sc = x * xn <= 0
            cr = in1 & sc
            if bridge:
                cr |= in1 & ~sc & (u[j] < bridge_cross_probability(x, xn, amp, dt))
            if count_only:
                count += cr
            axn = None if count_only else np.abs(xn)[:, None] ** pw
            if cr.any():
                idx = np.flatnonzero(cr)
                f = _cross_fraction(x[idx], xn[idx], sc[idx])
                tc = t0 + dt * f
                if not count_only:
                    acc[idx] += 0.5 * (dt * f)[:, None] * axo[idx]
                    recs.append((ids[idx], start[idx].copy(), entry[idx].copy(), tc,
                                 acc[idx].copy(), peak[idx].copy()))
                    acc[idx] = 0.5 * (dt * (1 - f))[:, None] * axn[idx]
                    peak[idx] = 0.0
                start[idx] = tc
                entry[idx] = np.nan
                phase[idx] = 0
            if not count_only:
                nc = ~cr
                acc[nc] += 0.5 * dt * (axo[nc] + axn[nc])
                peak = np.maximum(peak, np.abs(xn))
            # entry into the outer region
            ent = (phase == 0) & (np.abs(xn) >= delta)
            if bridge_entry:
                bent = (phase == 0) & ~ent & \
                    (ue[j] < entry_cross_probability(x, xn, delta, amp, dt))
                if bent.any():
                    idx = np.flatnonzero(bent)
                    entry[idx] = t0 + dt * _bridge_entry_fraction(x[idx], xn[idx], delta)
                    phase[idx] = 1
            if ent.any():
                idx = np.flatnonzero(ent)
                entry[idx] = t0 + dt * _entry_fraction(x[idx], xn[idx], delta)
                phase[idx] = 1
            x = xn
            axo = axn
        step += nb
    return recs, count, x


def simulate_cycles(params: ModelParams, spec: DriftSpec, delta: float, horizon: float,
                    dt: float, seed: int = 0, replicas: int = 1000, powers=None,
                    x0: float = 0.0, bridge: bool = True, chunk: int = 4000,
                    noise_amp: float | None = None,
                    bridge_entry: bool = False) -> CycleTable:
    """Simulate many independent replicas and collect their complete cycles.

    Replica ``i`` uses the same noise as ``simulate_path(..., replica=i)``, so
    ``detect_cycles`` on that path returns the same cycles.

    Parameters
    ----------
    powers : sequence of float, optional
        Powers for which cycle areas are accumulated; defaults to ``(params.p,)``.
    chunk : int
        Number of replicas advanced together.
    bridge, bridge_entry : bool
        Bridge crossing tests for returns to 0 and for entries into the
        outer region, as in :func:`detect_cycles`.
    """
    if not delta > 0:
        raise InvalidParameterError("delta must be positive")
    powers = tuple(float(q) for q in (powers or (params.p,)))
    amp = params.sigma if noise_amp is None else float(noise_amp)
    n_steps = int(math.ceil(horizon / dt - 1e-9))
    ids_all = np.arange(replicas) if np.isscalar(replicas) else np.asarray(replicas)
    parts = []
    for c0 in range(0, ids_all.size, chunk):
        ids = ids_all[c0:c0 + chunk]
        recs, _, _ = _run_chunk(spec, amp, delta, powers, x0, n_steps, dt, seed, ids,
                                bridge, False, bridge_entry)
        parts.extend(recs)
    if parts:
        rep = np.concatenate([r[0] for r in parts])
        st = np.concatenate([r[1] for r in parts])
        en = np.concatenate([r[2] for r in parts])
        tc = np.concatenate([r[3] for r in parts])
        ar = np.concatenate([r[4] for r in parts])
        pk = np.concatenate([r[5] for r in parts])
    else:
        rep = np.zeros(0, dtype=np.int64)
        st = en = tc = pk = np.zeros(0)
        ar = np.zeros((0, len(powers)))
    order = np.lexsort((st, rep))
    return CycleTable(rep[order], st[order], en[order], tc[order], ar[order], pk[order],
                      powers, n_steps * dt, int(ids_all.size))


def count_renewals(params: ModelParams, spec: DriftSpec, delta: float, horizon: float,
                   dt: float, seed: int = 0, replicas: int = 1000, bridge: bool = True,
                   chunk: int = 10000, bridge_entry: bool = False):
    """Number of complete cycles by ``horizon`` for every replica."""
    n_steps = int(math.ceil(horizon / dt - 1e-9))
    ids_all = np.arange(replicas) if np.isscalar(replicas) else np.asarray(replicas)
    counts = []
    for c0 in range(0, ids_all.size, chunk):
        ids = ids_all[c0:c0 + chunk]
        _, cnt, _ = _run_chunk(spec, params.sigma, delta, (1.0,), 0.0, n_steps, dt,
                               seed, ids, bridge, True, bridge_entry)
        counts.append(cnt)
    return np.concatenate(counts) if counts else np.zeros(0, dtype=np.int64)


def write_cycles_csv(records, fname, p=None) -> None:
    """Write cycles as CSV with columns ``start,end,duration,area,peak``."""
    if isinstance(records, CycleTable):
        records = records.records(p)
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["start", "end", "duration", "area", "peak"])
        for c in records:
            if c.complete:
                w.writerow([repr(c.start), repr(c.end), repr(c.duration),
                            repr(c.area), repr(c.peak)])
