"""Euler-Maruyama integration of ``dX = drift(X) dt + amp dB``."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .drift import DriftSpec
from .errors import InvalidParameterError
from .noise import NoiseStream
from .params import ModelParams, scaling_exponents

__all__ = [
    "SamplePath", "euler_maruyama", "simulate_path", "simulate_scaled",
    "simulate_ensemble", "scaled_noise_amplitude", "area_functional",
    "write_path_csv", "read_path_csv",
]


@dataclass
class SamplePath:
    """A discretised trajectory on a uniform grid.

    ``noise_amp`` and ``seed``/``replica`` are kept so that cycle detection
    can redraw the bridge-crossing uniforms that belong to this path.
    """

    times: np.ndarray
    values: np.ndarray
    dt: float
    noise_amp: float = 0.0
    seed: int | None = None
    replica: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise InvalidParameterError("times and values must be 1-d arrays of equal length")

    @property
    def horizon(self):
        return float(self.times[-1])

    def __len__(self):
        return self.values.size

    @classmethod
    def from_function(cls, fun, horizon, dt):
        """Deterministic path sampled from ``fun`` on ``[0, horizon]``."""
        n = int(round(horizon / dt))
        t = np.linspace(0.0, n * dt, n + 1)
        return cls(t, np.asarray(fun(t), dtype=float) * np.ones_like(t), dt)


def _check_grid(horizon, dt):
    if not (dt > 0 and math.isfinite(dt)):
        raise InvalidParameterError(f"dt must be positive, got {dt!r}")
    if not (horizon > 0 and math.isfinite(horizon)):
        raise InvalidParameterError(f"horizon must be positive, got {horizon!r}")
    return int(math.ceil(horizon / dt - 1e-9))


def euler_maruyama(spec: DriftSpec, noise_amp: float, x0: float, n_steps: int,
                   dt: float, seed: int | None = 0, replica: int = 0):
    """Return the ``n_steps + 1`` Euler-Maruyama iterates of one replica.

    ``noise_amp = 0`` integrates the deterministic flow and ignores ``seed``.
    """
    if noise_amp < 0:
        raise InvalidParameterError("noise amplitude must be non-negative")
    x = np.empty(n_steps + 1)
    x[0] = x0
    if noise_amp > 0:
        dw = (NoiseStream(seed).normals(replica, 0, n_steps) * (math.sqrt(dt) * noise_amp)).tolist()
    else:
        dw = [0.0] * n_steps
    # scalar loop: the drift is cheap and paths are one-dimensional
    drift = spec.scalar()
    xi = float(x0)
    for k in range(n_steps):
        xi = xi + drift(xi) * dt + dw[k]
        x[k + 1] = xi
    return x


def _em_vectorised(spec, noise_amp, x0, n_steps, dt, seed, replica):
    # identical arithmetic to euler_maruyama, vectorised over replicas
    replica = np.atleast_1d(np.asarray(replica, dtype=np.int64))
    stream = NoiseStream(seed)
    out = np.empty((n_steps + 1, replica.size))
    out[0] = x0
    z = stream.normal_matrix(replica, 0, n_steps) * (math.sqrt(dt) * noise_amp)
    x = out[0].copy()
    for k in range(n_steps):
        x = x + spec.value(x) * dt + z[k]
        out[k + 1] = x
    return out


def simulate_path(params: ModelParams, spec: DriftSpec, x0: float, horizon: float,
                  dt: float, seed: int = 0, replica: int = 0) -> SamplePath:
    """Simulate one replica of ``dX = spec(X) dt + sigma dB`` on ``[0, horizon]``.

    Examples
    --------
    >>> from ldlangevin import ModelParams, DriftSpec
    >>> pth = simulate_path(ModelParams(1.0, 4.0), DriftSpec.exact(1.0), 0.0, 1.0, 0.01)
    >>> len(pth)
    101
    """
    n = _check_grid(horizon, dt)
    vals = euler_maruyama(spec, params.sigma, x0, n, dt, seed, replica)
    return SamplePath(np.arange(n + 1) * dt, vals, dt, params.sigma, seed, replica,
                      {"drift": spec.to_dict(), "params": params.to_dict()})


def scaled_noise_amplitude(params: ModelParams, t: float) -> float:
    """Noise amplitude of the space-time rescaled process at scale ``t``."""
    ex = scaling_exponents(params.kappa, params.p)
    return params.sigma * t ** (-ex.noise_exponent())


def simulate_scaled(params: ModelParams, t: float, spec: DriftSpec, x0: float,
                    horizon: float, dt: float, seed: int = 0,
                    replica: int = 0) -> SamplePath:
    """Simulate the rescaled process ``X(u t**beta) / t**(alpha/p)``.

    The rescaled process solves the same equation with noise amplitude
    ``sigma * t**(-r/2)``.
    """
    if not t > 0:
        raise InvalidParameterError("scale t must be positive")
    amp = scaled_noise_amplitude(params, t)
    n = _check_grid(horizon, dt)
    vals = euler_maruyama(spec, amp, x0, n, dt, seed, replica)
    return SamplePath(np.arange(n + 1) * dt, vals, dt, amp, seed, replica,
                      {"drift": spec.to_dict(), "params": params.to_dict(), "scale": t})


def simulate_ensemble(params: ModelParams, spec: DriftSpec, x0: float, horizon: float,
                      dt: float, seed: int = 0, replicas=8, noise_amp=None):
    """Simulate several replicas at once; returns an array ``(n_steps + 1, R)``.

    ``replicas`` is a count or an explicit array of replica indices.  Replica
    ``i`` is identical to ``simulate_path(..., replica=i)``.
    """
    n = _check_grid(horizon, dt)
    ids = np.arange(replicas) if np.isscalar(replicas) else np.asarray(replicas)
    amp = params.sigma if noise_amp is None else noise_amp
    return _em_vectorised(spec, amp, x0, n, dt, seed, ids)


def area_functional(path: SamplePath, p: float, stop: float | None = None) -> float:
    """Trapezoidal ``int_0^stop |X(s)|**p ds`` with linear interpolation at ``stop``."""
    t, x = path.times, path.values
    if stop is None or stop >= t[-1]:
        return float(trapezoid(np.abs(x) ** p, t))
    if stop <= t[0]:
        return 0.0
    k = int(np.searchsorted(t, stop, side="right")) - 1
    xs = np.interp(stop, t, x)
    head = float(trapezoid(np.abs(x[:k + 1]) ** p, t[:k + 1]))
    return head + 0.5 * (stop - t[k]) * (abs(x[k]) ** p + abs(xs) ** p)


def write_path_csv(path: SamplePath, fname) -> None:
    """Write a path as a two-column CSV with header ``time,value``."""
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "value"])
        for ti, xi in zip(path.times, path.values):
            w.writerow([repr(float(ti)), repr(float(xi))])


def read_path_csv(fname) -> SamplePath:
    data = np.loadtxt(fname, delimiter=",", skiprows=1, ndmin=2)
    t, x = data[:, 0], data[:, 1]
    dt = float(t[1] - t[0]) if t.size > 1 else 0.0
    return SamplePath(t, x, dt)
