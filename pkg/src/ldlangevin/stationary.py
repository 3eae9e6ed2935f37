"""Invariant law of ``dX = -sgn(X)|X|**kappa dt + sigma dB``.

The density is proportional to ``exp(-a |x|**(kappa+1))`` with
``a = 2 / ((kappa+1) sigma**2)``, which gives closed-form absolute moments.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, special

from .errors import InvalidParameterError
from .params import ModelParams

__all__ = ["StationaryLaw", "stationary_moment"]


class StationaryLaw:
    """Gibbs-type invariant law of the exact-drift diffusion.

    Parameters
    ----------
    kappa : float
        Drift exponent in ``(0, 1]``.
    sigma : float, optional
        Noise amplitude.
    """

    def __init__(self, kappa: float, sigma: float = 1.0):
        if not (0.0 < kappa <= 1.0):
            raise InvalidParameterError(f"kappa must lie in (0, 1], got {kappa!r}")
        if not sigma > 0:
            raise InvalidParameterError(f"sigma must be positive, got {sigma!r}")
        self.kappa = float(kappa)
        self.sigma = float(sigma)
        self.k1 = self.kappa + 1.0
        self.a = 2.0 / (self.k1 * self.sigma ** 2)
        self.log_norm = math.log(2.0 / self.k1) + special.gammaln(1.0 / self.k1) \
            - math.log(self.a) / self.k1

    @classmethod
    def from_params(cls, params: ModelParams):
        return cls(params.kappa, params.sigma)

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        return -self.a * np.abs(x) ** self.k1 - self.log_norm

    def density(self, x):
        return np.exp(self.log_density(x))

    def moment(self, p: float) -> float:
        """Closed form ``E|X|**p`` for ``p > -1``."""
        if not p > -1:
            raise InvalidParameterError("moment order must exceed -1")
        k1 = self.k1
        return float(math.exp(special.gammaln((p + 1) / k1) - special.gammaln(1 / k1)
                              - (p / k1) * math.log(self.a)))

    def moment_quadrature(self, p: float) -> float:
        """``E|X|**p`` by adaptive quadrature of the density."""
        val, _ = integrate.quad(lambda x: x ** p * self.density(x), 0.0, np.inf,
                                epsabs=0.0, epsrel=1e-12, limit=200)
        return 2.0 * val

    def sample(self, n: int, seed: int = 0):
        """Exact draws: ``a |X|**(kappa+1)`` is Gamma(1/(kappa+1)) distributed."""
        rng = np.random.default_rng(seed)
        g = rng.gamma(1.0 / self.k1, size=n)
        sgn = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        return sgn * (g / self.a) ** (1.0 / self.k1)


def stationary_moment(params: ModelParams) -> float:
    """``E|X(inf)|**p`` for the parameters' ``kappa``, ``p`` and ``sigma``."""
    return StationaryLaw(params.kappa, params.sigma).moment(params.p)
