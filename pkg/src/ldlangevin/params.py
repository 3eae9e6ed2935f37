"""Model parameters and the scaling exponents attached to them."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

from .errors import InvalidParameterError, InvalidRegimeError

__all__ = ["ModelParams", "ScalingExponents", "scaling_exponents", "check_regime"]


def check_regime(kappa: float, p: float) -> None:
    """Raise unless ``0 < kappa <= 1`` and ``p > 2 kappa``."""
    if not (math.isfinite(kappa) and 0.0 < kappa <= 1.0):
        raise InvalidParameterError(f"kappa must lie in (0, 1], got {kappa!r}")
    if not math.isfinite(p) or p <= 2.0 * kappa:
        raise InvalidRegimeError(
            f"p must exceed 2*kappa = {2.0 * kappa!r}, got p = {p!r}")


@dataclass(frozen=True)
class ModelParams:
    """Drift exponent, functional power, noise amplitude and layer width.

    Parameters
    ----------
    kappa : float
        Drift exponent in ``(0, 1]``.
    p : float
        Power of the additive functional ``|x|**p``; must exceed ``2 kappa``.
    sigma : float, optional
        Noise amplitude, defaults to 1.
    delta : float or None, optional
        Half-width of the layer used to split paths into cycles.
    """

    kappa: float
    p: float
    sigma: float = 1.0
    delta: float | None = None

    def __post_init__(self):
        check_regime(self.kappa, self.p)
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidParameterError(f"sigma must be positive, got {self.sigma!r}")
        if self.delta is not None and not (math.isfinite(self.delta) and self.delta > 0):
            raise InvalidParameterError(f"delta must be positive, got {self.delta!r}")

    @property
    def exponents(self) -> "ScalingExponents":
        return scaling_exponents(self.kappa, self.p)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ScalingExponents:
    """Space, time and speed exponents of the scaled process.

    ``alpha`` sets the space scaling ``t**(alpha/p)``, ``beta`` the time
    scaling ``t**beta`` and ``r`` the speed ``t**r`` of the tail.
    """

    alpha: float
    beta: float
    r: float

    @property
    def speed_r(self) -> float:
        return self.r

    def noise_exponent(self) -> float:
        """Exponent ``e`` such that the scaled noise amplitude is ``sigma t**-e``."""
        return 0.5 * self.r


def scaling_exponents(kappa: float, p: float) -> ScalingExponents:
    """Return ``(alpha, beta, r)`` for the pair ``(kappa, p)``.

    Examples
    --------
    >>> scaling_exponents(1.0, 4.0)
    ScalingExponents(alpha=1.0, beta=0.0, r=0.5)
    """
    check_regime(kappa, p)
    denom = p + 1.0 - kappa
    return ScalingExponents(alpha=p / denom, beta=(1.0 - kappa) / denom,
                            r=(kappa + 1.0) / denom)
