"""Drift families: the exact power drift and its Lipschitz modifications.

Every family is an odd or piecewise power function of ``x``.  Besides the
value, each family exposes its derivative, its antiderivative from 0 and a
list of power branches ``c |x|**q`` that the first-passage module uses to
compute essential infima in closed form.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError

__all__ = ["DriftFamily", "DriftSpec", "PowerBranch", "drift_eval", "DERIV_FLOOR"]

# floor applied to |x| wherever a negative power of |x| appears
DERIV_FLOOR = 1e-12


class DriftFamily(str, enum.Enum):
    EXACT = "ExactD"
    MOLLIFIED = "MollifiedUEps"
    ONE_SIDED = "OneSidedLowerUEps"
    AUX_LOWER = "AuxLowerLEps"
    AUX_UPPER = "AuxUpperUEps"


@dataclass(frozen=True)
class PowerBranch:
    """Piece ``nu(x) = c |x|**q`` on the open interval ``(lo, hi)``.

    The interval never straddles 0 unless ``q == 0``.
    """

    lo: float
    hi: float
    c: float
    q: float

    def contains(self, x):
        return (x > self.lo) & (x < self.hi)


@dataclass(frozen=True)
class DriftSpec:
    """A drift family with its mollification scale.

    Parameters
    ----------
    family : DriftFamily or str
        One of ``ExactD``, ``MollifiedUEps``, ``OneSidedLowerUEps``,
        ``AuxLowerLEps``, ``AuxUpperUEps``.
    kappa : float
        Exponent in ``(0, 1]``.
    eps : float, optional
        Mollification scale, ignored for ``ExactD``.
    """

    family: DriftFamily
    kappa: float
    eps: float = 0.0

    def __post_init__(self):
        try:
            fam = DriftFamily(self.family)
        except ValueError:
            raise InvalidParameterError(f"unknown drift family {self.family!r}") from None
        object.__setattr__(self, "family", fam)
        if not (0.0 < self.kappa <= 1.0):
            raise InvalidParameterError(f"kappa must lie in (0, 1], got {self.kappa!r}")
        if fam is not DriftFamily.EXACT and not (self.eps > 0 and math.isfinite(self.eps)):
            raise InvalidParameterError(f"{fam.value} needs eps > 0, got {self.eps!r}")

    # -- construction helpers -------------------------------------------------
    @classmethod
    def exact(cls, kappa):
        return cls(DriftFamily.EXACT, kappa)

    def with_eps(self, eps):
        return DriftSpec(self.family, self.kappa, eps)

    def to_dict(self):
        return {"family": self.family.value, "kappa": self.kappa, "eps": self.eps}

    # -- evaluation ------------------------------------------------------------
    def __call__(self, x):
        return self.value(x)

    def value(self, x):
        """Drift evaluated pointwise; returns a float for scalar input."""
        x = np.asarray(x, dtype=float)
        k, e = self.kappa, self.eps
        ax = np.abs(x)
        fam = self.family
        if fam is DriftFamily.EXACT:
            out = -x if k == 1.0 else -np.sign(x) * ax ** k
        elif fam is DriftFamily.MOLLIFIED:
            out = np.where(ax >= e, -np.sign(x) * ax ** k, -x / e ** (1 - k))
        elif fam is DriftFamily.ONE_SIDED:
            out = np.where(x >= e, -np.abs(x) ** k, -e ** k)
        elif fam is DriftFamily.AUX_LOWER:
            out = np.where(x > e, -np.abs(x) ** k, -e ** k)
        else:
            out = np.select(
                [x > e, x >= 0, x >= -1],
                [ax ** k, x / e ** (1 - k), ax ** (k + 1)],
                default=ax ** k)
        return out[()] if out.ndim == 0 else out

    def scalar(self):
        """Plain-float version of :meth:`value` for tight Python loops."""
        k, e = self.kappa, self.eps
        fam = self.family
        if fam is DriftFamily.EXACT:
            def f(x):
                return -math.copysign(abs(x) ** k, x) if x != 0.0 else 0.0
        elif fam is DriftFamily.MOLLIFIED:
            lin = 1.0 / e ** (1 - k)

            def f(x):
                if abs(x) >= e:
                    return -math.copysign(abs(x) ** k, x)
                return -x * lin
        elif fam is DriftFamily.ONE_SIDED:
            c = -e ** k

            def f(x):
                return -abs(x) ** k if x >= e else c
        elif fam is DriftFamily.AUX_LOWER:
            c = -e ** k

            def f(x):
                return -abs(x) ** k if x > e else c
        else:
            lin = 1.0 / e ** (1 - k)

            def f(x):
                if x > e:
                    return x ** k
                if x >= 0:
                    return x * lin
                if x >= -1:
                    return (-x) ** (k + 1)
                return (-x) ** k
        return f

    def derivative(self, x, floor=DERIV_FLOOR):
        """Derivative in ``x`` with ``|x|`` floored inside negative powers."""
        x = np.asarray(x, dtype=float)
        k, e = self.kappa, self.eps
        ax = np.maximum(np.abs(x), floor)
        fam = self.family
        if fam is DriftFamily.EXACT:
            out = -k * ax ** (k - 1)
        elif fam is DriftFamily.MOLLIFIED:
            out = np.where(np.abs(x) >= e, -k * ax ** (k - 1), -1.0 / e ** (1 - k))
        elif fam in (DriftFamily.ONE_SIDED, DriftFamily.AUX_LOWER):
            out = np.where(x > e, -k * ax ** (k - 1), 0.0)
        else:
            out = np.select(
                [x > e, x >= 0, x >= -1],
                [k * ax ** (k - 1), np.full_like(x, 1.0 / e ** (1 - k)),
                 -(k + 1) * ax ** k],
                default=-k * ax ** (k - 1))
        return out[()] if out.ndim == 0 else out

    def antiderivative(self, x):
        """Integral of the drift from 0 to ``x``."""
        x = np.asarray(x, dtype=float)
        k, e = self.kappa, self.eps
        ax = np.abs(x)
        k1 = k + 1.0
        fam = self.family
        if fam is DriftFamily.EXACT:
            out = -ax ** k1 / k1
        elif fam is DriftFamily.MOLLIFIED:
            inner = -x * x / (2 * e ** (1 - k))
            outer = -e ** k1 / 2 - (ax ** k1 - e ** k1) / k1
            out = np.where(ax <= e, inner, outer)
        elif fam in (DriftFamily.ONE_SIDED, DriftFamily.AUX_LOWER):
            out = np.where(x <= e, -e ** k * x,
                           -e ** k1 - (ax ** k1 - e ** k1) / k1)
        else:
            k2 = k + 2.0
            out = np.select(
                [x > e, x >= 0, x >= -1],
                [e ** k1 / 2 + (ax ** k1 - e ** k1) / k1,
                 x * x / (2 * e ** (1 - k)),
                 -ax ** k2 / k2],
                default=-1.0 / k2 - (ax ** k1 - 1.0) / k1)
        return out[()] if out.ndim == 0 else out

    def branches(self) -> list[PowerBranch]:
        """Decomposition into power pieces ``c |x|**q``."""
        k, e = self.kappa, self.eps
        inf = math.inf
        fam = self.family
        if fam is DriftFamily.EXACT:
            return [PowerBranch(-inf, 0.0, 1.0, k), PowerBranch(0.0, inf, -1.0, k)]
        if fam is DriftFamily.MOLLIFIED:
            s = e ** (k - 1)
            return [PowerBranch(-inf, -e, 1.0, k), PowerBranch(-e, 0.0, s, 1.0),
                    PowerBranch(0.0, e, -s, 1.0), PowerBranch(e, inf, -1.0, k)]
        if fam in (DriftFamily.ONE_SIDED, DriftFamily.AUX_LOWER):
            return [PowerBranch(-inf, e, -e ** k, 0.0), PowerBranch(e, inf, -1.0, k)]
        return [PowerBranch(-inf, -1.0, 1.0, k), PowerBranch(-1.0, 0.0, 1.0, k + 1),
                PowerBranch(0.0, e, e ** (k - 1), 1.0), PowerBranch(e, inf, 1.0, k)]

    def breakpoints(self):
        pts = sorted({b.lo for b in self.branches()} | {b.hi for b in self.branches()})
        return [x for x in pts if math.isfinite(x)]


def drift_eval(spec: DriftSpec, x):
    """Evaluate ``spec`` at ``x`` (scalar or array); non-finite input is rejected."""
    if not np.all(np.isfinite(x)):
        raise InvalidParameterError("drift argument must be finite")
    return spec.value(x)
