"""Gamma-family special functions extended beyond their textbook domains.

The transition laws used throughout this package are built from products of
standard gamma densities ``f_gamma(x; alpha) = exp(-x) x**(alpha-1) / Gamma(alpha)``
and the cumulative function ``F_gamma``.  Two extensions beyond the usual
``alpha > 0`` domain are needed:

* ``gamma_density`` is evaluated for any real ``alpha``, with the reciprocal
  gamma convention ``1/Gamma(-n) = 0`` at the poles.  Values may be negative
  for negative non-integer ``alpha``; that is deliberate, because the series
  the densities are assembled from cancel such terms correctly.
* ``gamma_cdf`` is extended to negative non-integer ``alpha`` through the
  ladder identity ``F(x; alpha) = f(x; alpha+1) + F(x; alpha+1)``, applied
  downward from the ordinary ``alpha > 0`` region.  ``alpha = 0`` takes the
  limiting value 1.

All functions are pure and thread-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as _sp

__all__ = [
    "SeriesControl",
    "DomainError",
    "gamma_density",
    "log_gamma_density",
    "gamma_cdf",
    "gamma_cdf_inverse",
    "log_gamma",
    "polygamma",
]


class DomainError(ValueError):
    """Raised when an argument lies outside a function's mathematical domain."""


@dataclass(frozen=True)
class SeriesControl:
    """Tuning knobs for the gamma-series summations.

    Attributes
    ----------
    relative_tolerance:
        Stop summing once a term's relative contribution stays below this
        for three consecutive terms.
    max_terms:
        Hard cap on the number of series terms; exceeding it raises.
    peak_window:
        Optional fixed half-width of the summation window around the
        dominant term.  ``None`` sizes the window adaptively.
    bessel_switch:
        Value of ``2*sqrt(lambda*x)`` above which density evaluation hands
        off to the asymptotic (modified-Bessel) branch.
    """

    relative_tolerance: float = 1e-12
    max_terms: int = 10_000_000
    peak_window: int | None = None
    bessel_switch: float = 700.0

    def __post_init__(self) -> None:
        if not self.relative_tolerance > 0:
            raise ValueError("relative_tolerance must be positive")
        if self.max_terms < 1:
            raise ValueError("max_terms must be at least 1")


DEFAULT_CONTROL = SeriesControl()


def _is_nonpositive_integer(alpha: float) -> bool:
    return alpha <= 0 and float(alpha).is_integer()


def log_gamma_density(x, alpha):
    """log|f_gamma(x; alpha)| together with its sign.

    Vectorized over ``x`` and ``alpha``.  Returns ``(-inf, 0.0)`` entries at
    reciprocal-gamma poles (``alpha`` a non-positive integer) and where the
    density is zero.
    """
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    x, alpha = np.broadcast_arrays(x, alpha)
    sign = _sp.gammasgn(alpha)
    with np.errstate(divide="ignore", invalid="ignore"):
        logmag = -x + (alpha - 1.0) * np.log(x) - _sp.gammaln(alpha)
    pole = (alpha <= 0) & (alpha == np.floor(alpha))
    logmag = np.where(pole, -np.inf, logmag)
    sign = np.where(pole, 0.0, sign)
    return logmag, sign


def gamma_density(x: float, alpha: float) -> float:
    """Standard gamma density exp(-x) x**(alpha-1) / Gamma(alpha), any real alpha.

    At a reciprocal-gamma pole (alpha a non-positive integer) the value is 0.
    At ``x = 0`` the limit is returned: +inf for 0 < alpha < 1, 1 for
    alpha = 1, 0 for alpha > 1 (and the signed analogue for alpha < 0).
    """
    if x < 0:
        raise DomainError(f"gamma_density requires x >= 0, got {x}")
    if _is_nonpositive_integer(alpha):
        return 0.0
    if x == 0.0:
        if alpha == 1.0:
            return 1.0
        if alpha > 1.0:
            return 0.0
        # x**(alpha-1) diverges; the sign is that of 1/Gamma(alpha)
        return math.inf * _sp.gammasgn(alpha)
    logmag, sign = log_gamma_density(x, alpha)
    return float(sign) * math.exp(float(logmag))


def gamma_cdf(x: float, alpha: float) -> float:
    """Cumulative gamma function, extended to negative non-integer alpha.

    For ``alpha > 0`` this is the regularized lower incomplete gamma.  For
    negative non-integer ``alpha`` it is defined by repeatedly unwinding
    ``F(x; alpha) = f(x; alpha + 1) + F(x; alpha + 1)`` until the parameter
    is positive.  ``alpha = 0`` returns the limiting value 1.
    """
    if x < 0:
        raise DomainError(f"gamma_cdf requires x >= 0, got {x}")
    if alpha == 0.0:
        return 1.0
    if alpha > 0:
        return float(_sp.gammainc(alpha, x))
    if float(alpha).is_integer():
        raise DomainError(f"gamma_cdf is indeterminate at negative integer alpha={alpha}")
    # number of ladder steps needed to lift alpha above 0
    m = int(math.ceil(-alpha))
    steps = alpha + np.arange(1, m + 1, dtype=float)  # alpha+1, ..., alpha+m > 0
    logmag, sign = log_gamma_density(x, steps)
    head = float(np.sum(sign * np.exp(logmag)))
    return head + float(_sp.gammainc(alpha + m, x))


def gamma_cdf_inverse(q: float, alpha: float) -> float:
    """Inverse of ``gamma_cdf`` in x for fixed ``alpha > 0``."""
    if not 0.0 < q < 1.0:
        raise DomainError(f"gamma_cdf_inverse requires 0 < q < 1, got {q}")
    if alpha <= 0:
        raise DomainError(f"gamma_cdf_inverse requires alpha > 0, got {alpha}")
    return float(_sp.gammaincinv(alpha, q))


def log_gamma(alpha: float) -> tuple[float, float]:
    """ln|Gamma(alpha)| and the sign of Gamma(alpha).

    Raises at the poles (non-positive integers), where Gamma is undefined.
    """
    if _is_nonpositive_integer(alpha):
        raise DomainError(f"log_gamma pole at alpha={alpha}")
    return float(_sp.gammaln(alpha)), float(_sp.gammasgn(alpha))


def polygamma(order: int, alpha: float) -> float:
    """psi (order 0) or psi_k (order k) of the gamma function, alpha > 0."""
    if order not in (0, 1, 2, 3):
        raise DomainError(f"polygamma order must be 0..3, got {order}")
    if alpha <= 0:
        raise DomainError(f"polygamma requires alpha > 0, got {alpha}")
    if order == 0:
        return float(_sp.digamma(alpha))
    return float(_sp.polygamma(order, alpha))
