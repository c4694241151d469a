"""Transition laws for the square-root (Feller/CIR) diffusion and for the
superexponential growth variable obtained from it by a power transform.

The square-root diffusion

    dX = (b X + c) dt + sqrt(2 a X) dW,   a > 0,

has analytic transition densities built from the gamma-series pair in
:mod:`superexp.densities`: an absorbing-boundary law (paths hitting X = 0
stay there) and a reflecting-boundary law.  Writing the growth variable as
``Y = X**(-1/B)`` turns it into the four-parameter SDE

    dY = (s Y**(1+B) + delta Y) dt + sigma sqrt(Y * Y**(1+B)) dW,

whose growth rate rises with the level when B > 0, so that sample paths
can reach infinity in finite time.  X-absorption at zero is Y-explosion at
+infinity (for B > 0), which is what the explosion functionals quantify.

Estimation uses the coordinates ``(ln a, b, nu, gamma)`` with
``nu = c/a - 1`` and ``gamma = -1/B``; the maps between those and the
economic coordinates ``(s, B, delta, sigma)`` live here too.

All functions are pure and thread-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .densities import DensityKind, ShapeParams, cdf as _dist_cdf, log_density_batch
from .special import (
    DEFAULT_CONTROL,
    DomainError,
    SeriesControl,
    gamma_cdf,
    gamma_cdf_inverse,
)

__all__ = [
    "FellerParams",
    "PrimaryParams",
    "SuperexpParams",
    "BoundaryKind",
    "BoundaryError",
    "time_dilation",
    "feller_transition",
    "feller_log_transition",
    "absorbed_mass",
    "flux",
    "superexp_transition",
    "superexp_log_transition",
    "transition_cdf",
    "primary_to_superexp",
    "superexp_to_primary",
    "primary_to_feller",
    "steady_state",
    "explosion_probability",
    "explosion_quantile",
]


class BoundaryError(DomainError):
    """Boundary behaviour incompatible with the drift shape parameter."""


class BoundaryKind(Enum):
    """Behaviour of sample paths at the X = 0 boundary."""

    ABSORBING = "absorbing"  # transition law built on the Feller density
    REFLECTING = "reflecting"  # built on the noncentral chi-square density

    @property
    def density_kind(self) -> DensityKind:
        if self is BoundaryKind.ABSORBING:
            return DensityKind.FELLER
        return DensityKind.NONCENTRAL_CHI_SQ


@dataclass(frozen=True)
class FellerParams:
    """Square-root diffusion coefficients: variance scale ``a`` (> 0, 1/time),
    exponential drift rate ``b`` (1/time), constant drift ``c``."""

    a: float
    b: float
    c: float

    def __post_init__(self) -> None:
        if not self.a > 0:
            raise DomainError(f"a must be positive, got {self.a}")

    @property
    def nu(self) -> float:
        return self.c / self.a - 1.0


@dataclass(frozen=True)
class PrimaryParams:
    """Estimation coordinates (ln a, b, nu, gamma) with gamma = -1/B != 0."""

    ln_a: float
    b: float
    nu: float
    gamma: float

    def __post_init__(self) -> None:
        if self.gamma == 0:
            raise DomainError("gamma must be nonzero")

    def as_array(self) -> np.ndarray:
        return np.array([self.ln_a, self.b, self.nu, self.gamma], dtype=float)

    @classmethod
    def from_array(cls, theta) -> "PrimaryParams":
        return cls(float(theta[0]), float(theta[1]), float(theta[2]), float(theta[3]))


@dataclass(frozen=True)
class SuperexpParams:
    """Economic coordinates: investment coefficient ``s``, scale-effect
    exponent ``B`` != 0, appreciation/depreciation rate ``delta`` (1/year),
    stochasticity coefficient ``sigma`` > 0."""

    s: float
    B: float
    delta: float
    sigma: float

    def __post_init__(self) -> None:
        if self.B == 0:
            raise DomainError("B must be nonzero")
        if not self.sigma > 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")


def time_dilation(t: float, b: float) -> float:
    """Transformed clock (1 - exp(-b t)) / b, continuous through b = 0.

    The square-root diffusion run on this slowing clock (and rescaled by
    exp(-b t)/a) is a drift-only-parameter process, which is what makes the
    gamma-series transition laws time-indexable.
    """
    if t < 0:
        raise DomainError(f"time_dilation requires t >= 0, got {t}")
    bt = b * t
    if abs(bt) < 1e-8:
        # series limit; avoids 0/0 cancellation near b = 0
        return t * (1.0 - bt / 2.0 + bt * bt / 6.0)
    return -math.expm1(-bt) / b


def _check_boundary(kind: BoundaryKind, nu: float) -> None:
    if kind is BoundaryKind.REFLECTING and nu < -1.0:
        raise BoundaryError(
            f"reflecting boundary needs nu >= -1 (upward drift at 0), got nu={nu}"
        )
    if kind is BoundaryKind.ABSORBING and nu > 0.0:
        raise BoundaryError(
            f"absorbing boundary needs nu <= 0, got nu={nu}"
        )


def _shape_inputs(x_t, x_0, t: float, fp: FellerParams):
    """Map (X_t, X_0, t) to the series coordinates (x, lam)."""
    tdil = time_dilation(t, fp.b)
    scale = math.exp(-fp.b * t) / (fp.a * tdil)
    x = np.asarray(x_t, dtype=float) * scale
    lam = np.asarray(x_0, dtype=float) / (fp.a * tdil)
    return x, lam, scale


def feller_log_transition(
    kind: BoundaryKind,
    x_t,
    x_0,
    t: float,
    fp: FellerParams,
    control: SeriesControl = DEFAULT_CONTROL,
):
    """Vectorized ln density of X_t | X_0 (diffuse part only)."""
    if t <= 0:
        raise DomainError(f"transition requires t > 0, got {t}")
    nu = fp.nu
    _check_boundary(kind, nu)
    x, lam, scale = _shape_inputs(x_t, x_0, t, fp)
    logmag, sign = log_density_batch(kind.density_kind, x, lam, nu, control)
    out = np.where(sign > 0, logmag + math.log(scale), -np.inf)
    return out


def feller_transition(
    kind: BoundaryKind,
    x_t: float,
    x_0: float,
    t: float,
    fp: FellerParams,
    control: SeriesControl = DEFAULT_CONTROL,
) -> float:
    """Transition density of X_t given X_0 under the chosen boundary.

    For the absorbing kind the point mass accumulated at X = 0 is *not*
    part of the density; see :func:`absorbed_mass`.
    """
    if x_t <= 0 or x_0 <= 0:
        raise DomainError("feller_transition requires x_t > 0 and x_0 > 0")
    return float(np.exp(feller_log_transition(kind, x_t, x_0, t, fp, control)[0]))


def absorbed_mass(x_0: float, t: float, fp: FellerParams) -> float:
    """Probability that an absorbing-boundary path has hit 0 by time t."""
    nu = fp.nu
    _check_boundary(BoundaryKind.ABSORBING, nu)
    lam = x_0 / (fp.a * time_dilation(t, fp.b))
    return float(min(max(1.0 - gamma_cdf(lam, -nu), 0.0), 1.0))


def primary_to_feller(pp: PrimaryParams) -> FellerParams:
    a = math.exp(pp.ln_a)
    return FellerParams(a=a, b=pp.b, c=a * (pp.nu + 1.0))


def primary_to_superexp(pp: PrimaryParams) -> SuperexpParams:
    """Translate estimation coordinates to economic ones.

    B = -1/gamma, delta = b * gamma, sigma = |gamma| sqrt(2a) (a standard
    deviation, so stored positive), and s = a gamma^2 (1 + nu/gamma), the
    inversion of the coefficient map that carries the growth SDE into the
    square-root SDE.  s vanishes exactly on the constant-elasticity locus
    nu = -gamma.
    """
    a = math.exp(pp.ln_a)
    g = pp.gamma
    return SuperexpParams(
        s=a * g * g * (1.0 + pp.nu / g),
        B=-1.0 / g,
        delta=pp.b * g,
        sigma=abs(g) * math.sqrt(2.0 * a),
    )


def superexp_to_primary(sp: SuperexpParams) -> PrimaryParams:
    """Inverse of :func:`primary_to_superexp`."""
    g = -1.0 / sp.B
    a = sp.sigma**2 / (2.0 * g * g)
    nu = g * (sp.s / (a * g * g) - 1.0)
    return PrimaryParams(ln_a=math.log(a), b=sp.delta / g, nu=nu, gamma=g)


def _superexp_jacobian_log(y_t, B: float):
    # |d(X)/d(Y)| for X = Y**(-B)
    return math.log(abs(B)) - (B + 1.0) * np.log(np.asarray(y_t, dtype=float))


def superexp_log_transition(
    kind: BoundaryKind,
    y_t,
    y_0,
    t: float,
    sp: SuperexpParams,
    control: SeriesControl = DEFAULT_CONTROL,
):
    """Vectorized ln density of the growth variable Y_t | Y_0."""
    pp = superexp_to_primary(sp)
    fp = primary_to_feller(pp)
    y_t = np.asarray(y_t, dtype=float)
    y_0 = np.asarray(y_0, dtype=float)
    x_t = y_t ** (-sp.B)
    x_0 = y_0 ** (-sp.B)
    base = feller_log_transition(kind, x_t, x_0, t, fp, control)
    return base + _superexp_jacobian_log(y_t, sp.B)


def superexp_transition(
    kind: BoundaryKind,
    y_t: float,
    y_0: float,
    t: float,
    sp: SuperexpParams,
    control: SeriesControl = DEFAULT_CONTROL,
) -> float:
    """Transition density of Y_t given Y_0 (diffuse part; any explosion mass
    lives at +infinity and is excluded, mirroring the X-law convention)."""
    if y_t <= 0 or y_0 <= 0:
        raise DomainError("superexp_transition requires positive values")
    return float(np.exp(superexp_log_transition(kind, y_t, y_0, t, sp, control)[0]))


def transition_cdf(
    kind: BoundaryKind,
    y_t: float,
    y_0: float,
    t: float,
    sp: SuperexpParams,
    control: SeriesControl = DEFAULT_CONTROL,
) -> float:
    """P[Y_t <= y_t | Y_0].

    With B > 0 the map X = Y**(-B) reverses order, so this is the X-law
    mass *above* ``y_t**(-B)``; explosion mass (X absorbed at 0) sits at
    Y = +infinity and never counts.  With B < 0 the map preserves order and
    absorbed mass sits at Y = 0, which always counts.
    """
    if y_t <= 0 or y_0 <= 0:
        raise DomainError("transition_cdf requires positive values")
    if t <= 0:
        raise DomainError(f"transition_cdf requires t > 0, got {t}")
    pp = superexp_to_primary(sp)
    fp = primary_to_feller(pp)
    nu = fp.nu
    _check_boundary(kind, nu)
    x_t = y_t ** (-sp.B)
    x_0 = y_0 ** (-sp.B)
    x, lam, _ = _shape_inputs(x_t, x_0, t, fp)
    p = ShapeParams(float(lam), nu)
    below = _dist_cdf(kind.density_kind, float(x), p, control)  # X-mass in (0, x_t]
    if kind is BoundaryKind.ABSORBING:
        diffuse = gamma_cdf(p.lam, -nu) if nu < 0 else 1.0
        point = 1.0 - diffuse
    else:
        diffuse, point = 1.0, 0.0
    if sp.B > 0:
        out = diffuse - below
    else:
        out = below + point
    return float(min(max(out, 0.0), 1.0))


def steady_state(sp: SuperexpParams) -> float:
    """Level at which the deterministic drift vanishes, (-delta/s)**(1/B)."""
    if sp.s == 0 or not (-sp.delta / sp.s) > 0:
        raise DomainError(
            f"steady state needs delta/s < 0, got delta={sp.delta}, s={sp.s}"
        )
    return float((-sp.delta / sp.s) ** (1.0 / sp.B))


def _explosion_context(y_0: float, sp: SuperexpParams):
    pp = superexp_to_primary(sp)
    if sp.B <= 0:
        raise DomainError(f"explosion functionals need B > 0, got B={sp.B}")
    if pp.nu >= 0:
        raise DomainError(f"explosion functionals need nu < 0, got nu={pp.nu}")
    if y_0 <= 0:
        raise DomainError(f"y_0 must be positive, got {y_0}")
    a = math.exp(pp.ln_a)
    x_0 = y_0 ** (-sp.B)
    return pp, a, x_0


def explosion_probability(y_0: float, sp: SuperexpParams) -> float:
    """P[a path from Y_0 eventually explodes] under the absorbing law.

    The complement — never exploding — is the limiting diffuse norm
    ``F_gamma(X_0 * b / a; -nu)`` with ``X_0 = Y_0**(-B)`` when b > 0; with
    b <= 0 the norm drains to zero and explosion is certain.
    """
    pp, a, x_0 = _explosion_context(y_0, sp)
    if pp.b <= 0:
        return 1.0
    return 1.0 - gamma_cdf(x_0 * pp.b / a, -pp.nu)


def explosion_quantile(q: float, y_0: float, sp: SuperexpParams) -> float:
    """Time t at which the still-diffuse (not yet exploded) share equals q.

    Solves ``F_gamma(X_0 / (a * tdil(t)); -nu) = q``; at q = 0.5 this is the
    median explosion date when non-exploding paths are dated +infinity.
    Returns ``inf`` when q is below the never-explode probability, i.e. when
    the requested survival share is never reached.
    """
    if not 0.0 < q < 1.0:
        raise DomainError(f"explosion_quantile requires 0 < q < 1, got {q}")
    pp, a, x_0 = _explosion_context(y_0, sp)
    target = gamma_cdf_inverse(q, -pp.nu)  # lam at which survival share is q
    tdil_needed = x_0 / (a * target)
    if pp.b == 0:
        return tdil_needed
    arg = 1.0 - pp.b * tdil_needed
    if arg <= 0.0:
        return math.inf  # survival share stays above q forever
    return -math.log(arg) / pp.b


def flux(
    kind: BoundaryKind,
    x_t: float,
    x_0: float,
    t: float,
    fp: FellerParams,
    control: SeriesControl = DEFAULT_CONTROL,
) -> float:
    """Probability flux of the X-law at (t, x_t); positive means rightward.

    Test helper: equals ``(X_t f(nu) - X_0 f(nu+1)) / tdil`` where f is the
    transition density evaluated at the stated shape parameter.
    """
    tdil = time_dilation(t, fp.b)
    x, lam, scale = _shape_inputs(x_t, x_0, t, fp)
    kd = kind.density_kind
    lo, so = log_density_batch(kd, x, lam, fp.nu, control)
    hi, sh = log_density_batch(kd, x, lam, fp.nu + 1.0, control)
    f_at = float(so * np.exp(lo)) * scale
    f_up = float(sh * np.exp(hi)) * scale
    return (x_t * f_at - x_0 * f_up) / tdil
