"""The noncentral chi-square / absorbing-boundary density pair.

Both densities are countable mixtures of standard gamma densities,

    f_refl(x; lam, nu) = sum_m f_gamma(lam; m+1)   * f_gamma(x; m+nu+1)
    f_abs (x; lam, nu) = sum_m f_gamma(lam; m-nu+1) * f_gamma(x; m+1)

where ``lam`` locates the distribution and ``nu`` shapes its behaviour near
the origin.  The first is a (rescaled) noncentral chi-square density; the
second is its mirror under ``(x, nu) <-> (lam, -nu)`` and arises as the
transition law of a square-root diffusion absorbed at zero.  The two
coincide exactly at integer ``nu`` and fork near the origin otherwise.

Evaluation sums the series bidirectionally from its dominant term, with
term ratios applied multiplicatively so that only one pair of log-gamma
evaluations is needed per point.  For very large ``lam * x`` the sum is
equivalent to a modified Bessel function of large argument and evaluation
switches to that representation.

Everything here is a pure function; no shared mutable state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import special as _sp

from .special import (
    DEFAULT_CONTROL,
    DomainError,
    SeriesControl,
    gamma_cdf,
    gamma_density,
    log_gamma_density,
)

__all__ = [
    "DensityKind",
    "ShapeParams",
    "ConvergenceError",
    "density",
    "log_density",
    "log_density_batch",
    "density_at_zero",
    "cdf",
    "boundary_mass",
    "moments",
    "log_moments_gamma",
]


class ConvergenceError(RuntimeError):
    """Series failed to converge within the term budget."""


class DensityKind(Enum):
    """Which member of the density pair to evaluate."""

    NONCENTRAL_CHI_SQ = "noncentral_chi_sq"  # reflecting-boundary law
    FELLER = "feller"  # absorbing-boundary law


@dataclass(frozen=True)
class ShapeParams:
    """Location ``lam`` (> 0) and shape ``nu`` of the density pair."""

    lam: float
    nu: float

    def __post_init__(self) -> None:
        if not self.lam > 0:
            raise DomainError(f"lam must be positive, got {self.lam}")


def _series_peak(kind: DensityKind, lam: float, x: float, nu: float) -> float:
    # Continuous maximizer of the log term: m*(m* + shift) = lam*x with
    # shift = nu for the chi-square ordering and -nu for the mirrored one.
    shift = nu if kind is DensityKind.NONCENTRAL_CHI_SQ else -nu
    disc = shift * shift + 4.0 * lam * x
    m = 0.5 * (-shift + math.sqrt(disc))
    return max(m, 0.0)


def log_density_batch(
    kind: DensityKind,
    x,
    lam,
    nu: float,
    control: SeriesControl = DEFAULT_CONTROL,
):
    """Vectorized log|f| and sign for the density pair.

    ``x`` and ``lam`` are broadcast to a common shape; ``nu`` is shared.
    Returns ``(logmag, sign)`` arrays; entries with sign 0 denote an exact
    zero (logmag -inf).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    x, lam = np.broadcast_arrays(x, lam)
    if np.any(x <= 0) or np.any(lam <= 0):
        raise DomainError("density requires x > 0 and lam > 0")

    logmag = np.empty(x.shape, dtype=float)
    sign = np.empty(x.shape, dtype=float)
    z = 2.0 * np.sqrt(lam * x)
    use_bessel = z > control.bessel_switch

    if np.any(use_bessel):
        lm, sg = _log_density_bessel(kind, x[use_bessel], lam[use_bessel], nu)
        logmag[use_bessel], sign[use_bessel] = lm, sg
        # Amos fails for order >> argument or beyond its exponent range;
        # redo those by asymptotic expansion (huge z) or the series.
        bad = ~np.isfinite(lm) | (sg == 0.0)
        if np.any(bad):
            idx = np.flatnonzero(use_bessel)[bad]
            for i in idx:
                xi, li = float(x.flat[i]), float(lam.flat[i])
                lm_i, sg_i = math.nan, 0.0
                if 2.0 * math.sqrt(xi * li) > 1e4:
                    lm_i, sg_i = _log_density_hankel(kind, xi, li, nu)
                if sg_i == 0.0 or not np.isfinite(lm_i):
                    lm_i, sg_i = _log_density_series(kind, xi, li, nu, control)
                logmag.flat[i], sign.flat[i] = lm_i, sg_i
    series = ~use_bessel
    if np.any(series):
        lm, sg = _log_density_series_batch(kind, x[series], lam[series], nu, control)
        logmag[series], sign[series] = lm, sg
    return logmag, sign


def _log_density_bessel(kind: DensityKind, x, lam, nu: float):
    # f_{+-}(x; lam, nu) = exp(-lam-x) (x/lam)^(nu/2) I_{+-nu}(2 sqrt(lam x))
    order = nu if kind is DensityKind.NONCENTRAL_CHI_SQ else -nu
    z = 2.0 * np.sqrt(lam * x)
    with np.errstate(over="ignore", invalid="ignore"):
        scaled = _sp.ive(order, z)  # I_order(z) * exp(-z)
    with np.errstate(divide="ignore", invalid="ignore"):
        logmag = -lam - x + 0.5 * nu * (np.log(x) - np.log(lam)) + z + np.log(np.abs(scaled))
    return logmag, np.sign(scaled)


def _log_density_hankel(kind: DensityKind, x: float, lam: float, nu: float):
    # large-argument expansion of the modified Bessel factor:
    # I_v(z) ~ e^z / sqrt(2 pi z) * sum_k (-1)^k a_k(v) / z^k
    order = nu if kind is DensityKind.NONCENTRAL_CHI_SQ else -nu
    z = 2.0 * math.sqrt(lam * x)
    mu = 4.0 * order * order
    term, corr = 1.0, 1.0
    for k in range(1, 7):
        term *= -(mu - (2 * k - 1) ** 2) / (8.0 * z * k)
        corr += term
    if corr <= 0:  # expansion outside its validity; caller resorts to series
        return math.nan, 0.0
    logmag = (
        -lam
        - x
        + 0.5 * nu * (math.log(x) - math.log(lam))
        + z
        - 0.5 * math.log(2.0 * math.pi * z)
        + math.log(corr)
    )
    return logmag, 1.0


def _log_density_series(
    kind: DensityKind, x: float, lam: float, nu: float, control: SeriesControl
):
    lm, sg = _log_density_series_batch(
        kind, np.array([x]), np.array([lam]), nu, control
    )
    return float(lm[0]), float(sg[0])


def _log_density_series_batch(
    kind: DensityKind, x, lam, nu: float, control: SeriesControl
):
    """Peak-anchored bidirectional summation, shared window across the batch."""
    n = x.size
    shift = nu if kind is DensityKind.NONCENTRAL_CHI_SQ else -nu
    lamx = lam * x
    m0 = np.floor(
        np.maximum(0.5 * (-shift + np.sqrt(shift * shift + 4.0 * lamx)), 0.0)
    ).astype(np.int64)

    if control.peak_window is not None:
        width = int(control.peak_window)
    else:
        width = int(np.max(14.0 * np.sqrt(m0 + 4.0))) + 24

    for _ in range(8):  # widen on the rare non-converged batch
        if (2 * width + 1) * n > control.max_terms:
            raise ConvergenceError(
                f"series window {2 * width + 1} x {n} exceeds max_terms={control.max_terms}"
            )
        logmag, sign, converged = _sum_window(kind, x, lam, nu, m0, width, control)
        if converged:
            return logmag, sign
        width *= 2
    raise ConvergenceError("density series failed to converge after widening 8 times")


def _sum_window(kind, x, lam, nu, m0, width, control):
    n = x.size
    if kind is DensityKind.NONCENTRAL_CHI_SQ:
        a1, a2 = m0 + 1.0, m0 + nu + 1.0  # f_gamma(lam; m+1) f_gamma(x; m+nu+1)
        arg1, arg2 = lam, x
    else:
        a1, a2 = m0 - nu + 1.0, m0 + 1.0  # f_gamma(lam; m-nu+1) f_gamma(x; m+1)
        arg1, arg2 = lam, x
    l1, s1 = log_gamma_density(arg1, a1)
    l2, s2 = log_gamma_density(arg2, a2)
    log_anchor = l1 + l2
    anchor_sign = s1 * s2

    j = np.arange(1, width + 1, dtype=float)[None, :]  # (1, width)
    m0f = m0.astype(float)[:, None]
    lamx = (lam * x)[:, None]
    if kind is DensityKind.NONCENTRAL_CHI_SQ:
        up = lamx / ((m0f + j) * (m0f + nu + j))
        down = ((m0f - j + 1.0) * (m0f + nu - j + 1.0)) / lamx
    else:
        up = lamx / ((m0f - nu + j) * (m0f + j))
        down = ((m0f - nu - j + 1.0) * (m0f - j + 1.0)) / lamx
    # terms with m < 0 do not exist; zero them via the ratio
    down = np.where(m0f - j + 1.0 > 0.0, down, 0.0)

    up_terms = np.cumprod(up, axis=1)
    down_terms = np.cumprod(down, axis=1)
    rel = 1.0 + np.sum(up_terms, axis=1) + np.sum(down_terms, axis=1)

    # geometric tail bounds from the outermost term in each direction
    scale = control.relative_tolerance * np.maximum(np.abs(rel), 1e-300)
    up_ratio = np.abs(up[:, -1])
    up_tail = np.where(
        up_ratio < 0.9,
        np.abs(up_terms[:, -1]) * up_ratio / np.maximum(1.0 - up_ratio, 0.1),
        np.inf,
    )
    down_ratio = np.abs(down[:, -1])
    down_done = m0f[:, 0] - width <= 0  # window already reached m = 0
    down_tail = np.where(
        down_done,
        0.0,
        np.where(
            down_ratio < 0.9,
            np.abs(down_terms[:, -1]) * down_ratio / np.maximum(1.0 - down_ratio, 0.1),
            np.inf,
        ),
    )
    converged = bool(np.all(up_tail <= scale) and np.all(down_tail <= scale))

    with np.errstate(divide="ignore", invalid="ignore"):
        logmag = log_anchor + np.log(np.abs(rel))
    sign = anchor_sign * np.sign(rel)
    zero = (anchor_sign == 0.0) | (rel == 0.0)
    logmag = np.where(zero, -np.inf, logmag)
    sign = np.where(zero, 0.0, sign)
    return logmag, sign, converged


def log_density(
    kind: DensityKind,
    x: float,
    p: ShapeParams,
    control: SeriesControl = DEFAULT_CONTROL,
) -> tuple[float, float]:
    """log|f| and sign at a single point."""
    lm, sg = log_density_batch(kind, x, p.lam, p.nu, control)
    return float(lm[0]), float(sg[0])


def density(
    kind: DensityKind,
    x: float,
    p: ShapeParams,
    control: SeriesControl = DEFAULT_CONTROL,
) -> float:
    """Series value of the chosen density at ``x > 0``."""
    lm, sg = log_density(kind, x, p, control)
    return sg * math.exp(lm)


def density_at_zero(kind: DensityKind, p: ShapeParams) -> float:
    """Limit of the density as x -> 0.

    The absorbing-boundary law always has the finite limit
    ``f_gamma(lam; 1 - nu)``.  The chi-square law has a zero of order nu at
    the origin for nu > 0, matches the absorbing limit at integer nu <= 0,
    and otherwise diverges with the sign of Gamma(nu + 1).
    """
    lam, nu = p.lam, p.nu
    if kind is DensityKind.FELLER:
        return gamma_density(lam, 1.0 - nu)
    if nu > 0:
        return 0.0
    if float(nu).is_integer():
        return gamma_density(lam, 1.0 - nu)
    return math.inf * float(_sp.gammasgn(nu + 1.0))


def _proper_region(kind: DensityKind, nu: float) -> bool:
    if kind is DensityKind.NONCENTRAL_CHI_SQ:
        return nu >= -1.0
    return nu <= 0.0


def cdf(
    kind: DensityKind,
    x: float,
    p: ShapeParams,
    control: SeriesControl = DEFAULT_CONTROL,
) -> float:
    """Diffuse mass on (0, x].

    Summed termwise as mixture-weight times gamma CDF.  For the absorbing
    law the point mass at the origin is *excluded*; it is reported by
    ``boundary_mass``.  Only the proper-distribution region is accepted
    (chi-square: nu >= -1; absorbing: nu <= 0).
    """
    if x <= 0:
        raise DomainError(f"cdf requires x > 0, got {x}")
    lam, nu = p.lam, p.nu
    if not _proper_region(kind, nu):
        raise DomainError(f"cdf of {kind.value} undefined for nu={nu}")

    if kind is DensityKind.FELLER:
        total = gamma_cdf(lam, -nu) if nu < 0 else 1.0
        weight_alpha0 = 1.0 - nu  # f_gamma(lam; m - nu + 1)
        cdf_alpha0 = 1.0  # F_gamma(x; m + 1)
        center = lam + nu  # weight peak: m - nu ~ lam
    else:
        total = 1.0
        weight_alpha0 = 1.0
        cdf_alpha0 = nu + 1.0
        center = lam

    def _chunk(lo: int, hi: int) -> tuple[float, float, float]:
        m = np.arange(lo, hi, dtype=float)
        wl, ws = log_gamma_density(lam, weight_alpha0 + m)
        w = ws * np.exp(wl)
        # the alpha <= 0 gamma terms are identically zero densities (pole
        # convention), so they integrate to 0 rather than the alpha -> 0
        # limiting CDF value of 1
        alphas = cdf_alpha0 + m
        F = np.where(alphas > 0, _sp.gammainc(np.maximum(alphas, 1e-300), x), 0.0)
        return float(np.sum(w * F)), float(np.sum(w)), float(np.max(np.abs(w)))

    # window around the weight peak, extended until the edge weights die out
    center = max(center, 0.0)
    half = int(12.0 * math.sqrt(center + 25.0)) + 32
    lo = max(int(center) - half, 0)
    hi = int(center) + half
    acc, covered, peak_w = _chunk(lo, hi)
    cut = control.relative_tolerance * max(peak_w, 1e-300)

    def _edge_weight(m: int) -> float:
        wl, ws = log_gamma_density(lam, weight_alpha0 + float(m))
        return abs(float(ws * np.exp(wl)))

    while _edge_weight(hi) > cut:
        if hi - lo > control.max_terms:
            raise ConvergenceError("cdf series exhausted max_terms")
        add, cov, _ = _chunk(hi, hi + (hi - lo))
        acc, covered, hi = acc + add, covered + cov, hi + (hi - lo)
    while lo > 0 and _edge_weight(lo - 1) > cut:
        if hi - lo > control.max_terms:
            raise ConvergenceError("cdf series exhausted max_terms")
        new_lo = max(lo - (hi - lo), 0)
        add, cov, _ = _chunk(new_lo, lo)
        acc, covered, lo = acc + add, covered + cov, new_lo

    # at very large lam the individual log-weights carry O(lam * eps)
    # rounding, a common-mode scale error; renormalize to the analytic total
    if covered > 0 and abs(covered - total) < 1e-4 * max(total, 1e-300):
        acc *= total / covered
    return float(min(max(acc, 0.0), 1.0))


def boundary_mass(p: ShapeParams) -> float:
    """Accumulated point mass at the origin under the absorbing law, nu <= 0."""
    if p.nu > 0:
        raise DomainError(f"boundary_mass requires nu <= 0, got {p.nu}")
    return float(min(max(1.0 - gamma_cdf(p.lam, -p.nu), 0.0), 1.0))


def moments(kind: DensityKind, p: ShapeParams) -> tuple[float, float]:
    """Mean and variance of the distribution (absorbing kind includes its
    origin mass, which contributes zero to raw moments).

    chi-square: mean lam + nu + 1 (needs nu > -2), variance 2 lam + nu + 1
    (a proper distribution's variance only for nu > -1).
    absorbing (nu <= 0): closed forms in the gamma density/CDF at -nu.
    """
    lam, nu = p.lam, p.nu
    if kind is DensityKind.NONCENTRAL_CHI_SQ:
        if nu <= -2.0:
            raise DomainError(f"chi-square mean undefined for nu={nu} <= -2")
        return lam + nu + 1.0, 2.0 * lam + nu + 1.0
    if nu > 0:
        raise DomainError(f"absorbing-law moments require nu <= 0, got {nu}")
    f = gamma_density(lam, -nu)
    F = gamma_cdf(lam, -nu)
    mean = lam * f + (lam + nu + 1.0) * F
    second = lam * (lam + nu + 3.0) * f + (lam + (lam + nu + 1.0) * (lam + nu + 2.0)) * F
    return mean, second - mean * mean


def log_moments_gamma(alpha: float) -> tuple[float, float, float]:
    """Mean, variance and excess kurtosis of ln x for x ~ Gamma(alpha).

    These are psi(alpha), psi_1(alpha) and psi_3(alpha) / psi_1(alpha)^2;
    the kurtosis is strictly positive for every alpha.
    """
    if alpha <= 0:
        raise DomainError(f"log_moments_gamma requires alpha > 0, got {alpha}")
    mean = float(_sp.digamma(alpha))
    var = float(_sp.polygamma(1, alpha))
    kurt = float(_sp.polygamma(3, alpha)) / (var * var)
    return mean, var, kurt
