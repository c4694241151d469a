"""Maximum-likelihood calibration of the superexponential diffusion.

The likelihood is dynamic: each observation is explained by the analytic
transition density conditional on its predecessor, over the actual span
between them, and each term carries the observation's precision weight.
Optimization runs over the estimation coordinates ``(ln a, b, nu, gamma)``
for both boundary behaviours; the better fit is kept.  The restricted fit
with ``nu = -gamma`` (zero reinvestment coefficient, i.e. plain exponential
growth with constant elasticity of variance) supplies a likelihood-ratio
test of the scale effect.

Standard errors come from the observed information (inverse numeric
Hessian); derived quantities and their errors propagate through the
parameter maps with the delta method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, stats

from .dataio import Observation
from .diffusion import (
    BoundaryKind,
    PrimaryParams,
    SuperexpParams,
    explosion_probability,
    explosion_quantile,
    primary_to_superexp,
    steady_state,
)
from .densities import ConvergenceError, log_density_batch
from .special import DEFAULT_CONTROL, DomainError, SeriesControl

__all__ = [
    "FitOptions",
    "FitResult",
    "NlsResult",
    "weighted_loglik",
    "fit_ml",
    "fit_cev",
    "fit_nls",
    "delta_method",
    "phi_A_from_B",
]

REJECT = -np.inf


@dataclass(frozen=True)
class FitOptions:
    boundary: str = "auto"  # "auto" | "absorbing" | "reflecting"
    gamma_grid: tuple[float, ...] = (-0.45, -0.7, -1.0, -1.4, -1.9, -2.6, -3.5)
    control: SeriesControl = DEFAULT_CONTROL
    max_iter: int = 6000
    xtol: float = 1e-9
    ftol: float = 1e-10
    compute_gof: bool = True
    seed: int = 0  # drives the permutation test in the goodness-of-fit report


@dataclass
class FitResult:
    boundary: BoundaryKind
    primary: PrimaryParams
    covariance: np.ndarray | None
    loglik: float
    n_obs: int  # conditional likelihood terms
    derived: dict[str, tuple[float, float]] = field(default_factory=dict)
    lr_stat: float = math.nan
    lr_p: float = math.nan
    ks_stat: float = math.nan
    ks_p: float = math.nan
    serial_stat: float = math.nan
    serial_p: float = math.nan
    converged: bool = True
    flags: list[str] = field(default_factory=list)
    restricted: "FitResult | None" = None

    @property
    def superexp(self) -> SuperexpParams:
        return primary_to_superexp(self.primary)

    def standard_errors(self) -> np.ndarray:
        if self.covariance is None:
            return np.full(4, np.nan)
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


@dataclass(frozen=True)
class NlsResult:
    s: float
    B: float
    delta: float
    sigma2: float  # instantaneous variance scale implied by the residuals
    sse: float
    converged: bool
    diverged: bool  # profile optimum ran into the search boundary


class _PairData:
    """Per-transition arrays shared by every likelihood evaluation."""

    def __init__(self, series: Sequence[Observation]):
        if len(series) < 2:
            raise DomainError("need at least 2 observations")
        t = np.array([o.time for o in series], dtype=float)
        y = np.array([o.value for o in series], dtype=float)
        w = np.array([o.weight for o in series], dtype=float)
        if np.any(np.diff(t) <= 0):
            raise DomainError("observation times must strictly increase")
        if np.any(y <= 0):
            raise DomainError("observation values must be positive")
        self.t, self.y = t, y
        self.dt = np.diff(t)
        self.ln_y0 = np.log(y[:-1])
        self.ln_y1 = np.log(y[1:])
        self.w = w[1:]  # first observation contributes no term
        self.n = len(series) - 1
        self.span = t[-1] - t[0]


def _ln_tdil(dt: np.ndarray, b: float) -> np.ndarray:
    """ln of the dilated clock (1 - exp(-b dt))/b, stable for every b."""
    if b == 0.0:
        return np.log(dt)
    bdt = b * dt
    out = np.empty_like(dt)
    small = np.abs(bdt) < 1e-8
    out[small] = np.log(dt[small]) + np.log1p(-0.5 * bdt[small])
    big = ~small
    if b > 0:
        out[big] = np.log1p(-np.exp(-bdt[big])) - math.log(b)
    else:
        # (e^{|b|dt} - 1)/|b|; pull the overflowing factor into log space
        out[big] = -bdt[big] + np.log1p(-np.exp(bdt[big])) - math.log(-b)
    return out


def _loglik_terms(theta: np.ndarray, kind: BoundaryKind, data: _PairData,
                  control: SeriesControl) -> np.ndarray | None:
    """Per-transition log density of each observation given its predecessor."""
    ln_a, b, nu, gamma = theta
    if gamma == 0 or not np.all(np.isfinite(theta)):
        return None
    if kind is BoundaryKind.ABSORBING and nu > 0:
        return None
    if kind is BoundaryKind.REFLECTING and nu < -1:
        return None
    B = -1.0 / gamma
    ln_x0 = -B * data.ln_y0
    ln_x1 = -B * data.ln_y1
    ln_td = _ln_tdil(data.dt, b)
    ln_scale = -b * data.dt - ln_a - ln_td
    ln_lam = ln_x0 - ln_a - ln_td
    ln_x = ln_x1 + ln_scale
    if np.any(~np.isfinite(ln_lam)) or np.any(~np.isfinite(ln_x)):
        return None
    x = np.exp(ln_x)
    lam = np.exp(ln_lam)
    if np.any(x <= 0) or np.any(lam <= 0) or np.any(~np.isfinite(x)) or np.any(~np.isfinite(lam)):
        return None
    try:
        logf, sign = log_density_batch(kind.density_kind, x, lam, nu, control)
    except ConvergenceError:
        return None  # reject parameter corners whose series are intractable
    if np.any(sign <= 0):
        return None
    return logf + ln_scale + math.log(abs(B)) - (B + 1.0) * data.ln_y1


def weighted_loglik(
    pp: PrimaryParams,
    boundary: BoundaryKind,
    series: Sequence[Observation],
    control: SeriesControl = DEFAULT_CONTROL,
) -> float:
    """Sum of weighted conditional log densities; -inf outside the valid
    region or where any conditional density vanishes."""
    data = series if isinstance(series, _PairData) else _PairData(series)
    terms = _loglik_terms(pp.as_array(), boundary, data, control)
    if terms is None or np.any(~np.isfinite(terms)):
        return REJECT
    return float(np.dot(data.w, terms))


def _objective(kind: BoundaryKind, data: _PairData, control: SeriesControl):
    def fn(theta: np.ndarray) -> float:
        terms = _loglik_terms(theta, kind, data, control)
        if terms is None or np.any(~np.isfinite(terms)):
            return np.inf
        return -float(np.dot(data.w, terms))

    return fn


def _param_scales(data: _PairData, theta0: np.ndarray) -> np.ndarray:
    return np.array(
        [0.5, max(1.0 / data.span, abs(theta0[1])) , max(2.0, 0.25 * abs(theta0[2])), 0.4]
    )


def _minimize(fn, theta0: np.ndarray, scales: np.ndarray, opts: FitOptions):
    def wrapped(z):
        return fn(theta0 + scales * z)

    z0 = np.zeros(4)
    best = None
    for _ in range(2):  # one restart with a fresh simplex helps Nelder-Mead
        res = optimize.minimize(
            wrapped,
            z0,
            method="Nelder-Mead",
            options={
                "maxiter": opts.max_iter,
                "xatol": opts.xtol,
                "fatol": opts.ftol,
                "adaptive": True,
            },
        )
        if best is None or res.fun < best.fun:
            best = res
        z0 = res.x
    theta = theta0 + scales * best.x
    return theta, -best.fun, best.success


def _moment_start(data: _PairData, gamma: float, kind: BoundaryKind) -> np.ndarray | None:
    """Method-of-moments start: with B fixed, the transformed level series is
    close to linear-drift, so its increments identify (a, b, c) directly."""
    B = -1.0 / gamma
    x = np.exp(-B * np.concatenate(([data.ln_y0[0]], data.ln_y1)))
    dx = np.diff(x)
    x0 = x[:-1]
    dt = data.dt
    # WLS of dx on (x0 dt, dt): E[dx] = (b x + c) dt, Var ~ 2 a x dt
    A = np.column_stack([x0 * dt, dt])
    wls = 1.0 / np.maximum(x0 * dt, 1e-300)
    AtW = A.T * wls
    try:
        coef = np.linalg.solve(AtW @ A, AtW @ dx)
    except np.linalg.LinAlgError:
        return None
    b, c = float(coef[0]), float(coef[1])
    resid = dx - A @ coef
    a = float(np.mean(resid**2 / np.maximum(2.0 * x0 * dt, 1e-300)))
    if not (a > 0 and np.isfinite(a)):
        return None
    nu = c / a - 1.0
    if kind is BoundaryKind.ABSORBING:
        nu = min(nu, -1e-3)
    else:
        nu = max(nu, -0.999)
    return np.array([math.log(a), b, nu, gamma])


def _nls_start(data: _PairData, kind: BoundaryKind) -> np.ndarray | None:
    try:
        nls = _fit_nls_data(data)
    except Exception:
        return None
    if not nls.converged or nls.B == 0 or nls.sigma2 <= 0:
        return None
    g = -1.0 / nls.B
    a = nls.sigma2 / (2.0 * g * g)
    if not a > 0:
        return None
    nu = g * (nls.s / (a * g * g) - 1.0)
    if kind is BoundaryKind.ABSORBING:
        nu = min(nu, -1e-3)
    else:
        nu = max(nu, -0.999)
    return np.array([math.log(a), nls.delta / g, nu, g])


def _maximize_boundary(
    data: _PairData, kind: BoundaryKind, opts: FitOptions
) -> tuple[np.ndarray, float, bool]:
    fn = _objective(kind, data, opts.control)
    starts: list[np.ndarray] = []
    s = _nls_start(data, kind)
    if s is not None:
        starts.append(s)
    for g in opts.gamma_grid:
        s = _moment_start(data, g, kind)
        if s is not None:
            starts.append(s)
    if not starts:
        starts.append(np.array([-10.0, 1e-5, -1.0 if kind is BoundaryKind.ABSORBING else -0.5, -2.0]))

    best_theta, best_ll, best_ok = None, -np.inf, False
    for theta0 in starts:
        if not np.isfinite(fn(theta0)):
            continue
        theta, ll, ok = _minimize(fn, theta0, _param_scales(data, theta0), opts)
        if ll > best_ll:
            best_theta, best_ll, best_ok = theta, ll, ok
    if best_theta is None:
        raise DomainError(f"no feasible starting point for {kind.value} fit")
    # final polish from the overall winner
    theta, ll, ok = _minimize(fn, best_theta, _param_scales(data, best_theta), opts)
    if ll > best_ll:
        best_theta, best_ll, best_ok = theta, ll, ok
    return best_theta, best_ll, best_ok


def _numeric_hessian(fn: Callable, theta: np.ndarray, scales: np.ndarray) -> np.ndarray:
    n = len(theta)
    h = 1e-4 * np.maximum(np.abs(theta), scales * 1e-2)
    H = np.empty((n, n))
    f0 = fn(theta)

    def ev(*pairs):
        z = theta.copy()
        for i, step in pairs:
            z[i] += step
        return fn(z)

    for i in range(n):
        H[i, i] = (ev((i, h[i])) - 2.0 * f0 + ev((i, -h[i]))) / h[i] ** 2
    for i in range(n):
        for j in range(i + 1, n):
            v = (
                ev((i, h[i]), (j, h[j]))
                - ev((i, h[i]), (j, -h[j]))
                - ev((i, -h[i]), (j, h[j]))
                + ev((i, -h[i]), (j, -h[j]))
            ) / (4.0 * h[i] * h[j])
            H[i, j] = H[j, i] = v
    return H


def _covariance(fn, theta: np.ndarray, scales: np.ndarray, flags: list[str]) -> np.ndarray | None:
    H = _numeric_hessian(fn, theta, scales)  # Hessian of the negative loglik
    if not np.all(np.isfinite(H)):
        flags.append("hessian-nonfinite")
        return None
    try:
        cov = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        flags.append("hessian-singular")
        return None
    cov = 0.5 * (cov + cov.T)
    eigval, eigvec = np.linalg.eigh(cov)
    if np.any(eigval <= 0):
        flags.append("covariance-projected-to-psd")
        eigval = np.clip(eigval, 1e-18, None)
        cov = eigvec @ np.diag(eigval) @ eigvec.T
    return cov


def phi_A_from_B(B: float) -> float:
    """Implied returns elasticity for reinvestment in technology: 2B - 1/(2B)."""
    if B <= 0:
        raise DomainError(f"phi_A_from_B requires B > 0, got {B}")
    return 2.0 * B - 1.0 / (2.0 * B)


def delta_method(
    fn: Callable[[PrimaryParams], float],
    pp: PrimaryParams,
    covariance: np.ndarray | None,
) -> float:
    """Standard error of fn(primary) by first-order propagation."""
    if covariance is None:
        return math.nan
    theta = pp.as_array()
    h = 1e-5 * np.maximum(np.abs(theta), np.array([1.0, 1e-6, 1.0, 0.1]))
    grad = np.empty(4)
    for i in range(4):
        up, dn = theta.copy(), theta.copy()
        up[i] += h[i]
        dn[i] -= h[i]
        try:
            f_up = fn(PrimaryParams.from_array(up))
            f_dn = fn(PrimaryParams.from_array(dn))
        except (DomainError, ValueError, OverflowError):
            return math.nan
        grad[i] = (f_up - f_dn) / (2.0 * h[i])
    var = float(grad @ covariance @ grad)
    return math.sqrt(var) if var >= 0 else math.nan


def _derived_rows(
    pp: PrimaryParams,
    cov: np.ndarray | None,
    y_first: float,
    y_last: float,
    t_first: float,
    t_last: float,
) -> dict[str, tuple[float, float]]:
    def lift(f: Callable[[PrimaryParams], float]) -> tuple[float, float]:
        try:
            val = f(pp)
        except (DomainError, ValueError, OverflowError):
            return math.nan, math.nan
        return val, delta_method(f, pp, cov)

    rows: dict[str, tuple[float, float]] = {}
    rows["s"] = lift(lambda p: primary_to_superexp(p).s)
    rows["B"] = lift(lambda p: primary_to_superexp(p).B)
    rows["delta"] = lift(lambda p: primary_to_superexp(p).delta)
    rows["sigma"] = lift(lambda p: primary_to_superexp(p).sigma)
    rows["phi_A"] = lift(lambda p: phi_A_from_B(primary_to_superexp(p).B))
    rows["steady_state"] = lift(lambda p: steady_state(primary_to_superexp(p)))
    rows["p_no_explosion_initial"] = lift(
        lambda p: 1.0 - explosion_probability(y_first, primary_to_superexp(p))
    )
    rows["p_no_explosion_final"] = lift(
        lambda p: 1.0 - explosion_probability(y_last, primary_to_superexp(p))
    )
    rows["median_explosion_year_initial"] = lift(
        lambda p: t_first + explosion_quantile(0.5, y_first, primary_to_superexp(p))
    )
    rows["median_explosion_year_final"] = lift(
        lambda p: t_last + explosion_quantile(0.5, y_last, primary_to_superexp(p))
    )
    return rows


def _boundary_kinds(opts: FitOptions) -> list[BoundaryKind]:
    if opts.boundary == "auto":
        return [BoundaryKind.ABSORBING, BoundaryKind.REFLECTING]
    return [BoundaryKind(opts.boundary)]


def fit_ml(series: Sequence[Observation], opts: FitOptions | None = None) -> FitResult:
    """Weighted dynamic ML fit; estimates every admissible boundary kind and
    keeps the better one, then populates derived rows, the restricted-model
    likelihood-ratio test and goodness-of-fit diagnostics."""
    opts = opts or FitOptions()
    if len(series) < 5:
        raise DomainError("fit_ml needs at least 5 observations")
    data = _PairData(series)

    candidates = []
    for kind in _boundary_kinds(opts):
        try:
            theta, ll, ok = _maximize_boundary(data, kind, opts)
        except DomainError:
            continue
        candidates.append((ll, tuple(theta), kind, ok))
    if not candidates:
        raise DomainError("no boundary kind produced a feasible fit")
    candidates.sort(key=lambda c: (-c[0], c[1]))
    ll, theta_t, kind, ok = candidates[0]
    theta = np.array(theta_t)

    flags: list[str] = []
    if not ok:
        flags.append("optimizer-not-converged")
    if kind is BoundaryKind.REFLECTING and -1.0 < theta[2] < 0.0:
        flags.append("non-unique-solution-regime")

    fn = _objective(kind, data, opts.control)
    cov = _covariance(fn, theta, _param_scales(data, theta), flags)
    pp = PrimaryParams.from_array(theta)

    result = FitResult(
        boundary=kind,
        primary=pp,
        covariance=cov,
        loglik=ll,
        n_obs=data.n,
        converged=ok,
        flags=flags,
    )
    result.derived = _derived_rows(
        pp, cov, data.y[0], data.y[-1], data.t[0], data.t[-1]
    )

    restricted = _fit_cev_core(data, opts)
    result.restricted = restricted
    result.lr_stat = max(2.0 * (ll - restricted.loglik), 0.0)
    result.lr_p = float(stats.chi2.sf(result.lr_stat, df=1))

    if opts.compute_gof:
        from .simulation import gof_quantiles  # deferred; simulation uses this module

        report = gof_quantiles(series, result, control=opts.control, seed=opts.seed)
        result.ks_stat, result.ks_p = report.ks_stat, report.ks_p
        result.serial_stat, result.serial_p = report.serial_stat, report.serial_p
    return result


def _fit_cev_core(data: _PairData, opts: FitOptions) -> FitResult:
    """Maximize under nu = -gamma (zero reinvestment coefficient).

    On this locus nu and gamma have opposite signs, so the admissible law
    is fixed by the sign of gamma: gamma < 0 puts nu > 0, where only the
    reflecting (chi-square) solution is proper, and vice versa.
    """
    objectives = {k: _objective(k, data, opts.control) for k in BoundaryKind}

    def fn3(z: np.ndarray) -> float:
        ln_a, b, gamma = z
        kind = BoundaryKind.REFLECTING if gamma < 0 else BoundaryKind.ABSORBING
        return objectives[kind](np.array([ln_a, b, -gamma, gamma]))

    starts = []
    for g in opts.gamma_grid:
        s4 = _moment_start(data, g, BoundaryKind.REFLECTING if g < 0 else BoundaryKind.ABSORBING)
        if s4 is not None:
            starts.append(np.array([s4[0], s4[1], s4[3]]))
    if not starts:
        starts.append(np.array([-10.0, 1e-5, -2.0]))

    scales3 = np.array([0.5, 1.0 / data.span, 0.4])
    best_z, best_ll, best_ok = None, -np.inf, False
    for z0 in starts:
        if not np.isfinite(fn3(z0)):
            continue

        def wrapped(u):
            return fn3(z0 + scales3 * u)

        res = optimize.minimize(
            wrapped,
            np.zeros(3),
            method="Nelder-Mead",
            options={
                "maxiter": opts.max_iter,
                "xatol": opts.xtol,
                "fatol": opts.ftol,
                "adaptive": True,
            },
        )
        if -res.fun > best_ll:
            best_z, best_ll, best_ok = z0 + scales3 * res.x, -res.fun, res.success
    if best_z is None:
        raise DomainError("restricted fit found no feasible start")
    theta = np.array([best_z[0], best_z[1], -best_z[2], best_z[2]])
    flags: list[str] = [] if best_ok else ["optimizer-not-converged"]
    pp = PrimaryParams.from_array(theta)
    kind = BoundaryKind.REFLECTING if best_z[2] < 0 else BoundaryKind.ABSORBING
    return FitResult(
        boundary=kind,
        primary=pp,
        covariance=None,
        loglik=best_ll,
        n_obs=data.n,
        converged=best_ok,
        flags=flags,
    )


def fit_cev(series: Sequence[Observation], opts: FitOptions | None = None) -> FitResult:
    """Constant-elasticity-of-variance (exponential-growth) restricted fit,
    with the likelihood-ratio statistic against the unrestricted model."""
    opts = opts or FitOptions()
    unrestricted = fit_ml(
        series,
        FitOptions(
            boundary=opts.boundary,
            gamma_grid=opts.gamma_grid,
            control=opts.control,
            max_iter=opts.max_iter,
            xtol=opts.xtol,
            ftol=opts.ftol,
            compute_gof=False,
            seed=opts.seed,
        ),
    )
    restricted = unrestricted.restricted
    assert restricted is not None
    restricted.lr_stat = unrestricted.lr_stat
    restricted.lr_p = unrestricted.lr_p
    return restricted


def fit_nls(series: Sequence[Observation]) -> NlsResult:
    """Growth-rate least squares with the scale exponent profiled out.

    The dependent variable is the compound annual growth rate between
    consecutive observations; for fixed exponent B the model is linear in
    (s, delta), which are concentrated out analytically, and the profile
    objective is minimized over B by one-dimensional search.  Observations
    are weighted by the time spans between them.
    """
    if len(series) < 4:
        raise DomainError("fit_nls needs at least 4 observations")
    return _fit_nls_data(_PairData(series))


def _fit_nls_data(data: _PairData) -> NlsResult:
    y0 = np.exp(data.ln_y0)
    rate = np.expm1((data.ln_y1 - data.ln_y0) / data.dt)  # compound annual rate
    wts = data.dt

    def concentrated(B: float) -> tuple[float, float, float]:
        u = y0**B
        A = np.column_stack([u, np.ones_like(u)])
        AtW = A.T * wts
        coef = np.linalg.solve(AtW @ A, AtW @ rate)
        resid = rate - A @ coef
        return float(np.dot(wts, resid**2)), float(coef[0]), float(coef[1])

    def profile(logB: float) -> float:
        try:
            return concentrated(math.exp(logB))[0]
        except (np.linalg.LinAlgError, OverflowError, FloatingPointError):
            return np.inf

    lo, hi = math.log(1e-3), math.log(5.0)
    grid = np.linspace(lo, hi, 60)
    vals = np.array([profile(g) for g in grid])
    if not np.any(np.isfinite(vals)):
        return NlsResult(math.nan, math.nan, math.nan, math.nan, math.inf, False, True)
    k = int(np.argmin(vals))
    bracket = (grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)])
    res = optimize.minimize_scalar(
        profile, bounds=bracket, method="bounded", options={"xatol": 1e-10}
    )
    logB = float(res.x)
    diverged = k in (0, len(grid) - 1)
    B = math.exp(logB)
    sse, s, delta = concentrated(B)
    resid = rate - (s * y0**B + delta)
    # instantaneous variance scale: Var[rate] ~ sigma^2 y^B / dt
    sigma2 = float(np.mean(resid**2 * data.dt / np.maximum(y0**B, 1e-300)))
    return NlsResult(
        s=s,
        B=B,
        delta=delta,
        sigma2=sigma2,
        sse=sse,
        converged=bool(res.success) and not diverged,
        diverged=diverged,
    )
