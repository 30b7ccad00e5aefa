"""Heat kernel, the reciprocal-gamma weight j, and two-particle kernel pairings.

The two-particle kernel acting on products of test functions is

    <g x g, W(t) g' x g'> = int_{u+u'+u''=t} du du' 4*pi*j(u')
        int dy dy' (p(u)g)^2(y) p(u'/2, y-y') (p(u'')g')^2(y'),

with p the 2d heat kernel of generator Laplacian/2 (variance t) and

    j(t) = int_0^inf t^(u-1) exp(theta*u) / Gamma(u) du.

j blows up like 1/(t log^2 t) as t -> 0, which is integrable; the outer
time integral is regularized by the substitution u' = exp(-1/rho) under
which the integrand extends continuously to rho = 0.

For Gaussian test functions every spatial integral collapses to closed form
(Gaussians are closed under heat flow, pointwise squaring and pairing), so
only the two time integrals are done numerically.  For gridded test functions
the spatial pairing is evaluated spectrally on the periodic grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.fft as sfft
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.special import gammaln

from .errors import AccuracyError, DomainError, UnsupportedInputError
from .testfunctions import GaussianBump, GriddedFunction, TestFunctionPair, heat_multiplier

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and effort bounds for the numerical integrals."""

    rel_tol: float = 1e-8
    abs_tol: float = 0.0
    max_subdivisions: int = 200
    simplex_samples: int = 100_000

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise DomainError("rel_tol must be positive")
        if self.abs_tol < 0:
            raise DomainError("abs_tol must be nonnegative")
        if self.max_subdivisions < 1 or self.simplex_samples < 1:
            raise DomainError("counts must be >= 1")


#: default for the j integral
DEFAULT_JFN_QUAD = QuadratureSpec(rel_tol=1e-8)
#: default for kernel pairings (two nested time integrals)
DEFAULT_PAIRING_QUAD = QuadratureSpec(rel_tol=1e-4)


def heat_kernel(t, x):
    """2d heat kernel p(t, x) = exp(-|x|^2/(2t)) / (2 pi t).

    The variance-t convention is forced by the generator Laplacian/2.
    ``x`` may be a point (pair) or an array whose last axis has length 2.
    """
    if not t > 0:
        raise DomainError(f"heat kernel needs t > 0, got {t}")
    x = np.asarray(x, dtype=np.float64)
    r2 = np.sum(x * x, axis=-1)
    out = np.exp(-r2 / (2.0 * t)) / (TWO_PI * t)
    return float(out) if out.ndim == 0 else out


def _quad_checked(f, a, b, spec: QuadratureSpec, points=None, what="integral"):
    """scipy adaptive Gauss-Kronrod with tolerance enforcement."""
    kwargs = dict(
        epsabs=spec.abs_tol if spec.abs_tol > 0 else 1e-300,
        epsrel=spec.rel_tol,
        limit=spec.max_subdivisions,
        full_output=1,
    )
    if points is not None:
        pts = sorted(p for p in points if a < p < b)
        if pts:
            kwargs["points"] = pts
    out = quad(f, a, b, **kwargs)
    value, abserr = out[0], out[1]
    tol = max(spec.abs_tol, spec.rel_tol * abs(value))
    # QUADPACK's estimate is conservative; allow a small safety factor
    if len(out) > 3 and abserr > 100.0 * max(tol, 1e-15 * abs(value)):
        raise AccuracyError(
            f"{what} did not reach tolerance: est err {abserr:.3g} on value {value:.6g}",
            achieved=abserr,
            value=value,
        )
    return value, abserr


def _j_log_integrand_max(theta: float, log_t: float) -> float:
    u = np.linspace(1e-3, 30.0, 400)
    lg = (u - 1.0) * log_t + theta * u - gammaln(u)
    return float(lg.max())


def _j_tail_cutoff(theta: float, log_t: float, lg_max: float, log_rel: float) -> float:
    """Smallest u >= 2 where the log-integrand has dropped below threshold."""
    thresh = lg_max + log_rel - 40.0

    def lg(u):
        return (u - 1.0) * log_t + theta * u - gammaln(u)

    hi = 2.0
    while lg(hi) > thresh:
        hi *= 2.0
        if hi > 1e7:  # pragma: no cover - Gamma growth makes this unreachable
            break
    return hi


def j_theta_with_error(
    theta: float, t: float, spec: QuadratureSpec = DEFAULT_JFN_QUAD
) -> tuple[float, float]:
    """(j(t), error estimate) by adaptive quadrature; see j_theta."""
    if not t > 0:
        raise DomainError(f"j is defined for t > 0, got {t}")
    log_t = math.log(t)

    def f(u):
        if u <= 0.0:
            return 0.0
        return math.exp((u - 1.0) * log_t + theta * u - gammaln(u))

    # peak location scale when t is tiny (mass concentrates near u = 0)
    decay = max(1.0, -log_t - theta)
    u_star = min(0.5, 2.0 / decay)

    v1, e1 = _quad_checked(
        f, 0.0, 1.0, spec, points=[u_star, min(0.9, 10.0 * u_star)], what="j lower part"
    )
    lg_max = _j_log_integrand_max(theta, log_t)
    hi = _j_tail_cutoff(theta, log_t, lg_max, math.log(spec.rel_tol))
    v2, e2 = _quad_checked(f, 1.0, hi, spec, what="j tail part")
    value = v1 + v2
    if not value > 0:
        raise AccuracyError(f"j({theta}, {t}) evaluated non-positive", value=value)
    return value, e1 + e2


def j_theta(theta: float, t: float, spec: QuadratureSpec = DEFAULT_JFN_QUAD) -> float:
    """j(t) = int_0^inf t^(u-1) e^(theta u) / Gamma(u) du, by adaptive quadrature.

    The integral is split at u = 1 and truncated where the reciprocal gamma
    factor underflows the tolerance.  Increasing in theta; positive for all
    t > 0.  At theta = 0, t = 1 this is the reciprocal-gamma integral
    2.80777024...
    """
    return j_theta_with_error(theta, t, spec)[0]


@dataclass(frozen=True)
class KernelTable:
    """j tabulated on a log-spaced time grid, with log-log cubic interpolation."""

    theta: float
    t_grid: np.ndarray
    j_values: np.ndarray

    def __post_init__(self):
        if np.any(self.j_values <= 0):
            raise DomainError("j table must be positive")
        if np.any(np.diff(self.t_grid) <= 0):
            raise DomainError("t grid must be strictly increasing")
        spline = CubicSpline(np.log(self.t_grid), np.log(self.j_values))
        object.__setattr__(self, "_spline", spline)

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < self.t_grid[0]) or np.any(t > self.t_grid[-1]):
            raise DomainError("kernel table evaluated outside its grid")
        out = np.exp(self._spline(np.log(t)))
        return float(out) if out.ndim == 0 else out

    def bound_statistic(self) -> float:
        """max of t |log t|^2 j(t) over tabulated t <= 1/2 (finite by the small-t bound)."""
        mask = self.t_grid <= 0.5
        tt = self.t_grid[mask]
        return float(np.max(tt * np.log(tt) ** 2 * self.j_values[mask]))


def build_kernel_table(
    theta: float,
    t_min: float = 1e-9,
    t_max: float = 4.0,
    points: int = 512,
    spec: QuadratureSpec = DEFAULT_JFN_QUAD,
) -> KernelTable:
    if not 0 < t_min < t_max:
        raise DomainError("need 0 < t_min < t_max")
    t_grid = np.exp(np.linspace(math.log(t_min), math.log(t_max), points))
    j_values = np.array([j_theta(theta, t, spec) for t in t_grid])
    return KernelTable(theta=theta, t_grid=t_grid, j_values=j_values)


class PairingMethod(str, Enum):
    GAUSSIAN_ANALYTIC = "gaussian-analytic"
    GRID = "grid"


@dataclass(frozen=True)
class WPairingResult:
    value: float
    est_error: float
    method: PairingMethod


def _spatial_factor_gaussian(pair: TestFunctionPair, u: float, uprime: float, upp: float) -> float:
    """Closed form of int dy dy' (p(u)g)^2(y) p(u'/2, y-y') (p(u'')g')^2(y')."""
    a = pair.g.heat(u).squared()
    b = pair.gp.heat(upp).squared()
    return a.heat(uprime / 2.0).pair(b)


class _GridSpatialFactor:
    """Same spatial factor for gridded pairs, evaluated spectrally."""

    def __init__(self, pair: TestFunctionPair):
        g, gp = pair.g, pair.gp
        self.n, self.L, self.h = g.n, g.box_side, g.h
        self.g_hat = sfft.rfft2(g.values)
        self.gp_hat = sfft.rfft2(gp.values)
        self.shape = g.values.shape

    def _mult(self, t):
        return heat_multiplier(self.n, self.L, t)

    def __call__(self, u: float, uprime: float, upp: float) -> float:
        a2 = sfft.irfft2(self.g_hat * self._mult(u), s=self.shape) ** 2
        b2 = sfft.irfft2(self.gp_hat * self._mult(upp), s=self.shape) ** 2
        c = sfft.irfft2(sfft.rfft2(b2) * self._mult(uprime / 2.0), s=self.shape)
        return float(np.sum(a2 * c) * self.h**2)


# 1/Gamma(u) = u + gamma u^2 + c3 u^3 + c4 u^4 + ... around u = 0; used for
# the small-time asymptotics of j, where the direct integral overflows
_EULER = float(np.euler_gamma)
_RG_C3 = _EULER**2 / 2.0 - math.pi**2 / 12.0
_RG_C4 = _EULER**3 / 6.0 - _EULER * math.pi**2 / 12.0 + 1.2020569031595943 / 3.0


def _j_times_u_over_rho2(theta: float, rho: float) -> float:
    """j(u) u / rho^2 for u = exp(-1/rho), via the reciprocal-gamma series.

    Valid for small rho; relative error O(rho^4).  Tends to 1 as rho -> 0,
    which regularizes the substituted outer integral of the kernel pairing.
    """
    x = 1.0 / (1.0 - theta * rho)
    return x**2 + 2.0 * _EULER * rho * x**3 + 6.0 * _RG_C3 * rho**2 * x**4 + 24.0 * _RG_C4 * rho**3 * x**5


def _w_pairing_impl(theta_bar, t, spatial, spec, j_fn):
    inner_spec = QuadratureSpec(
        rel_tol=max(1e-10, spec.rel_tol * 1e-2),
        abs_tol=0.0,
        max_subdivisions=spec.max_subdivisions,
    )

    def kin(uprime):
        rem = t - uprime
        if rem <= 0:
            return 0.0
        val, _ = _quad_checked(
            lambda w: spatial(rem * w, uprime, rem * (1.0 - w)),
            0.0,
            1.0,
            inner_spec,
            what="inner time integral",
        )
        return rem * val

    # outer integral over u', singular like 1/(u' log^2 u') at 0: substitute
    # u' = exp(-1/rho) on (0, a], plain quadrature on [a, t]
    a = min(t / 2.0, 0.25)
    rho_a = -1.0 / math.log(a)

    def f_rho(rho):
        if rho <= 0.0:
            return 0.0
        up = math.exp(-1.0 / rho)
        if up < 1e-12:
            # below this point evaluating j directly can overflow; the series
            # form of j(u') u' / rho^2 is accurate to O(rho^4) here
            return 2.0 * TWO_PI * _j_times_u_over_rho2(theta_bar, rho) * kin(up)
        return 2.0 * TWO_PI * j_fn(up) * kin(up) * up / (rho * rho)

    v1, e1 = _quad_checked(f_rho, 0.0, rho_a, spec, what="w pairing (small u')")
    if t > a:
        v2, e2 = _quad_checked(
            lambda up: 2.0 * TWO_PI * j_fn(up) * kin(up), a, t, spec, what="w pairing (bulk u')"
        )
    else:
        v2, e2 = 0.0, 0.0
    value = v1 + v2
    est = e1 + e2 + inner_spec.rel_tol * abs(value)
    return value, est


def w_pairing(
    theta_bar: float,
    t: float,
    pair: TestFunctionPair,
    spec: QuadratureSpec = DEFAULT_PAIRING_QUAD,
    method: str = "auto",
    j_fn=None,
) -> WPairingResult:
    """<g x g, W(t) g' x g'> for the two-particle kernel at parameter theta_bar.

    Gaussian pairs use the fully reduced closed form for the spatial chain;
    gridded pairs evaluate it spectrally on their box.  The kernel is positive,
    so nonnegative pairs must give a nonnegative value.
    """
    if not t > 0:
        raise DomainError(f"w_pairing needs t > 0, got {t}")
    if method == "auto":
        method = (
            PairingMethod.GAUSSIAN_ANALYTIC.value if pair.is_gaussian else PairingMethod.GRID.value
        )
    if j_fn is None:
        jspec = QuadratureSpec(rel_tol=min(1e-8, spec.rel_tol), max_subdivisions=spec.max_subdivisions)
        j_fn = lambda u: j_theta(theta_bar, u, jspec)  # noqa: E731

    if method == PairingMethod.GAUSSIAN_ANALYTIC.value:
        pair.require_gaussian("the gaussian-analytic pairing path")
        spatial = lambda u, up, upp: _spatial_factor_gaussian(pair, u, up, upp)  # noqa: E731
    elif method == PairingMethod.GRID.value:
        if not pair.is_gridded:
            raise UnsupportedInputError("grid pairing path requires a gridded pair")
        spatial = _GridSpatialFactor(pair)
    else:
        raise UnsupportedInputError(f"unknown pairing method {method!r}")

    value, est = _w_pairing_impl(theta_bar, t, spatial, spec, j_fn)
    nonneg = _pair_is_nonnegative(pair)
    if nonneg and value < -est:
        raise AccuracyError(
            "kernel pairing of a nonnegative pair came out negative beyond tolerance",
            achieved=est,
            value=value,
        )
    if nonneg:
        value = max(value, 0.0)
    return WPairingResult(value=value, est_error=est, method=PairingMethod(method))


def _pair_is_nonnegative(pair: TestFunctionPair) -> bool:
    def ok(f):
        if isinstance(f, GaussianBump):
            return f.amplitude >= 0
        if isinstance(f, GriddedFunction):
            return bool(np.all(f.values >= 0))
        return False

    return ok(pair.g) and ok(pair.gp)


def q2_pairing(
    theta: float,
    t: float,
    pair: TestFunctionPair,
    spec: QuadratureSpec = DEFAULT_PAIRING_QUAD,
    j_fn=None,
) -> float:
    """Two-particle moment pairing <g x g, (p(t)^x2 + W(t)) g' x g'>.

    The product part is exact: <g, p(t) g'>^2.
    """
    mean_part = pair.heat_pairing(t) ** 2
    w = w_pairing(theta, t, pair, spec=spec, j_fn=j_fn)
    return mean_part + w.value


def sensitivity_limit_ratio(
    theta: float,
    tau_bar: float,
    pair: TestFunctionPair,
    spec: QuadratureSpec = DEFAULT_PAIRING_QUAD,
) -> float:
    """Limit ratio R(tau_bar) = W-pairing at theta - tau_bar over the one at theta, t = 1.

    Equals 1 exactly at tau_bar = 0 and decreases strictly to 0 as tau_bar grows.
    """
    if tau_bar < 0:
        raise DomainError("tau_bar must be nonnegative")
    denom = w_pairing(theta, 1.0, pair, spec=spec).value
    numer = w_pairing(theta - tau_bar, 1.0, pair, spec=spec).value
    return numer / denom


def sensitivity_threshold_tau(
    theta: float,
    pair: TestFunctionPair,
    target: float = 0.05,
    spec: QuadratureSpec = DEFAULT_PAIRING_QUAD,
    start: float = 8.0,
    cap: float = 1e6,
) -> tuple[float, float]:
    """Smallest tau_bar in the doubling ladder with R(tau_bar) < target."""
    denom = w_pairing(theta, 1.0, pair, spec=spec).value
    tau = start
    while tau <= cap:
        r = w_pairing(theta - tau, 1.0, pair, spec=spec).value / denom
        if r < target:
            return tau, r
        tau *= 2.0
    raise AccuracyError(f"ratio did not drop below {target} up to tau_bar = {cap}")
