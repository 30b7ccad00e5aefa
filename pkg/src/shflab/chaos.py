"""Wiener chaos coefficients of the centered smeared field observable.

The squared coefficient at order k factorizes as beta^k times a
time-simplex integral of a spatial chain,

    c_k^2 = beta^k  int_{0 <= tau_1 <= ... <= tau_k <= 1}  dtau
            <g x g, p(u_0)^x2 Phi_eps p(u_1)^x2 ... Phi_eps p(u_k)^x2 g' x g'>,

with gaps u_0 = tau_1, u_i = tau_{i+1} - tau_i, u_k = 1 - tau_k, and Phi_eps
acting by multiplication with Phi_eps(x_1 - x_2) on R^4.  The beta^k
factorization is kept explicit, so the scaling identity
c_k^2(beta) = beta^k c_k^2(1) holds by construction.

For a gaussian mollifier and Gaussian test functions the chain state stays a
Gaussian on R^4 whose covariance is block-isotropic:

    Sigma = [[sa I2, sb I2], [sb I2, sa I2]],   mean = (c, c) fixed,

because the heat semigroup adds u to sa, and multiplying by the centered
gaussian factor Phi_eps(x_1 - x_2) adds (+1/v, -1/v) to the precision entries
while leaving a symmetric mean in place.  Each chain evaluation is therefore
a handful of scalar operations, vectorized here across simplex samples.

Conditional expectations onto a time slab are realized by restricting all
interaction times tau_i to [s, t]; the slab [0, 1] reproduces the plain
coefficients exactly (same sampler, same seeds).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from numpy.random import Generator, Philox

from .errors import DomainError, UndefinedCorrelationError, UnsupportedInputError
from .kernels import QuadratureSpec, _quad_checked
from .mollifier import GAUSSIAN, MollifierSpec, build_mollifier
from .testfunctions import GaussianBump, TestFunctionPair

TWO_PI = 2.0 * np.pi

#: default quadrature/sampling effort for chaos integrals
DEFAULT_CHAOS_QUAD = QuadratureSpec(rel_tol=1e-9, simplex_samples=100_000)


@dataclass(frozen=True)
class SlabSpec:
    """A time slab [s, t] inside [0, 1] onto which interactions are restricted."""

    s: float
    t: float

    def __post_init__(self):
        if not (0.0 <= self.s < self.t <= 1.0):
            raise DomainError(f"slab must satisfy 0 <= s < t <= 1, got [{self.s}, {self.t}]")

    @property
    def length(self) -> float:
        return self.t - self.s


FULL_SLAB = SlabSpec(0.0, 1.0)


@dataclass(frozen=True)
class ChaosCoefficients:
    """Squared Fourier coefficients c_k^2, k = 1..K, with error estimates.

    Each entry is beta^k times a beta-independent simplex integral, so the
    scaling identity across couplings is exact by construction.
    """

    epsilon: float
    beta: float
    K: int
    ck2: np.ndarray
    est_errors: np.ndarray
    method: str

    def __post_init__(self):
        if np.any(self.ck2 < 0):
            raise DomainError("squared coefficients must be nonnegative")


class _GaussianChainState:
    """Vectorized block-isotropic Gaussian state (mass, sa, sb) over samples."""

    def __init__(self, g: GaussianBump, n: int):
        w2 = g.width**2
        self.sa = np.full(n, w2)
        self.sb = np.zeros(n)
        self.mass = np.full(n, g.amplitude**2 * (TWO_PI) ** 2 * w2 * w2)

    def heat(self, u):
        self.sa = self.sa + u

    def multiply_gaussian_diagonal(self, gamma: float, v: float):
        det_s = self.sa * self.sa - self.sb * self.sb
        pa = self.sa / det_s
        pb = -self.sb / det_s
        det_p = pa * pa - pb * pb
        pa += 1.0 / v
        pb -= 1.0 / v
        det_p_new = pa * pa - pb * pb
        self.mass = self.mass * (gamma * det_p / det_p_new)
        self.sa = pa / det_p_new
        self.sb = -pb / det_p_new

    def pair(self, gp: GaussianBump, delta2: float) -> np.ndarray:
        sa = self.sa + gp.width**2
        sb = self.sb
        det = sa * sa - sb * sb
        amp = gp.amplitude**2 * (TWO_PI * gp.width**2) ** 2 / (TWO_PI**2)
        return self.mass * amp * np.exp(-delta2 / (sa + sb)) / det


def _pair_delta2(pair: TestFunctionPair) -> float:
    dg = pair.g.center
    dp = pair.gp.center
    return (dg[0] - dp[0]) ** 2 + (dg[1] - dp[1]) ** 2


def gaussian_chain_values(taus: np.ndarray, pair: TestFunctionPair, gamma: float, v: float) -> np.ndarray:
    """Spatial chain value for each row of interaction times (shape (N, k), sorted)."""
    taus = np.atleast_2d(np.asarray(taus, dtype=np.float64))
    n, k = taus.shape
    state = _GaussianChainState(pair.g, n)
    prev = np.zeros(n)
    for i in range(k):
        ti = taus[:, i]
        state.heat(ti - prev)
        state.multiply_gaussian_diagonal(gamma, v)
        prev = ti
    state.heat(1.0 - prev)
    return state.pair(pair.gp, _pair_delta2(pair))


def _sampler_seed(base_seed: int, k: int, slab: SlabSpec) -> list[int]:
    tag = int(np.float64(slab.s).view(np.uint64) >> 12) ^ int(np.float64(slab.t).view(np.uint64) >> 13)
    return [0, tag % (1 << 63), k, base_seed]


def _mc_order_integral(chain_fn, k, slab, spec, base_seed, v_scale):
    """Importance-sampled simplex integral for order k >= 2.

    The chain integrand spikes like prod 1/(gap + v) when interaction times
    cluster at the mollifier time scale v, so uniform simplex sampling has
    unbounded relative variance as eps shrinks.  Gaps between consecutive
    interactions are drawn from the matching density q(gap) ~ 1/(gap + v)
    instead, which cancels the spikes and leaves bounded weights; the first
    time is uniform on the room the gaps leave inside the slab.  Antithetic
    pairs (U -> 1-U on every gap coordinate) are kept from the plain scheme.
    """
    rng = Generator(Philox(counter=_sampler_seed(base_seed, k, slab), key=[0xC0FFEE, 0]))
    n_half = max(64, spec.simplex_samples // 2)
    length = slab.length
    v = v_scale
    z = math.log((length + v) / v)  # normalizer of 1/(g+v) on [0, length]

    u = rng.random((n_half, k - 1))
    u_tau = rng.random(n_half)

    def half_values(u_gaps):
        gaps = v * np.expm1(u_gaps * z)
        room = length - gaps.sum(axis=1)
        ok = room > 0.0
        tau1 = slab.s + u_tau * np.where(ok, room, 0.0)
        taus = tau1[:, None] + np.concatenate(
            [np.zeros((n_half, 1)), np.cumsum(gaps, axis=1)], axis=1
        )
        np.clip(taus, slab.s, slab.t, out=taus)  # harmless for zero-weight rows
        weight = np.where(ok, room, 0.0) * np.prod(z * (gaps + v), axis=1)
        return chain_fn(taus) * weight

    vals = 0.5 * (half_values(u) + half_values(1.0 - u))
    integral = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(n_half))
    return integral, se


def _quad_order_one(chain_fn, slab: SlabSpec, spec: QuadratureSpec):
    quad_spec = QuadratureSpec(rel_tol=min(spec.rel_tol, 1e-9), max_subdivisions=spec.max_subdivisions)
    val, err = _quad_checked(
        lambda tau: float(chain_fn(np.array([[tau]]))[0]),
        slab.s,
        slab.t,
        quad_spec,
        what="order-1 chaos integral",
    )
    return val, err


def _resolve_mollifier(mollifier, epsilon: float) -> MollifierSpec:
    if mollifier is None:
        return build_mollifier(GAUSSIAN, epsilon)
    if mollifier.epsilon != epsilon:
        raise DomainError("mollifier scale does not match requested epsilon")
    return mollifier


def order_integral(
    k: int,
    epsilon: float,
    pair: TestFunctionPair,
    slab: SlabSpec = FULL_SLAB,
    spec: QuadratureSpec = DEFAULT_CHAOS_QUAD,
    mollifier: MollifierSpec | None = None,
    seed: int = 0,
) -> tuple[float, float]:
    """Beta-independent simplex integral I_k with interactions in the slab.

    Order 1 is done by adaptive quadrature, higher orders by the
    importance-sampled simplex scheme; both evaluate the same chain reduction.
    """
    if k < 1:
        raise DomainError("chaos order must be >= 1")
    moll = _resolve_mollifier(mollifier, epsilon)
    pair.require_gaussian("the gaussian-analytic chaos path")
    gamma, v = moll.gaussian_kernel_params()
    chain_fn = lambda taus: gaussian_chain_values(taus, pair, gamma, v)  # noqa: E731
    if k == 1:
        return _quad_order_one(chain_fn, slab, spec)
    return _mc_order_integral(chain_fn, k, slab, spec, seed, v)


def chaos_coefficient(
    k: int,
    epsilon: float,
    beta: float,
    pair: TestFunctionPair,
    spec: QuadratureSpec = DEFAULT_CHAOS_QUAD,
    mollifier: MollifierSpec | None = None,
    seed: int = 0,
    method: str = "gaussian-analytic",
) -> tuple[float, float]:
    """(c_k^2, error estimate) for the observable at coupling beta."""
    if method == "grid":
        val, err = grid_order_integral(k, epsilon, pair, spec=spec, mollifier=mollifier, seed=seed)
    elif method == "gaussian-analytic":
        val, err = order_integral(k, epsilon, pair, FULL_SLAB, spec, mollifier, seed)
    else:
        raise UnsupportedInputError(f"unknown chaos method {method!r}")
    scale = beta**k
    return scale * val, scale * err


def chaos_coefficients(
    K: int,
    epsilon: float,
    beta: float,
    pair: TestFunctionPair,
    spec: QuadratureSpec = DEFAULT_CHAOS_QUAD,
    mollifier: MollifierSpec | None = None,
    seed: int = 0,
) -> ChaosCoefficients:
    """All squared coefficients up to order K (gaussian-analytic path)."""
    if K < 1:
        raise DomainError("need K >= 1")
    ck2 = np.empty(K)
    errs = np.empty(K)
    for k in range(1, K + 1):
        ck2[k - 1], errs[k - 1] = chaos_coefficient(
            k, epsilon, beta, pair, spec=spec, mollifier=mollifier, seed=seed
        )
    return ChaosCoefficients(
        epsilon=epsilon, beta=beta, K=K, ck2=ck2, est_errors=errs, method="gaussian-analytic"
    )


def variance_from_chaos(coeffs: ChaosCoefficients) -> float:
    """Total variance captured by the computed orders: sum of c_k^2, k <= K."""
    return float(np.sum(coeffs.ck2))


def _tail_ratio_model(coeffs: ChaosCoefficients):
    """Fitted ratio sequence r_hat(m) = ratio of c_(K+m)^2 to c_(K+m-1)^2.

    The measured ratios r_k = ck2[k+1]/ck2[k] decline with k (the spectrum is
    tempered faster than geometrically), so the tail extrapolates the ratio
    itself geometrically: r_hat(m) = r_K * q^m with q fitted on the last few
    computed ratios.  q = 1 recovers the plain geometric tail.
    """
    ck2 = coeffs.ck2
    if coeffs.K < 2 or np.any(ck2[-2:] <= 0):
        return None
    r_last = ck2[-1] / ck2[-2]
    ratios = ck2[1:] / ck2[:-1]
    good = ratios[np.isfinite(ratios) & (ratios > 0)]
    if len(good) >= 3:
        logs = np.log(good[-4:])
        q = float(np.exp(np.mean(np.diff(logs))))
        q = min(q, 1.0)
    else:
        q = 1.0
    if r_last * q >= 1.0:
        return None
    return r_last, q


def _tail_sum(c_last: float, r_last: float, q: float, damp: float = 1.0, terms: int = 400) -> float:
    total = 0.0
    prod = 1.0
    for m in range(1, terms + 1):
        prod *= min(r_last * q**m, 0.999) * damp
        total += prod
        if prod < 1e-16:
            break
    return c_last * total


def tail_estimate(coeffs: ChaosCoefficients) -> tuple[float, float]:
    """Extrapolated chaos mass beyond order K, with an uncertainty estimate.

    Reported separately from the computed sum, never silently added.  The
    uncertainty combines the sampling errors of the last two coefficients
    with the spread between the fitted ratio decay and its square (a proxy
    for the extrapolation-model error).
    """
    if coeffs.K < 2:
        raise DomainError("tail estimate needs at least two computed orders")
    model = _tail_ratio_model(coeffs)
    if model is None:
        return 0.0, float("inf")
    r_last, q = model
    c_last = float(coeffs.ck2[-1])
    value = _tail_sum(c_last, r_last, q)
    # model spread: vary the fitted decay both ways
    spread = 0.5 * abs(_tail_sum(c_last, r_last, q * q) - _tail_sum(c_last, r_last, math.sqrt(q)))
    e_last, e_prev = float(coeffs.est_errors[-1]), float(coeffs.est_errors[-2])
    dr = r_last * math.hypot(
        e_last / c_last if c_last > 0 else 0.0,
        e_prev / coeffs.ck2[-2] if coeffs.ck2[-2] > 0 else 0.0,
    )
    mc_part = abs(_tail_sum(c_last, min(r_last + dr, 0.999), q) - _tail_sum(c_last, max(r_last - dr, 0.0), q))
    return value, math.hypot(spread, 0.5 * mc_part)


def correlation_from_chaos(coeffs: ChaosCoefficients, tau: float, include_tail: bool = False) -> float:
    """Resampling correlation sum_k e^(-k tau) c_k^2 / sum_k c_k^2.

    With ``include_tail`` both sums are continued beyond K by the fitted
    ratio-decay tail model.
    """
    if tau < 0:
        raise DomainError("tau must be nonnegative")
    k = np.arange(1, coeffs.K + 1)
    num = float(np.sum(np.exp(-k * tau) * coeffs.ck2))
    den = float(np.sum(coeffs.ck2))
    if include_tail:
        model = _tail_ratio_model(coeffs)
        if model is not None:
            r_last, q = model
            c_last = float(coeffs.ck2[-1])
            den += _tail_sum(c_last, r_last, q)
            num += math.exp(-coeffs.K * tau) * _tail_sum(c_last, r_last, q, damp=math.exp(-tau))
    if den <= 0:
        raise UndefinedCorrelationError("total chaos mass is zero")
    return num / den


def spectral_median_index(coeffs: ChaosCoefficients, include_tail: bool = True) -> int:
    """Smallest k whose cumulative mass reaches half the (tail-completed) total."""
    total = variance_from_chaos(coeffs)
    if include_tail:
        t0, _ = tail_estimate(coeffs)
        total += t0 if np.isfinite(t0) else 0.0
    if total <= 0:
        raise UndefinedCorrelationError("total chaos mass is zero")
    cum = np.cumsum(coeffs.ck2)
    idx = np.searchsorted(cum, 0.5 * total)
    return int(idx) + 1


def slab_variance(
    slab: SlabSpec,
    K: int,
    epsilon: float,
    beta: float,
    pair: TestFunctionPair,
    spec: QuadratureSpec = DEFAULT_CHAOS_QUAD,
    mollifier: MollifierSpec | None = None,
    seed: int = 0,
) -> float:
    """Variance of the conditional expectation onto the slab, truncated at K.

    Realized by restricting every interaction time of the chaos integrals to
    [s, t]; the full slab [0, 1] reproduces variance_from_chaos exactly.
    """
    total = 0.0
    for k in range(1, K + 1):
        val, _ = order_integral(k, epsilon, pair, slab, spec, mollifier, seed)
        total += beta**k * val
    return total


# ---------------------------------------------------------------------------
# grid path: brute spatial chain on a coarse pair-field, for cross-checks


def _grid_chain_value(taus, pair: TestFunctionPair, moll: MollifierSpec, n: int, box: float) -> float:
    """One chain evaluation with the pair-field represented on (n^2)^2 points."""
    h = box / n
    x = -box / 2.0 + h * np.arange(n)
    xx, yy = np.meshgrid(x, x, indexing="ij")
    field = np.multiply.outer(pair.g(xx, yy), pair.g(xx, yy))  # (n,n,n,n)

    dx = xx[:, :, None, None] - xx[None, None, :, :]
    dy = yy[:, :, None, None] - yy[None, None, :, :]
    # 4d multiplier Phi_eps(x1 - x2); min-image on the periodic box
    dx = dx - box * np.round(dx / box)
    dy = dy - box * np.round(dy / box)
    if moll.shape == GAUSSIAN:
        gamma, v = moll.gaussian_kernel_params()
        phi_mult = gamma * np.exp(-(dx * dx + dy * dy) / (2.0 * v))
    else:
        rr = np.hypot(dx, dy)
        phi_mult = moll.phi_conv(rr / moll.epsilon) / moll.epsilon**2

    kx2 = (np.fft.fftfreq(n, d=h) * TWO_PI) ** 2
    ky2 = (np.fft.rfftfreq(n, d=h) * TWO_PI) ** 2

    def heat4(f, t):
        if t <= 0:
            return f
        mult = np.exp(
            -0.5
            * t
            * (
                kx2[:, None, None, None]
                + kx2[None, :, None, None]
                + kx2[None, None, :, None]
                + ky2[None, None, None, :]
            )
        )
        fh = sfft.rfftn(f, axes=(0, 1, 2, 3))
        return sfft.irfftn(fh * mult, s=f.shape, axes=(0, 1, 2, 3))

    prev = 0.0
    for ti in taus:
        field = heat4(field, ti - prev)
        field = field * phi_mult
        prev = ti
    field = heat4(field, 1.0 - prev)
    gp_field = np.multiply.outer(pair.gp(xx, yy), pair.gp(xx, yy))
    return float(np.sum(field * gp_field) * h**4)


def grid_order_integral(
    k: int,
    epsilon: float,
    pair: TestFunctionPair,
    spec: QuadratureSpec = DEFAULT_CHAOS_QUAD,
    mollifier: MollifierSpec | None = None,
    seed: int = 0,
    grid_n: int = 32,
    box: float = 8.0,
    slab: SlabSpec = FULL_SLAB,
) -> tuple[float, float]:
    """I_k by brute grid evaluation of the chain; only small k are feasible."""
    if k > 3:
        raise UnsupportedInputError("grid chaos path supports k <= 3 only")
    moll = _resolve_mollifier(mollifier, epsilon)
    if not pair.is_gaussian:
        raise UnsupportedInputError("grid chaos path samples Gaussian pairs onto its own grid")

    chain = lambda taus: _grid_chain_value(taus, pair, moll, grid_n, box)  # noqa: E731
    volume = slab.length**k / math.factorial(k)
    if k == 1:
        # fixed Gauss-Legendre panel; the integrand is smooth in tau
        nodes, weights = np.polynomial.legendre.leggauss(24)
        tt = slab.s + slab.length * (nodes + 1.0) / 2.0
        vals = np.array([chain([t]) for t in tt])
        val = slab.length / 2.0 * float(np.sum(weights * vals))
        coarse = slab.length / 2.0 * float(np.sum(weights[::2] * vals[::2])) * 2.0
        return val, abs(val - coarse) * 0.1
    n_samples = min(spec.simplex_samples, 384)
    rng = Generator(Philox(counter=[0, 0, k, seed], key=[0xBADA55, 1]))
    taus = slab.s + slab.length * np.sort(rng.random((n_samples, k)), axis=1)
    vals = np.array([chain(row) for row in taus])
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(n_samples))
    return volume * mean, volume * se
