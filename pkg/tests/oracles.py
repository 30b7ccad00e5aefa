"""Independent oracles used by the test suite.

Each oracle computes a quantity by a route deliberately different from the
package's own: brute-force Monte Carlo for the kernel pairing, a hand-reduced
closed form for the order-1 chaos chain, rejection sampling for the mollifier
log-pairing constant, direct O(4^n) summation for Walsh coefficients, and an
exact tensor recursion for the lattice second moment.  High-precision golden
values for the reciprocal-gamma integral were computed once with mpmath
(regeneration helper at the bottom) and are frozen in the test modules.
"""

import math

import numpy as np
import scipy.fft as sfft
from numpy.random import Generator, Philox
from scipy.integrate import quad

EULER_GAMMA = float(np.euler_gamma)
ZETA3 = 1.2020569031595943

# 1/Gamma(u) = u + gamma u^2 + c3 u^3 + c4 u^4 + ... near u = 0
_RECIP_GAMMA_C3 = EULER_GAMMA**2 / 2.0 - math.pi**2 / 12.0
_RECIP_GAMMA_C4 = EULER_GAMMA**3 / 6.0 - EULER_GAMMA * math.pi**2 / 12.0 + ZETA3 / 3.0


def w_pairing_mc(theta_bar, t, pair, j_fn, n_samples=2_000_000, seed=0):
    """Brute-force Monte Carlo of <g x g, W(t) g' x g'>.

    All spatial kernels are sampled as transition densities (x's around y,
    y' around y, via Gaussian draws), so the only importance weights are the
    test-function values, the y-proposal, and the j weight.  The singular
    time direction u' is split into a substituted region u' = exp(-1/rho)
    (bounded weights as u' -> 0, using the reciprocal-gamma series below the
    table floor) and a plain bulk region.

    ``j_fn`` evaluates the scalar weight j (validated separately against a
    high-precision oracle); everything else is independent of the analytic
    pairing reduction.
    """
    g, gp = pair.g, pair.gp
    rng = Generator(Philox(key=[seed, 0x0A11]))

    a = min(t / 2.0, 0.25)
    rho_a = -1.0 / math.log(a)
    c_mid = ((g.center[0] + gp.center[0]) / 2.0, (g.center[1] + gp.center[1]) / 2.0)
    sigma_y2 = max(g.width**2, gp.width**2) + t

    # dense log-log interpolation of j over the bulk of the u' range
    t_lo = 1e-12
    grid = np.exp(np.linspace(math.log(t_lo), math.log(t), 4096))
    log_j = np.log([j_fn(u) for u in grid])

    def j_interp(u):
        return np.exp(np.interp(np.log(u), np.log(grid), log_j))

    def ju_over_rho2(u, rho):
        """j(u) * u / rho^2 with rho = -1/log u; series once u underflows the table."""
        out = np.empty_like(rho)
        small = u < t_lo
        big = ~small
        if np.any(big):
            out[big] = j_interp(u[big]) * u[big] / rho[big] ** 2
        if np.any(small):
            r = rho[small]
            x = 1.0 / (1.0 - theta_bar * r)
            out[small] = (
                x**2
                + 2.0 * EULER_GAMMA * r * x**3
                + 6.0 * _RECIP_GAMMA_C3 * r**2 * x**4
                + 24.0 * _RECIP_GAMMA_C4 * r**3 * x**5
            )
        return out

    def spatial_values(u, uprime, n):
        upp = t - u - uprime
        y = rng.normal(size=(n, 2)) * math.sqrt(sigma_y2) + c_mid
        q_y = np.exp(-((y[:, 0] - c_mid[0]) ** 2 + (y[:, 1] - c_mid[1]) ** 2) / (2 * sigma_y2)) / (
            2 * math.pi * sigma_y2
        )
        yp = y + rng.normal(size=(n, 2)) * np.sqrt(uprime / 2.0)[:, None]
        x1 = y + rng.normal(size=(n, 2)) * np.sqrt(u)[:, None]
        x2 = y + rng.normal(size=(n, 2)) * np.sqrt(u)[:, None]
        xp1 = yp + rng.normal(size=(n, 2)) * np.sqrt(upp)[:, None]
        xp2 = yp + rng.normal(size=(n, 2)) * np.sqrt(upp)[:, None]
        vals = (
            g(x1[:, 0], x1[:, 1])
            * g(x2[:, 0], x2[:, 1])
            * gp(xp1[:, 0], xp1[:, 1])
            * gp(xp2[:, 0], xp2[:, 1])
        )
        return vals / q_y

    four_pi = 4.0 * math.pi
    n_half = n_samples // 2

    # substituted region (0, a]
    rho = rng.random(n_half) * rho_a
    with np.errstate(divide="ignore"):
        up = np.exp(-1.0 / rho)
    u = rng.random(n_half) * (t - up)
    w_rho = four_pi * rho_a * (t - up) * ju_over_rho2(up, rho)
    vals_rho = w_rho * spatial_values(u, up, n_half)

    # bulk region [a, t]
    up = a + rng.random(n_half) * (t - a)
    u = rng.random(n_half) * (t - up)
    w_bulk = four_pi * (t - a) * j_interp(up) * (t - up)
    vals_bulk = w_bulk * spatial_values(u, up, n_half)

    est = float(vals_rho.mean() + vals_bulk.mean())
    se = math.hypot(
        float(vals_rho.std(ddof=1)) / math.sqrt(n_half),
        float(vals_bulk.std(ddof=1)) / math.sqrt(n_half),
    )
    return est, se


def chain1_closed_form(tau, pair, gamma, v):
    """Hand-reduced order-1 chain: <g x g, p(tau)^x2 Phi_eps p(1-tau)^x2 g' x g'>.

    Derived directly: the heat images are Gaussians, their product is a
    Gaussian of harmonic-mean width, and pairing the product against the
    difference kernel gives the v/(v + 2s) factor.
    """
    g, gp = pair.g, pair.gp
    sa = g.width**2 + tau
    sb = gp.width**2 + (1.0 - tau)
    amp_a = g.amplitude * g.width**2 / sa
    amp_b = gp.amplitude * gp.width**2 / sb
    d2 = (g.center[0] - gp.center[0]) ** 2 + (g.center[1] - gp.center[1]) ** 2
    s = 1.0 / (1.0 / sa + 1.0 / sb)
    amp = amp_a * amp_b * math.exp(-d2 / (2.0 * (sa + sb)))
    mass = amp * 2.0 * math.pi * s
    return mass**2 * gamma * v / (v + 2.0 * s)


def order1_integral_quad(pair, gamma, v):
    """Independent 1d quadrature of the order-1 chain over the interaction time."""
    val, err = quad(
        lambda tau: chain1_closed_form(tau, pair, gamma, v), 0.0, 1.0, epsabs=1e-14, epsrel=1e-11
    )
    return val, err


def order2_integral_quad(pair, gamma, v, chain_fn):
    """Nested adaptive quadrature of the order-2 simplex integral.

    The inner integrand spikes like 1/(t2 - t1 + v); substituting
    t2 = t1 + v (e^y - 1) regularizes it.
    """

    def inner(t1):
        ymax = math.log((1.0 - t1 + v) / v)
        val, _ = quad(
            lambda y: float(chain_fn(np.array([[t1, t1 + v * math.expm1(y)]]))[0])
            * v
            * math.exp(y),
            0.0,
            ymax,
            epsabs=1e-13,
            epsrel=1e-9,
            limit=200,
        )
        return val

    return quad(inner, 0.0, 1.0, epsabs=1e-12, epsrel=1e-8, limit=200)


def c_phi_mc(mollifier, n_samples=400_000, seed=1):
    """E log|Y1 + Y2 - Y3 - Y4| with Y_i drawn from the unit-scale mollifier.

    The sum of two independent draws has density Phi, so this is the
    log-pairing constant.  Bump draws use rejection sampling in the disk;
    gaussian draws are direct.
    """
    rng = np.random.default_rng(seed)
    w = mollifier.width
    if mollifier.shape == "gaussian":
        y = rng.normal(size=(4, n_samples, 2)) * w
    else:
        peak = mollifier.bump_norm * math.exp(-1.0)
        out = np.empty((0, 2))
        while len(out) < 4 * n_samples:
            pts = rng.uniform(-w, w, size=(4 * n_samples, 2))
            r2 = (pts**2).sum(axis=1) / w**2
            dens = np.zeros(len(pts))
            inside = r2 < 1.0
            dens[inside] = mollifier.bump_norm * np.exp(-1.0 / (1.0 - r2[inside]))
            keep = rng.uniform(0.0, peak, len(pts)) < dens
            out = np.vstack([out, pts[keep]])
        y = out[: 4 * n_samples].reshape(4, n_samples, 2)
    d = y[0] + y[1] - y[2] - y[3]
    logs = np.log(np.hypot(d[:, 0], d[:, 1]))
    return float(logs.mean()), float(logs.std(ddof=1) / math.sqrt(n_samples))


def walsh_coefficients_direct(flat_table, n):
    """O(4^n) direct Walsh coefficients; bit i of the index is coordinate i."""
    out = np.zeros(2**n)
    for s in range(2**n):
        total = 0.0
        for x in range(2**n):
            total += flat_table[x] * ((-1) ** bin(s & x).count("1"))
        out[s] = total / 2**n
    return out


def lattice_second_moment_exact(pair, mollifier, beta, lattice):
    """Exact lattice second moment of the smeared field by the two-point recursion.

    E[u_m(x) u_m(y)] closes under the splitting scheme: the heat half acts as
    the tensor-square multiplier, and averaging the geometric update gives
    the factor exp(beta dt Phi_h(x - y)) with the same discrete covariance
    the simulator uses.  No sampling anywhere.
    """
    n, h, dt = lattice.n, lattice.h, lattice.dt
    steps = lattice.steps_per_unit_time
    coords = -lattice.box_side / 2.0 + h * np.arange(n)
    xx, yy = np.meshgrid(coords, coords, indexing="ij")
    g = pair.g(xx, yy)
    gp = pair.gp(xx, yy)
    phi = mollifier.phi_on_lattice(n, lattice.box_side)
    phi_h = sfft.irfft2(sfft.rfft2(phi).real ** 2, s=(n, n)) * h**2
    idx = np.arange(n)
    pair_factor = np.exp(
        beta
        * dt
        * phi_h[
            (idx[:, None, None, None] - idx[None, None, :, None]) % n,
            (idx[None, :, None, None] - idx[None, None, None, :]) % n,
        ]
    )
    kx2 = (np.fft.fftfreq(n, d=h) * 2.0 * math.pi) ** 2
    ky2 = (np.fft.rfftfreq(n, d=h) * 2.0 * math.pi) ** 2
    heat4 = np.exp(
        -0.5
        * dt
        * (
            kx2[:, None, None, None]
            + kx2[None, :, None, None]
            + kx2[None, None, :, None]
            + ky2[None, None, None, :]
        )
    )
    q = np.multiply.outer(g, g)
    for _ in range(steps):
        q = sfft.irfftn(sfft.rfftn(q, axes=(0, 1, 2, 3)) * heat4, s=q.shape, axes=(0, 1, 2, 3))
        q *= pair_factor
    second = float(np.einsum("ijkl,ij,kl->", q, gp, gp)) * h**4
    heat2 = np.exp(-0.5 * dt * steps * (kx2[:, None] + ky2[None, :]))
    mean = float(np.sum(sfft.irfft2(sfft.rfft2(g) * heat2, s=(n, n)) * gp)) * h**2
    return second, mean


def regenerate_j_golden():  # pragma: no cover - regeneration helper
    """Recompute the frozen j golden values with mpmath (50-digit quadrature)."""
    import mpmath as mp

    mp.mp.dps = 30
    cases = [(0.0, 1.0), (0.0, 0.5), (0.0, 0.01), (1.0, 1.0), (-2.0, 0.3), (2.0, 2.0), (0.0, 1e-6)]
    out = {}
    for theta, t in cases:
        f = lambda u: mp.power(t, u - 1) * mp.e ** (theta * u) / mp.gamma(u)  # noqa: E731
        out[(theta, t)] = mp.quad(f, [0, 1, 5, 20, 60, 200])
    return out
