"""Mollifier data, the self-convolution Phi, and the critical coupling.

The unit-scale mollifier phi is symmetric with unit integral; the scaled
version is phi_eps(x) = phi(x/eps)/eps^2.  Everything the rest of the code
needs is derived from Phi = phi * phi (self-convolution): its value at zero,
and the log-pairing constant

    c_Phi = int int Phi(x) log|x - x'| Phi(x') dx dx'.

The gaussian shape admits closed forms (and is the shape for which the chaos
recursion is exact); the compact bump is the smooth compactly supported
choice, handled by radial quadrature and FFT self-convolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.integrate import quad

from .errors import AccuracyError, ConfigurationError, DomainError, UnsupportedInputError

EULER_GAMMA = float(np.euler_gamma)

GAUSSIAN = "gaussian"
COMPACT_BUMP = "compact-bump"


@dataclass(frozen=True)
class MollifierSpec:
    """A mollifier choice at scale eps, with the derived constants.

    ``width`` is the unit-scale shape parameter: the standard deviation for
    the gaussian shape, the support radius for the compact bump.  ``Phi0``
    is Phi(0) at unit scale, so Phi_eps(0) = Phi0 / eps^2.
    """

    shape: str
    epsilon: float
    width: float
    Phi0: float
    c_Phi: float
    bump_norm: float = 0.0  # normalization constant of the bump profile
    phi_conv_profile: tuple = field(default=None, repr=False)  # (r_grid, Phi values), bump only

    @property
    def Phi_at_zero_eps(self) -> float:
        return self.Phi0 / self.epsilon**2

    def gaussian_kernel_params(self) -> tuple[float, float]:
        """(gamma, v) with Phi_eps(z) = gamma * exp(-|z|^2 / (2 v))."""
        if self.shape != GAUSSIAN:
            raise UnsupportedInputError("closed-form kernel parameters exist only for the gaussian shape")
        v = 2.0 * (self.width * self.epsilon) ** 2
        return self.Phi_at_zero_eps, v

    def phi_values(self, x, y):
        """phi_eps evaluated at points of the plane (vectorized)."""
        r2 = (np.asarray(x) ** 2 + np.asarray(y) ** 2) / self.epsilon**2
        w = self.width
        if self.shape == GAUSSIAN:
            return np.exp(-r2 / (2.0 * w * w)) / (2.0 * math.pi * w * w * self.epsilon**2)
        z = np.asarray(r2, dtype=np.float64) / (w * w)
        out = np.zeros_like(z)
        inside = z < 1.0
        out[inside] = self.bump_norm * np.exp(-1.0 / (1.0 - z[inside]))
        return out / self.epsilon**2

    def phi_on_lattice(self, n: int, box_side: float):
        """phi_eps sampled at min-image coordinates of the periodic grid."""
        h = box_side / n
        coords = h * np.arange(n)
        coords = np.where(coords > box_side / 2.0, coords - box_side, coords)
        xx, yy = np.meshgrid(coords, coords, indexing="ij")
        return self.phi_values(xx, yy)

    def phi_conv(self, r):
        """Phi = phi * phi at unit scale, as a function of radius."""
        if self.shape == GAUSSIAN:
            s2 = 2.0 * self.width**2
            return np.exp(-np.asarray(r) ** 2 / (2.0 * s2)) / (2.0 * math.pi * s2)
        r_grid, values = self.phi_conv_profile
        return np.interp(np.asarray(r), r_grid, values, right=0.0)


def _bump_radial(width: float):
    def profile(rho):
        z = np.asarray(rho, dtype=np.float64) ** 2 / width**2
        out = np.zeros_like(z)
        inside = z < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - z[inside]))
        return out if out.ndim else float(out)

    return profile


def _log_cell_integral() -> float:
    """int over the unit square [-1/2,1/2]^2 of log|w| dw, by polar quadrature."""

    def radial(phi):
        rmax = 0.5 / math.cos(phi)
        # int_0^R r log r dr = R^2/2 (log R - 1/2)
        return rmax**2 / 2.0 * (math.log(rmax) - 0.5)

    val, _ = quad(radial, 0.0, math.pi / 4.0, epsabs=1e-12, epsrel=1e-12)
    return 8.0 * val


def _bump_c_phi(width: float, norm: float, grid_n: int = 512):
    """c_Phi and a radial Phi profile for the bump, via FFT self-convolutions."""
    # phi*phi*phi*phi has support radius 4*width; leave margin
    box = 8.5 * width
    h = box / grid_n
    coords = h * np.arange(grid_n)
    coords = np.where(coords > box / 2.0, coords - box, coords)
    xx, yy = np.meshgrid(coords, coords, indexing="ij")
    rr = np.hypot(xx, yy)
    phi = np.zeros_like(rr)
    inside = rr < width
    phi[inside] = norm * np.exp(-1.0 / (1.0 - (rr[inside] / width) ** 2))

    f = sfft.rfft2(phi)
    phi2 = sfft.irfft2(f * f, s=phi.shape) * h**2  # Phi = phi * phi
    phi4 = sfft.irfft2(f**4, s=phi.shape) * h**6  # density of X - X', X, X' ~ Phi

    log_r = np.empty_like(rr)
    nonzero = rr > 0
    log_r[nonzero] = np.log(rr[nonzero])
    log_r[~nonzero] = math.log(h) + _log_cell_integral()  # cell-averaged log at the origin
    c_phi = float(np.sum(phi4 * log_r) * h**2)

    # radial profile of Phi for grid-path consumers
    r_flat = rr.ravel()
    order = np.argsort(r_flat)
    r_sorted = r_flat[order]
    v_sorted = phi2.ravel()[order]
    keep = r_sorted <= 2.05 * width
    return c_phi, (r_sorted[keep], np.maximum(v_sorted[keep], 0.0))


def build_mollifier(shape: str, epsilon: float, width: float = 0.5) -> MollifierSpec:
    """Construct a mollifier at scale eps and compute its derived constants."""
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    if not width > 0:
        raise DomainError("width must be positive")

    if shape == GAUSSIAN:
        # Phi is the gaussian of doubled variance; c_Phi = E log|N(0, 4 w^2 I_2)|
        phi0 = 1.0 / (4.0 * math.pi * width**2)
        c_phi = math.log(2.0 * width) + (math.log(2.0) - EULER_GAMMA) / 2.0
        return MollifierSpec(shape=shape, epsilon=epsilon, width=width, Phi0=phi0, c_Phi=c_phi)

    if shape == COMPACT_BUMP:
        profile = _bump_radial(width)
        mass, err = quad(lambda r: r * profile(r), 0.0, width, epsabs=1e-13, epsrel=1e-12)
        mass *= 2.0 * math.pi
        if err > 1e-9 * mass:
            raise AccuracyError("bump normalization quadrature failed", achieved=err)
        norm = 1.0 / mass
        phi0, _ = quad(lambda r: r * (norm * profile(r)) ** 2, 0.0, width, epsabs=1e-13, epsrel=1e-12)
        phi0 *= 2.0 * math.pi
        c_phi, conv_profile = _bump_c_phi(width, norm)
        return MollifierSpec(
            shape=shape,
            epsilon=epsilon,
            width=width,
            Phi0=phi0,
            c_Phi=c_phi,
            bump_norm=norm,
            phi_conv_profile=conv_profile,
        )

    raise UnsupportedInputError(f"unknown mollifier shape {shape!r}")


def beta_eps(theta: float, epsilon: float, c_phi: float) -> float:
    """Critical coupling: 2 pi/|log eps| plus the second-order correction.

    The correction carries theta, the Euler-Mascheroni constant and the
    mollifier log-pairing constant; beta -> 0 as eps -> 0.
    """
    if not 0 < epsilon < 1:
        raise DomainError(f"beta_eps needs 0 < eps < 1, got {epsilon}")
    big_l = -math.log(epsilon)
    second = theta - 2.0 * math.log(2.0) + 2.0 * EULER_GAMMA + 2.0 * c_phi
    return 2.0 * math.pi / big_l + math.pi * second / big_l**2


def beta_eps_resampled(theta: float, epsilon: float, c_phi: float, sigma: float) -> float:
    """beta_eps damped by exp(-sigma / (2 |log eps|)), the resampled coupling."""
    big_l = -math.log(epsilon)
    return beta_eps(theta, epsilon, c_phi) * math.exp(-sigma / (2.0 * big_l))


@dataclass(frozen=True)
class Coupling:
    """The (theta, eps, beta) triple actually used by a run."""

    theta: float
    epsilon: float
    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigurationError("beta must be positive")

    @classmethod
    def critical(cls, theta: float, mollifier: MollifierSpec) -> "Coupling":
        return cls(theta, mollifier.epsilon, beta_eps(theta, mollifier.epsilon, mollifier.c_Phi))
