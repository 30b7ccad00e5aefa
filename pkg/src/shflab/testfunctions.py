"""Test functions paired against kernels and simulated fields.

Two families are supported: isotropic Gaussian bumps on the plane, which stay
Gaussian under heat flow so every pairing reduces to closed form, and gridded
compactly-supported samples on a periodic box, for which pairings are done by
FFT on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, UnsupportedInputError


@dataclass(frozen=True)
class GaussianBump:
    """amplitude * exp(-|x - center|^2 / (2 width^2)) on the plane."""

    center: tuple[float, float] = (0.0, 0.0)
    width: float = 1.0
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.width > 0:
            raise ConfigurationError(f"width must be positive, got {self.width}")

    def __call__(self, x, y):
        dx = np.asarray(x) - self.center[0]
        dy = np.asarray(y) - self.center[1]
        return self.amplitude * np.exp(-(dx * dx + dy * dy) / (2.0 * self.width**2))

    def mass(self) -> float:
        """Integral over the plane."""
        return self.amplitude * 2.0 * np.pi * self.width**2

    def heat(self, t: float) -> "GaussianBump":
        """Heat-flow image p(t) * g; Gaussians are closed under the flow."""
        if t < 0:
            raise ConfigurationError("heat time must be nonnegative")
        w2 = self.width**2
        return GaussianBump(
            center=self.center,
            width=float(np.sqrt(w2 + t)),
            amplitude=self.amplitude * w2 / (w2 + t),
        )

    def squared(self) -> "GaussianBump":
        """Pointwise square, again a Gaussian bump."""
        return GaussianBump(
            center=self.center,
            width=self.width / np.sqrt(2.0),
            amplitude=self.amplitude**2,
        )

    def pair(self, other: "GaussianBump") -> float:
        """L2 inner product with another bump, in closed form."""
        s = self.width**2 + other.width**2
        d2 = (self.center[0] - other.center[0]) ** 2 + (self.center[1] - other.center[1]) ** 2
        return (
            2.0
            * np.pi
            * self.amplitude
            * other.amplitude
            * (self.width**2 * other.width**2 / s)
            * np.exp(-d2 / (2.0 * s))
        )


class GriddedFunction:
    """Samples of a compactly supported function on a periodic square box.

    The box is [-L/2, L/2)^2 with n points per side; index (i, j) sits at
    coordinate (-L/2 + i h, -L/2 + j h) with h = L/n.
    """

    def __init__(self, values, box_side: float):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ConfigurationError("gridded function must be a square array")
        self.values = values
        self.box_side = float(box_side)
        self.n = values.shape[0]
        self.h = self.box_side / self.n

    @classmethod
    def from_callable(cls, f, box_side: float, n: int) -> "GriddedFunction":
        x = -box_side / 2.0 + box_side * np.arange(n) / n
        xx, yy = np.meshgrid(x, x, indexing="ij")
        return cls(f(xx, yy), box_side)

    def support_margin(self) -> float:
        """Largest |value| on the outermost grid ring, relative to the peak."""
        v = np.abs(self.values)
        peak = v.max()
        if peak == 0.0:
            return 0.0
        ring = max(v[0, :].max(), v[-1, :].max(), v[:, 0].max(), v[:, -1].max())
        return float(ring / peak)

    def heat(self, t: float) -> "GriddedFunction":
        """Periodic spectral heat flow by the exact Fourier multiplier."""
        mult = heat_multiplier(self.n, self.box_side, t)
        out = sfft.irfft2(sfft.rfft2(self.values) * mult, s=self.values.shape)
        return GriddedFunction(out, self.box_side)

    def pair(self, other: "GriddedFunction") -> float:
        if other.n != self.n or other.box_side != self.box_side:
            raise ConfigurationError("grid mismatch in pairing")
        return float(np.sum(self.values * other.values) * self.h**2)

    def mass(self) -> float:
        return float(np.sum(self.values) * self.h**2)


def heat_multiplier(n: int, box_side: float, t: float, dtype=np.float64):
    """exp(-|k|^2 t / 2) on the rfft2 frequency layout of an n x n periodic box."""
    kx = 2.0 * np.pi * sfft.fftfreq(n, d=box_side / n)
    ky = 2.0 * np.pi * sfft.rfftfreq(n, d=box_side / n)
    k2 = kx[:, None] ** 2 + ky[None, :] ** 2
    return np.exp(-0.5 * k2 * t).astype(dtype)


@dataclass(frozen=True)
class TestFunctionPair:
    """The (g, g') pair smeared against two-particle kernels and fields."""

    __test__ = False  # not a pytest class despite the name

    g: GaussianBump | GriddedFunction
    gp: GaussianBump | GriddedFunction

    @property
    def is_gaussian(self) -> bool:
        return isinstance(self.g, GaussianBump) and isinstance(self.gp, GaussianBump)

    @property
    def is_gridded(self) -> bool:
        return isinstance(self.g, GriddedFunction) and isinstance(self.gp, GriddedFunction)

    def require_gaussian(self, what: str):
        if not self.is_gaussian:
            raise UnsupportedInputError(f"{what} requires a Gaussian test-function pair")

    def heat_pairing(self, t: float) -> float:
        """<g, p(t) g'> for the pair."""
        if self.is_gaussian:
            return self.g.heat(t).pair(self.gp)
        if self.is_gridded:
            return self.g.heat(t).pair(self.gp)
        raise UnsupportedInputError("mixed Gaussian/grid pair")


def default_pair() -> TestFunctionPair:
    """Offset unit-amplitude bumps used as the standing example pair."""
    return TestFunctionPair(
        g=GaussianBump(center=(0.0, 0.0), width=0.5, amplitude=1.0),
        gp=GaussianBump(center=(0.25, 0.0), width=0.5, amplitude=1.0),
    )
