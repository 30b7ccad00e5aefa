"""Exact projector and resampling identities on finite discrete product noises.

The continuum noise is not computable, so the projection machinery is
validated on product spaces Omega = A^n with independent coordinates, where
every conditional expectation is a finite weighted average.  The partition
projection of an observable X,

    P X = sum over blocks B of ( E[X | coordinates in B] - E[X] ),

is evaluated exactly by tensor contraction.  On sign coordinates the
Fourier-Walsh transform gives the full spectrum, the degree masses play the
role of the squared chaos coefficients, and the resampling correlation of
rho-correlated bits is the spectrum-weighted power series in rho.

This module is a test rig for the projector identities, not a model of any
continuum object: n is capped where exact enumeration stops being exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

from .errors import (
    ConfigurationError,
    DomainError,
    EnumerationBoundError,
    UndefinedCorrelationError,
    UnsupportedInputError,
)

SIGN = "sign"
GAUSSIAN_3PT = "gaussian-3pt"

# exact-enumeration caps: 2^24 and 3^15 table entries
_MAX_N = {SIGN: 24, GAUSSIAN_3PT: 15}

# sign: +1/-1 equally likely (index 0 -> +1); gaussian-3pt: the three-point
# quantization matching the first four Gaussian moments
_VALUES = {SIGN: np.array([1.0, -1.0]), GAUSSIAN_3PT: np.array([-math.sqrt(3.0), 0.0, math.sqrt(3.0)])}
_PROBS = {SIGN: np.array([0.5, 0.5]), GAUSSIAN_3PT: np.array([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0])}


@dataclass(frozen=True)
class DiscreteNoise:
    """n independent coordinates with a small finite alphabet."""

    n: int
    alphabet: str = SIGN

    def __post_init__(self):
        if self.alphabet not in _VALUES:
            raise UnsupportedInputError(f"unknown alphabet {self.alphabet!r}")
        if self.n < 1:
            raise DomainError("need n >= 1 coordinates")
        if self.n > _MAX_N[self.alphabet]:
            raise EnumerationBoundError(
                f"n = {self.n} exceeds the exact-enumeration bound {_MAX_N[self.alphabet]} "
                f"for alphabet {self.alphabet!r}"
            )

    @property
    def arity(self) -> int:
        return len(_VALUES[self.alphabet])

    @property
    def values(self) -> np.ndarray:
        return _VALUES[self.alphabet]

    @property
    def probs(self) -> np.ndarray:
        return _PROBS[self.alphabet]


class ToyObservable:
    """A function of the n coordinates, stored as a full value table.

    The table is indexed as a tensor of shape (arity,) * n: axis i is
    coordinate i, entry index j means coordinate value noise.values[j].
    """

    def __init__(self, table: np.ndarray, noise: DiscreteNoise):
        table = np.asarray(table, dtype=np.float64)
        expected = (noise.arity,) * noise.n
        if table.shape == (noise.arity**noise.n,):
            table = table.reshape(expected)
        if table.shape != expected:
            raise ConfigurationError(f"table shape {table.shape} does not match {expected}")
        self.table = table
        self.noise = noise

    @classmethod
    def from_function(cls, f, noise: DiscreteNoise) -> "ToyObservable":
        """Tabulate f(x_1, ..., x_n) over all outcomes."""
        grids = np.meshgrid(*[noise.values] * noise.n, indexing="ij")
        return cls(f(*grids), noise)

    @classmethod
    def random(cls, noise: DiscreteNoise, seed: int = 0) -> "ToyObservable":
        gen = Generator(Philox(key=[seed, 0x70F]))
        return cls(gen.standard_normal((noise.arity,) * noise.n), noise)

    def _weights(self, axes) -> np.ndarray:
        w = np.ones(())
        for _ in axes:
            w = np.multiply.outer(w, self.noise.probs)
        return w

    def expectation(self) -> float:
        full = self._weights(range(self.noise.n))
        return float(np.sum(self.table * full))

    def variance(self) -> float:
        full = self._weights(range(self.noise.n))
        mu = float(np.sum(self.table * full))
        return float(np.sum((self.table - mu) ** 2 * full))

    def sign_flat(self) -> np.ndarray:
        """Flat table with bit i of the index addressing coordinate i (sign noise)."""
        return _sign_flat_table(self)

    def conditional_on(self, block) -> np.ndarray:
        """E[X | coordinates in block], as an array over the block coordinates."""
        others = tuple(ax for ax in range(self.noise.n) if ax not in set(block))
        moved = np.moveaxis(self.table, others, range(len(others)))
        w = self._weights(others)
        cond = np.tensordot(w, moved, axes=len(others))
        # tensordot leaves the remaining axes in increasing original order;
        # reorder to the block's listed order
        kept = [ax for ax in range(self.noise.n) if ax in set(block)]
        perm = [kept.index(ax) for ax in block]
        return np.transpose(cond, perm) if len(block) > 1 else cond


@dataclass(frozen=True)
class CellPartition:
    """Ordered disjoint blocks of coordinate indices covering 0..n-1."""

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(tuple(b) for b in self.blocks))

    def validate(self, n: int):
        seen = []
        for b in self.blocks:
            if len(b) == 0:
                raise ConfigurationError("empty partition block")
            seen.extend(b)
        if sorted(seen) != list(range(n)):
            raise ConfigurationError("blocks must disjointly cover all coordinates")

    @classmethod
    def singletons(cls, n: int) -> "CellPartition":
        return cls(tuple((i,) for i in range(n)))

    def refines(self, coarser: "CellPartition") -> bool:
        coarse_sets = [set(b) for b in coarser.blocks]
        return all(any(set(b) <= c for c in coarse_sets) for b in self.blocks)


def project_blocks(X: ToyObservable, partition: CellPartition, noise: DiscreteNoise) -> ToyObservable:
    """Sum over blocks of the centered conditional expectations, exactly.

    At the singleton partition over sign noise this is the degree-1
    Fourier-Walsh projection; it is idempotent there.
    """
    if X.noise != noise:
        raise ConfigurationError("observable was tabulated for a different noise")
    partition.validate(noise.n)
    mu = X.expectation()
    out = np.zeros_like(X.table)
    for block in partition.blocks:
        cond = X.conditional_on(block)
        shape = [noise.arity if ax in set(block) else 1 for ax in range(noise.n)]
        # axes of cond follow the block's listed order; realign to axis order
        aligned = np.transpose(cond, np.argsort(block)) if len(block) > 1 else cond
        out += aligned.reshape(shape) - mu
    return ToyObservable(out, noise)


def projection_norm_sq(X: ToyObservable, partition: CellPartition, noise: DiscreteNoise) -> float:
    """||P X||^2 = sum over blocks of Var(E[X | block]).

    The centered conditional expectations of disjoint blocks are orthogonal
    because the coordinates are independent.
    """
    if X.noise != noise:
        raise ConfigurationError("observable was tabulated for a different noise")
    partition.validate(noise.n)
    mu = X.expectation()
    total = 0.0
    for block in partition.blocks:
        cond = X.conditional_on(block)
        w = X._weights(block)
        total += float(np.sum((cond - mu) ** 2 * w))
    return total


@dataclass(frozen=True)
class WalshSpectrum:
    """Exact Fourier-Walsh coefficients, indexed by the subset bitmask."""

    n: int
    coeffs: np.ndarray

    def coefficient(self, subset) -> float:
        mask = 0
        for i in subset:
            mask |= 1 << i
        return float(self.coeffs[mask])

    def degree_mass(self) -> np.ndarray:
        """W_d = sum over |S| = d of the squared coefficients, d = 0..n."""
        degrees = np.bitwise_count(np.arange(self.coeffs.size, dtype=np.uint32))
        return np.bincount(degrees, weights=self.coeffs**2, minlength=self.n + 1)

    def degree_part(self, degree: int) -> np.ndarray:
        """Value table (flat, sign indexing) of the degree-d component."""
        degrees = np.bitwise_count(np.arange(self.coeffs.size, dtype=np.uint32))
        kept = np.where(degrees == degree, self.coeffs, 0.0)
        return _fwht(kept)  # chi is self-inverse up to the 2^-n already applied


def _fwht(a: np.ndarray) -> np.ndarray:
    """Fast Walsh-Hadamard transform (sum over x of a(x) chi_S(x))."""
    a = a.astype(np.float64).copy()
    h = 1
    n = a.size
    while h < n:
        a = a.reshape(-1, 2 * h)
        left = a[:, :h].copy()
        a[:, :h] = left + a[:, h:]
        a[:, h:] = left - a[:, h:]
        a = a.reshape(n)
        h *= 2
    return a


def _sign_flat_table(X: ToyObservable) -> np.ndarray:
    # bit b of the flat index is coordinate b; table axis 0 is coordinate 0,
    # so flatten with axis 0 slowest <-> bit (n-1)... keep explicit: build
    # flat index where bit i corresponds to axis i value index
    n = X.noise.n
    flat = X.table
    # axis i index j in {0,1} -> bit i = j; np flattening makes axis n-1 fastest,
    # so transpose to put axis 0 fastest
    return np.transpose(flat, axes=tuple(range(n - 1, -1, -1))).reshape(-1)


def walsh_spectrum(X: ToyObservable, noise: DiscreteNoise) -> WalshSpectrum:
    """Exact Walsh coefficients of a sign-noise observable by fast transform."""
    if noise.alphabet != SIGN:
        raise UnsupportedInputError("the Walsh transform needs the sign alphabet")
    if X.noise != noise:
        raise ConfigurationError("observable was tabulated for a different noise")
    flat = _sign_flat_table(X)
    # chi_S(x) = prod_{i in S} x_i with x_i = +1 for bit 0; the standard FWHT
    # computes sum_x a(x) (-1)^(S.x) where bit value 1 indexes x_i = -1
    return WalshSpectrum(n=noise.n, coeffs=_fwht(flat) / flat.size)


def spectrum_to_observable(spec: WalshSpectrum, noise: DiscreteNoise) -> ToyObservable:
    """Inverse transform back to a value table (round-trip identity)."""
    flat = _fwht(spec.coeffs)
    n = noise.n
    table = flat.reshape((2,) * n)
    table = np.transpose(table, axes=tuple(range(n - 1, -1, -1)))
    return ToyObservable(table, noise)


@dataclass(frozen=True)
class ResampleCorrelation:
    exact: float
    mc_estimate: float | None = None
    mc_se: float | None = None


def resample_correlation_discrete(
    X: ToyObservable,
    rho: float,
    noise: DiscreteNoise,
    mc_samples: int = 0,
    seed: int = 0,
) -> ResampleCorrelation:
    """Correlation of X under independent rho-correlated resampling of the bits.

    Exact value: sum_d rho^d W_d over d >= 1, normalized by the variance.
    Optionally cross-checked by Monte Carlo resampling (each bit kept with
    probability (1 + rho)/2, flipped otherwise).
    """
    if not 0.0 <= rho <= 1.0:
        raise DomainError("rho must lie in [0, 1]")
    w = walsh_spectrum(X, noise).degree_mass()
    var = float(np.sum(w[1:]))
    if var <= 0.0:
        raise UndefinedCorrelationError("constant observable has no resampling correlation")
    exact = float(np.sum(rho ** np.arange(1, noise.n + 1) * w[1:])) / var
    if mc_samples <= 0:
        return ResampleCorrelation(exact=exact)

    gen = Generator(Philox(key=[seed, 0x0C0]))
    n = noise.n
    flat = _sign_flat_table(X)
    x_idx = gen.integers(0, 2, size=(mc_samples, n), dtype=np.uint32)
    flip = gen.random((mc_samples, n)) > (1.0 + rho) / 2.0
    y_idx = np.where(flip, 1 - x_idx, x_idx)
    powers = (1 << np.arange(n, dtype=np.uint32)).astype(np.uint32)
    fx = flat[(x_idx * powers).sum(axis=1)]
    fy = flat[(y_idx * powers).sum(axis=1)]
    fx = fx - fx.mean()
    fy = fy - fy.mean()
    num = float(fx @ fy) / mc_samples
    est = num / var
    se = float(np.std(fx * fy, ddof=1)) / math.sqrt(mc_samples) / var
    return ResampleCorrelation(exact=exact, mc_estimate=est, mc_se=se)


def iterate_projection_refinement(
    X: ToyObservable, partitions, noise: DiscreteNoise
) -> np.ndarray:
    """||P X||^2 along a nested partition ladder.

    Requires each partition to refine the previous one; over sign noise with
    singleton finest blocks the sequence lands on the degree-1 Walsh mass.
    """
    partitions = list(partitions)
    for p in partitions:
        p.validate(noise.n)
    for coarse, fine in zip(partitions, partitions[1:]):
        if not fine.refines(coarse):
            raise ConfigurationError("partition ladder is not nested")
    return np.array([projection_norm_sq(X, p, noise) for p in partitions])
