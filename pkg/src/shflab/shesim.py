"""Lattice simulation of the mollified stochastic heat equation on [0, 1].

The field lives on a periodic square grid and is advanced by Lie splitting:
an exact heat half via the Fourier multiplier exp(-|k|^2 dt / 2), then the
pointwise Ito-exponential update

    u <- u * exp( sqrt(beta) dW_eps - beta v_h dt / 2 ),

where dW_eps is the white-noise increment of the step convolved with the
mollifier (per-site variance v_h dt, v_h = h^2 sum phi_eps^2, the discrete
stand-in for Phi_eps(0)).  The geometric update preserves positivity exactly
and makes every step mean-one, so the lattice mean field is exactly the
spectral heat flow of the initial data.

Noise is counter-addressed: the base Gaussian array of (replica, step) is
regenerated bit-identically from the seed alone, which makes exactly coupled
resampling and worker-count-independent reproducibility possible.  A run
evolves a whole ensemble of coupled variants at once: members may differ in
coupling and mollifier (common-noise epsilon ladders) or carry a resampling
mix e^(-tau) xi + sqrt(1 - e^(-2 tau)) xi' against the second bank.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from numpy.random import Generator, Philox

from .errors import (
    ConfigurationError,
    DomainError,
    NumericalOverflowError,
    UndefinedCorrelationError,
)
from .mollifier import Coupling, MollifierSpec, beta_eps, beta_eps_resampled, build_mollifier
from .testfunctions import TestFunctionPair, heat_multiplier

__all__ = [
    "Lattice",
    "NoiseBank",
    "FieldState",
    "StepKernel",
    "EnsembleMember",
    "Coupling",
    "MollifierSpec",
    "beta_eps",
    "beta_eps_resampled",
    "build_mollifier",
    "make_lattice",
    "evolve_step",
    "run_observable",
    "run_coupled_pair",
    "run_ensemble",
    "estimate_correlation",
    "sample_variance",
]

REPLICA_CHUNK = 16  # fixed batching unit; independent of worker count


@dataclass(frozen=True)
class Lattice:
    """Periodic square grid: box side L, n points per side (power of two), step dt."""

    box_side: float
    n: int
    dt: float

    def __post_init__(self):
        if self.n < 1 or (self.n & (self.n - 1)) != 0:
            raise ConfigurationError(f"n must be a power of two, got {self.n}")
        if not (self.box_side > 0 and self.dt > 0):
            raise ConfigurationError("box side and dt must be positive")

    @property
    def h(self) -> float:
        return self.box_side / self.n

    @property
    def steps_per_unit_time(self) -> int:
        steps = round(1.0 / self.dt)
        if abs(steps * self.dt - 1.0) > 1e-9:
            raise ConfigurationError("dt must divide the unit time interval")
        return steps


def make_lattice(
    epsilon: float,
    box_side: float = 8.0,
    h_factor: float = 0.5,
    dt_factor: float = 0.125,
    max_n: int = 4096,
) -> Lattice:
    """Lattice satisfying the resolution policy h <= h_factor*eps, dt <= dt_factor*eps^2."""
    n = 1
    while box_side / n > h_factor * epsilon:
        n *= 2
        if n > max_n:
            raise ConfigurationError(f"resolution policy needs n > {max_n}")
    steps = max(1, math.ceil(1.0 / (dt_factor * epsilon**2)))
    return Lattice(box_side=box_side, n=n, dt=1.0 / steps)


def check_resolution(lattice: Lattice, mollifier: MollifierSpec, h_factor=0.5, dt_factor=0.125):
    eps = mollifier.epsilon
    if lattice.h > h_factor * eps * (1 + 1e-12):
        raise ConfigurationError(
            f"grid spacing {lattice.h:.4g} exceeds {h_factor} * eps = {h_factor * eps:.4g}"
        )
    if lattice.dt > dt_factor * eps**2 * (1 + 1e-12):
        raise ConfigurationError(
            f"dt = {lattice.dt:.4g} exceeds {dt_factor} * eps^2 = {dt_factor * eps**2:.4g}"
        )


@dataclass(frozen=True)
class NoiseBank:
    """Seeded, counter-addressed Gaussian base arrays.

    The array of (replica, step) is generated from a Philox stream keyed by
    (seed, stream) with the counter set to (0, 0, step, replica): regenerating
    it is bit-identical and independent of any other draw.  The primary bank
    and the independent resampling bank use different stream ids.
    """

    seed: int
    stream: int = 0

    def normals(self, replica: int, step: int, shape, dtype=np.float64):
        gen = Generator(Philox(counter=[0, 0, step, replica], key=[self.seed, self.stream]))
        return gen.standard_normal(shape, dtype=dtype)


@dataclass(frozen=True)
class FieldState:
    """Field values on the lattice at a given time; nonnegative and finite."""

    values: np.ndarray
    time: float

    def mass(self, lattice: Lattice) -> float:
        return float(np.sum(self.values, dtype=np.float64)) * lattice.h**2


class StepKernel:
    """Precomputed multipliers for one splitting step at fixed (lattice, mollifier, beta)."""

    def __init__(self, lattice: Lattice, mollifier: MollifierSpec, beta: float, dtype=np.float64):
        if beta < 0:
            raise ConfigurationError("beta must be nonnegative")
        self.lattice = lattice
        self.beta = beta
        self.dtype = np.dtype(dtype)
        cdtype = np.complex64 if self.dtype == np.float32 else np.complex128
        n, h, dt = lattice.n, lattice.h, lattice.dt
        self.heat_mult = heat_multiplier(n, lattice.box_side, dt).astype(cdtype)
        phi = mollifier.phi_on_lattice(n, lattice.box_side)
        self.phi_hat = sfft.rfft2(phi).real.astype(cdtype)  # phi symmetric -> real spectrum
        self.site_variance_rate = float(np.sum(phi**2) * h**2)  # discrete Phi_eps(0)
        self.noise_scale = self.dtype.type(math.sqrt(beta) * h * math.sqrt(dt))
        self.drift = self.dtype.type(0.5 * beta * self.site_variance_rate * dt)

    def delta_w(self, eta):
        """Mollified white-noise increment (unit sqrt(dt) h scaling folded into noise_scale)."""
        shape = eta.shape[-2:]
        return sfft.irfft2(sfft.rfft2(eta) * self.phi_hat, s=shape)

    def apply(self, values, eta):
        """One full splitting step on a field (or batch of fields)."""
        shape = values.shape[-2:]
        heated = sfft.irfft2(sfft.rfft2(values) * self.heat_mult, s=shape)
        if self.beta == 0.0:
            return heated
        return heated * np.exp(self.noise_scale * self.delta_w(eta) - self.drift)


def evolve_step(state: FieldState, eta: np.ndarray, kernel: StepKernel) -> FieldState:
    """Advance a field state by one step; raises on non-finite values."""
    out = kernel.apply(state.values, eta)
    if not np.isfinite(out.sum(dtype=np.float64)):
        step = round(state.time / kernel.lattice.dt)
        raise NumericalOverflowError(f"field non-finite after step {step}", step=step)
    return FieldState(values=out, time=state.time + kernel.lattice.dt)


@dataclass(frozen=True)
class EnsembleMember:
    """One coupled variant of a run: its physics, and optionally a resampling mix.

    ``tau`` = None or 0 means the member is driven by the primary bank alone;
    otherwise it sees e^(-tau) xi + sqrt(1 - e^(-2 tau)) xi'.
    """

    coupling: Coupling
    mollifier: MollifierSpec
    tau: float | None = None

    def mix(self) -> tuple[float, float]:
        if self.tau is None or self.tau == 0.0:
            return 1.0, 0.0
        if self.tau < 0:
            raise DomainError("tau must be nonnegative")
        a = math.exp(-self.tau)
        return a, math.sqrt(max(0.0, 1.0 - a * a))


def _validate_run(pair: TestFunctionPair, lattice: Lattice, members, enforce_resolution: bool):
    pair.require_gaussian("lattice simulation")
    g, gp = pair.g, pair.gp
    min_box = 8.0 * max(g.width, gp.width, 1.0)
    if lattice.box_side < min_box:
        raise ConfigurationError(
            f"box side {lattice.box_side} too small; need >= {min_box} for these test functions"
        )
    # nearest periodic image contribution to <g, p(1) g'>, relative to the main term
    d = math.hypot(g.center[0] - gp.center[0], g.center[1] - gp.center[1])
    spread = g.width**2 + gp.width**2 + 1.0
    leakage = 4.0 * math.exp(-((lattice.box_side - d) ** 2 - d**2) / (2.0 * spread))
    if leakage > 1e-8:
        raise ConfigurationError(f"periodization error bound {leakage:.2e} exceeds 1e-8")
    if enforce_resolution:
        for m in members:
            check_resolution(lattice, m.mollifier)


def _chunk_slices(n_replicas: int):
    return [range(lo, min(lo + REPLICA_CHUNK, n_replicas)) for lo in range(0, n_replicas, REPLICA_CHUNK)]


def _evolve_chunk(
    pair: TestFunctionPair,
    members: tuple[EnsembleMember, ...],
    lattice: Lattice,
    bank: NoiseBank,
    bank_prime: NoiseBank | None,
    replicas,
    dtype,
) -> np.ndarray:
    """Evolve a chunk of replicas for all members; returns (len(replicas), V) pairings."""
    dtype = np.dtype(dtype)
    n = lattice.n
    steps = lattice.steps_per_unit_time
    nb = len(replicas)
    nv = len(members)

    kernels = [StepKernel(lattice, m.mollifier, m.coupling.beta, dtype) for m in members]
    mixes = [m.mix() for m in members]
    need_prime = any(b != 0.0 for _, b in mixes)
    if need_prime and bank_prime is None:
        raise ConfigurationError("resampled members need the independent noise bank")

    coords = -lattice.box_side / 2.0 + lattice.h * np.arange(n)
    xx, yy = np.meshgrid(coords, coords, indexing="ij")
    g_grid = pair.g(xx, yy).astype(dtype)
    gp_grid = pair.gp(xx, yy).astype(np.float64)

    u = np.broadcast_to(g_grid, (nb, nv, n, n)).copy()
    heat_mult = kernels[0].heat_mult
    # per-member mollifier spectrum with the mix folded in
    mix_a = np.stack([a * k.phi_hat for (a, _), k in zip(mixes, kernels)])
    mix_b = np.stack([b * k.phi_hat for (_, b), k in zip(mixes, kernels)])
    scale = np.array([k.noise_scale for k in kernels], dtype=dtype)[:, None, None]
    drift = np.array([k.drift for k in kernels], dtype=dtype)[:, None, None]

    eta = np.empty((nb, n, n), dtype=dtype)
    for step in range(steps):
        for i, r in enumerate(replicas):
            eta[i] = bank.normals(r, step, (n, n), dtype)
        eta_hat = sfft.rfft2(eta)
        w_hat = eta_hat[:, None] * mix_a
        if need_prime:
            for i, r in enumerate(replicas):
                eta[i] = bank_prime.normals(r, step, (n, n), dtype)
            w_hat += sfft.rfft2(eta)[:, None] * mix_b
        dw = sfft.irfft2(w_hat, s=(n, n))
        u = sfft.irfft2(sfft.rfft2(u) * heat_mult, s=(n, n))
        u *= np.exp(scale * dw - drift)
        if not np.isfinite(u.sum(dtype=np.float64)):
            raise NumericalOverflowError(f"field non-finite after step {step}", step=step)

    smeared = np.sum(u * gp_grid, axis=(2, 3), dtype=np.float64) * lattice.h**2
    return smeared


def _ensemble_worker(payload):
    idx, pair, members, lattice, bank, bank_prime, replicas, dtype = payload
    return idx, _evolve_chunk(pair, members, lattice, bank, bank_prime, replicas, dtype)


def run_ensemble(
    pair: TestFunctionPair,
    members,
    lattice: Lattice,
    bank: NoiseBank,
    n_replicas: int,
    bank_prime: NoiseBank | None = None,
    dtype=np.float64,
    workers: int | None = None,
    enforce_resolution: bool = True,
    center: bool = True,
) -> np.ndarray:
    """Centered observables F for every (replica, member), shape (n_replicas, V).

    Replicas are processed in fixed chunks of 16 regardless of worker count,
    and noise is counter-addressed, so the result is bit-identical however the
    work is distributed.  The centering term <g, p(1) g'> is analytic.
    """
    members = tuple(members)
    if not members:
        raise ConfigurationError("need at least one ensemble member")
    _validate_run(pair, lattice, members, enforce_resolution)
    if workers is None:
        workers = int(os.environ.get("SHFLAB_WORKERS", "0")) or (os.cpu_count() or 1)

    chunks = _chunk_slices(n_replicas)
    out = np.empty((n_replicas, len(members)))
    payloads = [
        (ci, pair, members, lattice, bank, bank_prime, replicas, np.dtype(dtype).name)
        for ci, replicas in enumerate(chunks)
    ]
    if workers > 1 and len(chunks) > 1:
        import multiprocessing as mp

        with mp.Pool(processes=min(workers, len(chunks))) as pool:
            for ci, values in pool.imap_unordered(_ensemble_worker, payloads):
                out[chunks[ci].start : chunks[ci].stop] = values
    else:
        for payload in payloads:
            ci, values = _ensemble_worker(payload)
            out[chunks[ci].start : chunks[ci].stop] = values

    if center:
        out -= pair.heat_pairing(1.0)
    return out


def run_observable(
    pair: TestFunctionPair,
    coupling: Coupling,
    lattice: Lattice,
    mollifier: MollifierSpec,
    bank: NoiseBank,
    replica: int,
    dtype=np.float64,
    enforce_resolution: bool = True,
) -> float:
    """Centered smeared observable F(xi) for one replica."""
    member = EnsembleMember(coupling=coupling, mollifier=mollifier)
    _validate_run(pair, lattice, (member,), enforce_resolution)
    values = _evolve_chunk(pair, (member,), lattice, bank, None, [replica], dtype)
    return float(values[0, 0]) - pair.heat_pairing(1.0)


def run_coupled_pair(
    tau: float,
    pair: TestFunctionPair,
    coupling: Coupling,
    lattice: Lattice,
    mollifier: MollifierSpec,
    bank: NoiseBank,
    bank_prime: NoiseBank,
    replica: int,
    dtype=np.float64,
    enforce_resolution: bool = True,
) -> tuple[float, float]:
    """(F(xi), F(xi_tau)) with bit-identical shared base arrays.

    xi_tau = e^(-tau) xi + sqrt(1 - e^(-2 tau)) xi'; at tau = 0 the two
    outputs are bit-identical, for large tau they decouple.
    """
    if tau < 0:
        raise DomainError("tau must be nonnegative")
    members = (
        EnsembleMember(coupling=coupling, mollifier=mollifier),
        EnsembleMember(coupling=coupling, mollifier=mollifier, tau=tau),
    )
    _validate_run(pair, lattice, members, enforce_resolution)
    values = _evolve_chunk(pair, members, lattice, bank, bank_prime, [replica], dtype)
    centering = pair.heat_pairing(1.0)
    return float(values[0, 0]) - centering, float(values[0, 1]) - centering


def estimate_correlation(pairs) -> tuple[float, float]:
    """Pearson correlation of sample pairs with a jackknife standard error."""
    pairs = np.asarray(pairs, dtype=np.float64)
    if pairs.ndim != 2 or pairs.shape[1] != 2 or pairs.shape[0] < 2:
        raise DomainError("need at least two (x, y) sample pairs")
    x = pairs[:, 0] - pairs[:, 0].mean()
    y = pairs[:, 1] - pairs[:, 1].mean()
    n = len(x)
    sxx, syy, sxy = float(x @ x), float(y @ y), float(x @ y)
    if sxx <= 0.0 or syy <= 0.0:
        raise UndefinedCorrelationError("degenerate sample variance")
    corr = sxy / math.sqrt(sxx * syy)
    if n == 2:
        return corr, 0.0
    # leave-one-out statistics from the global sums
    nm1 = n - 1
    sxx_i = sxx - x * x * n / nm1
    syy_i = syy - y * y * n / nm1
    sxy_i = sxy - x * y * n / nm1
    good = (sxx_i > 0) & (syy_i > 0)
    r_i = np.where(good, sxy_i / np.sqrt(np.where(good, sxx_i * syy_i, 1.0)), corr)
    se = math.sqrt(max(0.0, (nm1 / n) * float(np.sum((r_i - r_i.mean()) ** 2))))
    return corr, se


def sample_variance(values) -> tuple[float, float]:
    """Unbiased sample variance with a jackknife standard error."""
    z = np.asarray(values, dtype=np.float64)
    n = len(z)
    if n < 2:
        raise DomainError("need at least two samples")
    z = z - z.mean()
    s2 = float(z @ z)
    var = s2 / (n - 1)
    if n == 2:
        return var, 0.0
    var_i = (s2 - z * z * n / (n - 1)) / (n - 2)
    se = math.sqrt(max(0.0, ((n - 1) / n) * float(np.sum((var_i - var_i.mean()) ** 2))))
    return var, se
