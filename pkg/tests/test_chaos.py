"""Chaos-module tests: chain reduction, simplex integrals, slabs, tails."""

import math

import numpy as np
import pytest

from shflab.chaos import (
    ChaosCoefficients,
    SlabSpec,
    chaos_coefficient,
    chaos_coefficients,
    correlation_from_chaos,
    gaussian_chain_values,
    grid_order_integral,
    order_integral,
    slab_variance,
    spectral_median_index,
    tail_estimate,
    variance_from_chaos,
)
from shflab.errors import DomainError, UndefinedCorrelationError, UnsupportedInputError
from shflab.kernels import QuadratureSpec
from shflab.mollifier import beta_eps, build_mollifier

from oracles import chain1_closed_form, order1_integral_quad, order2_integral_quad


@pytest.fixture(scope="module")
def moll01():
    return build_mollifier("gaussian", 0.1)


@pytest.fixture(scope="module")
def kernel_params(moll01):
    return moll01.gaussian_kernel_params()


class TestChainReduction:
    def test_pure_heat_equals_squared_pairing(self, pair_kernel):
        # no mollifier insertions: the chain over [0, 1] is <g, p(1) g'>^2
        from shflab.chaos import _GaussianChainState, _pair_delta2

        state = _GaussianChainState(pair_kernel.g, 1)
        state.heat(1.0)
        value = state.pair(pair_kernel.gp, _pair_delta2(pair_kernel))[0]
        assert value == pytest.approx(pair_kernel.heat_pairing(1.0) ** 2, rel=1e-13)

    def test_order1_chain_matches_closed_form(self, pair_kernel, kernel_params):
        gamma, v = kernel_params
        for tau in (0.05, 0.3, 0.5, 0.82, 0.97):
            got = gaussian_chain_values(np.array([[tau]]), pair_kernel, gamma, v)[0]
            want = chain1_closed_form(tau, pair_kernel, gamma, v)
            assert got == pytest.approx(want, rel=1e-12)

    def test_order1_integral_against_quadrature_oracle(self, pair_kernel):
        got, _ = order_integral(1, 0.1, pair_kernel)
        want, _ = order1_integral_quad(pair_kernel, *build_mollifier("gaussian", 0.1).gaussian_kernel_params())
        assert got == pytest.approx(want, rel=1e-6)

    def test_order2_integral_against_nested_quadrature(self, pair_kernel, kernel_params):
        gamma, v = kernel_params
        chain = lambda taus: gaussian_chain_values(taus, pair_kernel, gamma, v)  # noqa: E731
        want, _ = order2_integral_quad(pair_kernel, gamma, v, chain)
        spec = QuadratureSpec(simplex_samples=200_000)
        got, se = order_integral(2, 0.1, pair_kernel, spec=spec)
        assert abs(got - want) < 3.0 * se
        assert got == pytest.approx(want, rel=1e-2)


class TestCoefficients:
    def test_beta_scaling_exact(self, pair_kernel):
        spec = QuadratureSpec(simplex_samples=20_000)
        for k in range(1, 5):
            base, _ = chaos_coefficient(k, 0.1, 1.0, pair_kernel, spec=spec, seed=3)
            for beta in (0.7, 2.660058517):
                scaled, _ = chaos_coefficient(k, 0.1, beta, pair_kernel, spec=spec, seed=3)
                assert scaled / base == pytest.approx(beta**k, rel=1e-12)

    def test_coefficients_decrease_along_eps_ladder(self, pair_kernel):
        # fixed order, eps -> 0: the beta-free coupling is held at 1 so the
        # trend reflects beta^k c_k^2(1) at matched beta... use critical beta
        spec = QuadratureSpec(simplex_samples=100_000)
        for k in (1, 2, 3):
            vals = []
            for eps in (0.2, 0.1, 0.05):
                moll = build_mollifier("gaussian", eps)
                beta = beta_eps(0.0, eps, moll.c_Phi)
                v, _ = chaos_coefficient(k, eps, beta, pair_kernel, spec=spec, mollifier=moll, seed=5)
                vals.append(v)
            assert vals[0] > vals[1] > vals[2]

    def test_invalid_orders(self, pair_kernel):
        with pytest.raises(DomainError):
            chaos_coefficient(0, 0.1, 1.0, pair_kernel)
        with pytest.raises(DomainError):
            chaos_coefficients(0, 0.1, 1.0, pair_kernel)

    def test_mollifier_scale_mismatch(self, pair_kernel, moll01):
        with pytest.raises(DomainError):
            chaos_coefficient(1, 0.2, 1.0, pair_kernel, mollifier=moll01)


class TestVarianceAndCorrelation:
    def _coeffs(self, ck2):
        ck2 = np.asarray(ck2, dtype=float)
        return ChaosCoefficients(
            epsilon=0.1, beta=1.0, K=len(ck2), ck2=ck2,
            est_errors=np.zeros(len(ck2)), method="gaussian-analytic",
        )

    def test_variance_sums(self):
        assert variance_from_chaos(self._coeffs([0.0, 0.0])) == 0.0
        assert variance_from_chaos(self._coeffs([0.7])) == 0.7

    def test_correlation_at_zero_is_one(self):
        co = self._coeffs([0.3, 0.2, 0.1])
        assert correlation_from_chaos(co, 0.0) == 1.0

    def test_single_order_decay(self):
        for k in (1, 2, 5):
            ck2 = [0.0] * k
            ck2[k - 1] = 0.4
            co = self._coeffs(ck2)
            for tau in (0.1, 0.7):
                assert correlation_from_chaos(co, tau) == pytest.approx(math.exp(-k * tau), rel=1e-12)

    def test_monotone_in_tau(self):
        co = self._coeffs([0.3, 0.25, 0.2, 0.12])
        taus = np.linspace(0.0, 3.0, 13)
        vals = [correlation_from_chaos(co, t) for t in taus]
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_zero_mass_rejected(self):
        with pytest.raises(UndefinedCorrelationError):
            correlation_from_chaos(self._coeffs([0.0, 0.0]), 0.5)
        with pytest.raises(DomainError):
            correlation_from_chaos(self._coeffs([0.1]), -0.2)

    def test_tail_estimate_on_geometric_sequence(self):
        # exactly geometric spectrum: the fitted tail must reproduce the
        # closed-form remainder
        r = 0.6
        ck2 = 0.5 * r ** np.arange(5)
        tail, err = tail_estimate(self._coeffs(ck2))
        exact = ck2[-1] * r / (1.0 - r)
        assert tail == pytest.approx(exact, rel=1e-9)

    def test_tail_estimate_needs_decay(self):
        tail, err = tail_estimate(self._coeffs([0.1, 0.2]))
        assert tail == 0.0 and math.isinf(err)

    def test_spectral_median(self):
        co = self._coeffs([0.5, 0.3, 0.1, 0.05, 0.02])
        assert spectral_median_index(co, include_tail=False) == 1
        co2 = self._coeffs([0.1, 0.1, 0.1, 0.1, 0.1])
        assert spectral_median_index(co2, include_tail=False) == 3


class TestSlab:
    def test_slab_validation(self):
        with pytest.raises(DomainError):
            SlabSpec(0.5, 0.5)
        with pytest.raises(DomainError):
            SlabSpec(-0.1, 0.5)
        with pytest.raises(DomainError):
            SlabSpec(0.2, 1.2)

    def test_full_slab_equals_variance_exactly(self, pair_kernel, moll01):
        spec = QuadratureSpec(simplex_samples=50_000)
        beta = 1.7
        co = chaos_coefficients(4, 0.1, beta, pair_kernel, spec=spec, mollifier=moll01, seed=0)
        sv = slab_variance(SlabSpec(0.0, 1.0), 4, 0.1, beta, pair_kernel, spec=spec,
                           mollifier=moll01, seed=0)
        assert sv == variance_from_chaos(co)

    def test_small_interval_first_order(self, pair_kernel, moll01, kernel_params):
        # K=1 slab variance ~ beta * delta * chain(mid) as delta -> 0
        gamma, v = kernel_params
        mid = gaussian_chain_values(np.array([[0.5]]), pair_kernel, gamma, v)[0]
        ratios = []
        for delta in (1e-2, 1e-3, 1e-4):
            slab = SlabSpec(0.5 - delta / 2.0, 0.5 + delta / 2.0)
            val, _ = order_integral(1, 0.1, pair_kernel, slab=slab, mollifier=moll01)
            ratios.append(val / (delta * mid))
        assert abs(ratios[-1] - 1.0) < 1e-6
        assert abs(ratios[0] - 1.0) < 1e-3

    def test_slab_ratio_decreasing_smoke(self, pair_kernel, moll01):
        spec = QuadratureSpec(simplex_samples=60_000)
        beta = beta_eps(0.0, 0.1, moll01.c_Phi)
        ratios = []
        for m in (2, 3, 4):
            delta = 2.0**-m
            slab = SlabSpec(0.5 - delta / 2, 0.5 + delta / 2)
            val = slab_variance(slab, 4, 0.1, beta, pair_kernel, spec=spec, mollifier=moll01, seed=2)
            ratios.append(val / delta)
        assert ratios[0] > ratios[1] > ratios[2]


class TestGridPath:
    # the coarse default grid resolves the mollifier only for larger eps
    def test_order1_grid_matches_analytic(self, pair_kernel):
        moll = build_mollifier("gaussian", 0.4)
        got, err = grid_order_integral(1, 0.4, pair_kernel, mollifier=moll, grid_n=32, box=8.0)
        want, _ = order_integral(1, 0.4, pair_kernel, mollifier=moll)
        assert got == pytest.approx(want, rel=0.02)

    def test_order_too_large_rejected(self, pair_kernel, moll01):
        with pytest.raises(UnsupportedInputError):
            grid_order_integral(4, 0.1, pair_kernel, mollifier=moll01)

    def test_chaos_coefficient_grid_method(self, pair_kernel):
        moll = build_mollifier("gaussian", 0.4)
        val, err = chaos_coefficient(1, 0.4, 2.0, pair_kernel, mollifier=moll, method="grid")
        ana, _ = chaos_coefficient(1, 0.4, 2.0, pair_kernel, mollifier=moll)
        assert val == pytest.approx(ana, rel=0.02)
        with pytest.raises(UnsupportedInputError):
            chaos_coefficient(1, 0.4, 2.0, pair_kernel, mollifier=moll, method="exact")
