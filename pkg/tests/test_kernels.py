import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from gateway.errors import DomainError
from gateway.generators import FiniteSeq
from gateway.kernels import (
    KernelSpec,
    RngStream,
    beta_binomial_B_apply,
    beta_binomial_B_sample,
    binomial_D_apply,
    binomial_D_matrix,
    binomial_D_sample,
    composite_kernel_sample,
    D_star_adjoint,
    D_star_kernel,
    dilation_apply,
    lambda_apply,
    lambda_sample,
    lambda_star_apply,
    lambda_star_sample,
)


def m_beta(beta, n):
    return math.exp(math.lgamma(n + beta) - math.lgamma(beta) - math.lgamma(n + 1))


class TestRng:
    def test_reproducible(self):
        a = RngStream(42, 3).generator.random(5)
        b = RngStream(42, 3).generator.random(5)
        c = RngStream(42, 4).generator.random(5)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_derive(self):
        r = RngStream(7, 0)
        assert r.derive("x") == r.derive("x")
        assert r.derive("x").stream_id != r.derive("y").stream_id


class TestSpec:
    def test_signed_flag(self):
        assert KernelSpec("binomial_D", sigma=2.0).signed
        assert not KernelSpec("binomial_D", sigma=0.5).signed

    def test_invalid(self):
        with pytest.raises(DomainError):
            KernelSpec("nope")
        with pytest.raises(DomainError):
            KernelSpec("tilde_lambda_sigma", sigma=0.0)


class TestLambda:
    def test_examples(self):
        g = FiniteSeq([3.0, 1.0, 5.0])
        assert lambda_apply(g, 0.0) == 3.0
        assert lambda_apply(lambda n: 0.5**n, 2.0) == pytest.approx(math.exp(-1.0), rel=1e-14)
        assert lambda_apply(FiniteSeq([0, 0, 1]), 1.0) == pytest.approx(math.exp(-1) / 2, rel=1e-15)

    def test_vectorized(self):
        xs = np.array([0.0, 0.5, 3.0, 40.0])
        out = lambda_apply(lambda n: 0.3**n, xs)
        np.testing.assert_allclose(out, np.exp(-0.7 * xs), rtol=1e-13)

    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=15), st.floats(0, 20))
    def test_jensen(self, vals, x):
        g = FiniteSeq(vals)
        g2 = FiniteSeq([v * v for v in vals])
        assert lambda_apply(g, x) ** 2 <= lambda_apply(g2, x) + 1e-12

    def test_exact_mode_large_signed(self):
        # images of signed thinning grow geometrically; exact accumulation keeps precision
        g = FiniteSeq([Fraction(1, 2)] * 3)
        v = lambda_apply(lambda n: binomial_D_apply(Fraction(5, 2), g, n), Fraction(10), exact=True)
        assert v == pytest.approx(lambda_apply(g, 25.0), abs=1e-14)

    def test_measure_transport(self):
        for beta in (0.5, 1.0, 2.5):
            for n in range(21):
                f = lambda x: x ** (beta - 1) / math.gamma(beta) * lambda_apply(FiniteSeq([0] * n + [1]), x)
                val = integrate.quad(f, 0, np.inf, limit=200, epsabs=1e-13, epsrel=1e-12)[0]
                assert val == pytest.approx(m_beta(beta, n), rel=1e-10)

    def test_sampler(self):
        rng = RngStream(1, 0).generator
        assert np.all(lambda_sample(0.0, rng, size=100) == 0)
        draws = lambda_sample(3.0, rng, size=10**6)
        assert abs(draws.mean() - 3.0) < 4 * math.sqrt(3.0 / 10**6)
        assert draws.var() == pytest.approx(3.0, rel=0.01)
        counts = np.bincount(draws, minlength=13)[:13]
        expected = stats.poisson.pmf(np.arange(13), 3.0) * 10**6
        keep = expected > 5
        _, p = stats.chisquare(counts[keep], expected[keep] * counts[keep].sum() / expected[keep].sum())
        assert p > 0.01


class TestLambdaStar:
    @pytest.mark.parametrize("beta", [0.5, 1.0, 3.2])
    @pytest.mark.parametrize("n", [0, 1, 7, 40])
    def test_moments(self, beta, n):
        assert lambda_star_apply(lambda x: np.ones_like(x), n, beta) == pytest.approx(1.0, rel=1e-12)
        assert lambda_star_apply(lambda x: x, n, beta) == pytest.approx(n + beta, rel=1e-12)

    def test_laplace(self):
        for lam in (0.2, 1.0, 5.0):
            for n in (0, 3, 25):
                val = lambda_star_apply(lambda x: np.exp(-lam * x), n, 0.7)
                assert val == pytest.approx((1 + lam) ** -(n + 0.7), rel=1e-11)

    def test_rate(self):
        val = lambda_star_apply(lambda x: x, 4, 1.5, rate=2.0)
        assert val == pytest.approx(5.5 / 2.0, rel=1e-12)

    def test_large_shape(self):
        val = lambda_star_apply(lambda x: np.exp(-0.01 * x), 400, 1.0)
        assert val == pytest.approx(1.01 ** -401, rel=1e-10)

    def test_sampler(self):
        rng = RngStream(2, 0).generator
        draws = lambda_star_sample(0, 1.0, rng, size=10**5)
        assert np.mean(draws > 1) == pytest.approx(math.exp(-1), abs=4 * math.sqrt(0.25 / 10**5))
        d2 = lambda_star_sample(3, 0.5, rng, size=10**5)
        assert stats.kstest(d2, stats.gamma(3.5).cdf).pvalue > 0.01
        assert d2.mean() == pytest.approx(3.5, rel=0.02)


class TestComposite:
    def test_kinds(self):
        rng = RngStream(3, 0).generator
        a = composite_kernel_sample(KernelSpec("lambda_sigma", sigma=1.0), 2.5, rng, size=10**5)
        assert a.mean() == pytest.approx(2.5, rel=0.02)
        b = composite_kernel_sample(KernelSpec("tilde_lambda_sigma", beta=1.5, sigma=2.0), 3, rng, size=10**5)
        assert b.mean() == pytest.approx(4.5 / 2.0, rel=0.02)
        c = composite_kernel_sample(KernelSpec("hat_lambda", beta=1.5, sigma=1.0, varsigma=1.0), 3, rng, size=10**5)
        assert stats.kstest(c, stats.gamma(4.5, scale=0.5).cdf).pvalue > 0.01

    def test_bad_state(self):
        rng = RngStream(3, 1).generator
        with pytest.raises(DomainError):
            composite_kernel_sample(KernelSpec("gamma_lambda_star", beta=1.0), 2.5, rng)


class TestThinning:
    def test_examples(self):
        g = FiniteSeq([1.0, 4.0, 9.0, 16.0])
        assert binomial_D_apply(1.0, g, 3) == 16.0
        assert binomial_D_apply(0.0, g, 3) == 1.0
        for sigma in (0.3, 1.0, 2.5):
            for n in range(12):
                assert binomial_D_apply(sigma, lambda m: 0.4**m, n) == pytest.approx((1 - sigma + sigma * 0.4) ** n, rel=1e-12, abs=1e-13)

    def test_signed_cap(self):
        with pytest.raises(OverflowError):
            binomial_D_apply(2.0, lambda m: 1.0, 65)
        assert binomial_D_apply(Fraction(2), lambda m: 1, 100) == 1

    def test_semigroup(self):
        for s1, s2 in [(0.3, 0.7), (1.0, 0.5), (0.9, 0.95)]:
            a = binomial_D_matrix(s1, 61) @ binomial_D_matrix(s2, 61)
            b = binomial_D_matrix(s1 * s2, 61)
            assert np.max(np.abs(a - b)) <= 1e-14

    @pytest.mark.parametrize("sigma", [0.3, 1.0, 2.5])
    def test_commutation_with_poisson(self, sigma):
        rng = np.random.default_rng(5)
        s = Fraction(sigma)
        for _ in range(3):
            vals = [Fraction(int(v), 7) for v in rng.integers(-20, 20, size=20)]
            g = FiniteSeq(vals)
            for x in np.linspace(0, 10, 6):
                lhs = dilation_apply(sigma, lambda y: lambda_apply(g, y), float(x))
                rhs = lambda_apply(lambda n: binomial_D_apply(s, g, n), Fraction(x), exact=True)
                assert abs(lhs - rhs) <= 1e-12

    def test_sampler(self):
        rng = RngStream(4, 0).generator
        assert np.all(binomial_D_sample(1.0, 5, rng, size=10) == 5)
        assert np.all(binomial_D_sample(0.0, 5, rng, size=10) == 0)
        d = binomial_D_sample(0.5, 2, rng, size=10**5)
        _, p = stats.chisquare(np.bincount(d, minlength=3), 10**5 * np.array([0.25, 0.5, 0.25]))
        assert p > 0.01
        with pytest.raises(DomainError):
            binomial_D_sample(1.5, 2, rng)


class TestDStar:
    def test_examples(self):
        for sigma in (0.25, 0.6, 1.0):
            for n in range(8):
                assert D_star_kernel(sigma, 1.0, 0, n) == pytest.approx((1 - sigma) ** n, rel=1e-13, abs=1e-300)
        assert D_star_kernel(0.5, 1.0, 3, 2) == 0.0

    @pytest.mark.parametrize("beta", [0.5, 1.0, 2.7])
    @pytest.mark.parametrize("sigma", [0.3, 0.8])
    def test_row_totals(self, beta, sigma):
        for m in range(10):
            total = math.fsum(D_star_kernel(sigma, beta, m, n) for n in range(m, m + 400))
            assert total == pytest.approx(sigma**-beta * m_beta(beta, m), rel=1e-12)

    def test_duality(self):
        beta, sigma = 1.3, 0.6
        f = lambda n: math.cos(n)
        for m in range(8):
            lhs = math.fsum(m_beta(beta, n) * binomial_D_apply(sigma, FiniteSeq([0] * m + [1]), n) * f(n) for n in range(m, 400))
            rhs = math.fsum(D_star_kernel(sigma, beta, m, n) * f(n) for n in range(m, 400))
            assert lhs == pytest.approx(rhs, rel=1e-11, abs=1e-14)
            adj = math.fsum(D_star_adjoint(sigma, beta, m, n) * f(n) for n in range(m, 400))
            assert lhs == pytest.approx(m_beta(beta, m) * adj, rel=1e-11, abs=1e-14)


class TestBetaBinomial:
    def test_examples(self):
        g = FiniteSeq([2.0, 5.0])
        assert beta_binomial_B_apply(1.5, 0.7, g, 0) == 2.0
        assert beta_binomial_B_apply(1.5, 0.7, FiniteSeq([0, 1]), 1) == pytest.approx(1.5 / 2.2, rel=1e-14)

    def test_rows(self):
        for beta, alpha in [(1.0, 1.0), (0.5, 2.0), (2.0, 0.7)]:
            for n in range(51):
                assert beta_binomial_B_apply(beta, alpha, lambda m: 1.0, n) == pytest.approx(1.0, abs=1e-13)

    def test_sampler(self):
        rng = RngStream(5, 0).generator
        d = beta_binomial_B_sample(2.0, 0.7, 6, rng, size=10**5)
        expected = np.array([beta_binomial_B_apply(2.0, 0.7, FiniteSeq([0] * m + [1]), 6) for m in range(7)]) * 10**5
        _, p = stats.chisquare(np.bincount(d, minlength=7), expected)
        assert p > 0.01


def test_dilation():
    f = lambda x: x**2 + 1
    assert dilation_apply(1.0, f, 3.0) == f(3.0)
    assert dilation_apply(2.0, lambda y: dilation_apply(3.0, f, y), 0.5) == dilation_apply(6.0, f, 0.5)
