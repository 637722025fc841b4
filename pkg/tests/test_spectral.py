import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special, stats

from gateway.errors import DomainError
from gateway.generators import FiniteSeq, build_generator, laguerre_seq_apply
from gateway.semigroups import DiscreteMeasure, expm_action, invariant_measure, laguerre_bdK_row, laguerre_K_apply
from gateway.spectral import (
    SpectralExpansion,
    discrete_laguerre,
    discrete_laguerre_table,
    eigen_check_continuous,
    eigen_check_discrete,
    entropy,
    entropy_decay_experiment,
    isospectral_eigenvalues,
    jensen_identity_check,
    laguerre_norm,
    shifted_normalizer_ratio,
    spectral_evaluate,
    spectral_expand,
    variance,
    variance_decay_check,
    write_spectrum_csv,
)
from gateway.special_fn import laguerre_poly


def rate2_gamma_integral(k, beta, n):
    """E[L_k(G)], G ~ Gamma(n + beta, rate 2), by adaptive quadrature with mpmath."""
    mpmath.mp.dps = 40
    b = mpmath.mpf(beta)
    a = n + b
    Lk = lambda x: mpmath.laguerre(k, b - 1, x)
    dens = lambda x: 2**a * x ** (a - 1) * mpmath.exp(-2 * x) / mpmath.gamma(a)
    return float(mpmath.quad(lambda x: Lk(x) * dens(x), [0, a / 2, a, 4 * a + 40, mpmath.inf]))


class TestDiscreteLaguerre:
    def test_low_orders(self):
        assert discrete_laguerre(0, 1.7, 5) == 1.0
        for n in range(6):
            assert discrete_laguerre(1, Fraction(3, 2), n) == (Fraction(3, 2) - n) / 2

    @pytest.mark.parametrize("beta", [0.5, 1.0, 2.7])
    def test_vs_rate2_gamma_quadrature(self, beta):
        for k in (0, 2, 5, 10):
            for n in (0, 3, 12, 30):
                ref = rate2_gamma_integral(k, beta, n)
                assert abs(discrete_laguerre(k, beta, n) - ref) <= 1e-10 * max(1, abs(ref))

    def test_table_matches_exact(self):
        T = discrete_laguerre_table(16, 1.3, 60)
        for k in range(16):
            for n in range(0, 60, 7):
                ex = discrete_laguerre(k, 1.3, n)
                assert abs(T[k, n] - ex) <= 1e-11 * max(1, abs(ex))

    def test_generating_function(self):
        # sum_k LL_k(n) w^k = (1-w)^n (1-w/2)^-(n+beta)
        beta, w = 1.6, 0.3
        T = discrete_laguerre_table(80, beta, 10)
        for n in range(10):
            assert np.dot(T[:, n], w ** np.arange(80)) == pytest.approx((1 - w) ** n * (1 - w / 2) ** (-(n + beta)), rel=1e-12)

    def test_exact_eigen_relation(self):
        # the generator with rates (n+beta, 2n) maps LL_k to -k LL_k exactly
        beta = Fraction(5, 3)
        for k in range(6):
            g = FiniteSeq([discrete_laguerre(k, beta, n) for n in range(20)])
            img = laguerre_seq_apply(beta, 1, g)
            for n in range(18):
                assert img[n] == -k * g[n]


class TestEigenChecks:
    def test_continuous(self):
        assert eigen_check_continuous(1.3, 0, [0, 1, 5]) == 0
        assert eigen_check_continuous(0.7, 1, [0, 1, 5, 20]) == 0
        assert eigen_check_continuous(2.5, 10, np.linspace(0, 50, 101)) <= 1e-9
        assert eigen_check_continuous(0.5, 30, np.linspace(0, 80, 41)) <= 1e-9

    @pytest.mark.parametrize("beta", [0.5, 1.0, 3.0])
    def test_discrete(self, beta):
        assert eigen_check_discrete(beta, 0, 100) == 0
        assert eigen_check_discrete(beta, 1, 100) == 0
        for k in range(11):
            assert eigen_check_discrete(beta, k, 100) <= 1e-9

    def test_domain(self):
        with pytest.raises(DomainError):
            eigen_check_discrete(1.0, 21, 10)
        with pytest.raises(DomainError):
            eigen_check_continuous(1.0, 31, [1.0])


class TestNorms:
    @pytest.mark.parametrize("beta", [0.5, 1.0, 3.2])
    def test_continuous_closed_form(self, beta):
        for k in range(0, 41, 5):
            ref = math.exp(math.lgamma(k + beta) - math.lgamma(k + 1) - math.lgamma(beta))
            assert laguerre_norm(beta, k, "continuous_laguerre") == pytest.approx(ref, rel=1e-10)
        assert laguerre_norm(beta, 1, "continuous_laguerre") == pytest.approx(beta, rel=1e-12)

    def test_continuous_scipy_quad(self):
        beta = 1.7
        f = lambda x: special.eval_genlaguerre(4, beta - 1, x) ** 2 * stats.gamma.pdf(x, beta)
        assert laguerre_norm(beta, 4, "continuous_laguerre") == pytest.approx(integrate.quad(f, 0, np.inf)[0], rel=1e-9)

    @pytest.mark.parametrize("beta", [0.5, 2.0])
    def test_discrete_norm(self, beta):
        assert laguerre_norm(beta, 0, "discrete_laguerre") == pytest.approx(1.0, abs=1e-14)
        for k in range(12):
            ref = math.exp(math.lgamma(k + beta) - math.lgamma(k + 1) - math.lgamma(beta)) / 2**k
            assert laguerre_norm(beta, k, "discrete_laguerre") == pytest.approx(ref, rel=1e-10)

    def test_shifted_constant_ratio(self):
        for k in range(6):
            r = shifted_normalizer_ratio(1.5, k)
            assert r["ratio_continuous"] == pytest.approx(r["index_shift_prediction"], rel=1e-10)
            assert r["ratio_discrete"] == pytest.approx(r["index_shift_prediction"], rel=1e-10)

    @pytest.mark.parametrize("beta", [0.5, 1.0, 2.5])
    def test_orthogonality(self, beta):
        N = 400
        T = discrete_laguerre_table(16, beta, N)
        nb = invariant_measure("n_half", beta, N=N).weights
        G = (T * nb) @ T.T
        off = G - np.diag(np.diag(G))
        assert np.max(np.abs(off)) <= 1e-10
        x, w = special.roots_genlaguerre(60, beta - 1)
        w = w / math.gamma(beta)
        P = np.array([special.eval_genlaguerre(k, beta - 1, x) for k in range(16)])
        Gc = (P * w) @ P.T
        assert np.max(np.abs(Gc - np.diag(np.diag(Gc)))) <= 1e-10


class TestExpansion:
    def test_basis_function_gives_unit_vector(self):
        for kind, beta in (("discrete_laguerre", 1.4), ("continuous_laguerre", 0.8)):
            if kind == "discrete_laguerre":
                g = lambda n: discrete_laguerre_table(6, 1.4, int(np.max(n)) + 1)[3][n]
            else:
                g = lambda x: laguerre_poly(3, 0.8, x)
            e = spectral_expand(kind, beta, g, 8)
            expected = np.eye(8)[3]
            assert np.max(np.abs(np.array(e.coeffs) - expected)) <= 1e-10

    def test_constant(self):
        e = spectral_expand("discrete_laguerre", 2.0, lambda n: np.ones(len(n)), 10)
        assert np.max(np.abs(np.array(e.coeffs[1:]))) <= 1e-12
        assert spectral_evaluate(e, 2.0, 7) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("beta", [0.5, 1.0, 2.5])
    def test_discrete_vs_uniformization(self, beta):
        g = np.array([0, 0, 1.0, 0, 3.0])
        e = spectral_expand("discrete_laguerre", beta, g, 40)
        gen = build_generator("laguerre_bd", beta, 1.0, 300)
        gg = np.zeros(300)
        gg[: len(g)] = g
        for t in (0.5, 1.0, 2.0):
            ref = expm_action(gen, t, gg, side="right")[:31]
            assert np.max(np.abs(spectral_evaluate(e, t, np.arange(31)) - ref)) <= 1e-6

    def test_continuous_vs_bessel_composition(self):
        beta = 1.3
        f = lambda x: np.exp(-0.5 * np.asarray(x))
        e = spectral_expand("continuous_laguerre", beta, f, 40)
        for t in (0.5, 1.5):
            for x in (0.0, 1.0, 3.0):
                assert spectral_evaluate(e, t, x) == pytest.approx(laguerre_K_apply(beta, 1.0, t, f, x), abs=1e-6)

    def test_validation(self):
        with pytest.raises(ValueError):
            SpectralExpansion("discrete_laguerre", 1.0, 2, (1.0,), (1.0,))
        with pytest.raises(DomainError):
            spectral_expand("other", 1.0, [1.0], 3)

    def test_csv(self, tmp_path):
        e = spectral_expand("discrete_laguerre", 1.0, [1.0], 3)
        p = tmp_path / "s.csv"
        write_spectrum_csv(p, e)
        lines = p.read_text().splitlines()
        assert lines[0] == "k,eigenvalue,coefficient,norm"
        assert len(lines) == 4


class TestIsospectral:
    @pytest.mark.parametrize("beta", [0.5, 1.0, 2.5])
    def test_lowest_eigenvalues(self, beta):
        vals = isospectral_eigenvalues(beta, 400, 10)
        assert np.max(np.abs(vals - (-np.arange(10)))) <= 1e-6


class TestVarianceAndEntropy:
    def test_variance_definition(self):
        assert variance([2.0, 2.0], [0.5, 0.5]) == 0
        assert variance([0.0, 2.0], [0.5, 0.5]) == pytest.approx(1.0)

    def test_constant(self):
        r = variance_decay_check(1.0, [1.0] * 200, [0.5, 1.0])
        for row in r["rows"]:
            assert row["lhs"] == pytest.approx(0, abs=1e-12) and row["rhs"] == pytest.approx(0, abs=1e-12)

    def test_eigenfunction_equality(self):
        r = variance_decay_check(1.0, lambda n: (1.0 - n) / 2, [0.1, 1.0, 3.0])
        for row in r["rows"]:
            assert abs(row["lhs"] - row["rhs"]) <= 1e-10

    def test_indicator_bound(self):
        r = variance_decay_check(1.0, [1.0], [0.1, 1.0, 3.0])
        assert r["pass"] and all(row["margin"] > 0 for row in r["rows"])

    def test_entropy_basic(self):
        ref = invariant_measure("n_half", 1.0, N=80)
        assert entropy(ref, ref) == pytest.approx(0, abs=1e-14)
        d0 = DiscreteMeasure(np.eye(80)[0])
        assert entropy(d0, ref) == pytest.approx(math.log(2), rel=1e-14)
        with pytest.raises(DomainError):
            entropy(DiscreteMeasure(np.eye(90)[85]), ref)

    # near starting points only; far ones break the rate-2 bound (see below)
    @given(st.sampled_from([0.5, 1.0, 2.0]), st.sampled_from([0.3, 1.0, 3.0]), st.integers(0, 8))
    @settings(max_examples=12, deadline=None)
    def test_entropy_bound_grid(self, beta, sigma, start):
        r = entropy_decay_experiment(beta, sigma, start, [0.05, 0.3, 0.7, 1.0, 2.0, 4.0])
        assert r["pass"]

    def test_entropy_rate_two_fails_far_from_origin(self):
        # delta_30 at beta = 1/2, sigma = 1: rate 2 is violated, rate 1 still holds
        r = entropy_decay_experiment(0.5, 1.0, 30, [2.0, 4.0], N=400)
        assert not r["pass"]
        at2 = r["rows"][0]
        assert at2["entropy"] == pytest.approx(2.151, abs=2e-3) and at2["bound"] == pytest.approx(1.716, abs=2e-3)
        for row in r["rows"]:
            assert row["entropy"] <= math.exp(-max(0.0, row["t"] - r["shift"])) * r["entropy0"]
        # same law from the closed-form kernel row
        ref = invariant_measure("n_sigma", 0.5, 1.0, N=400)
        assert entropy(laguerre_bdK_row(0.5, 1.0, 2.0, 30, 400), ref) == pytest.approx(at2["entropy"], rel=1e-8)

    def test_entropy_ratio_after_one_unit(self):
        t0 = math.log(2)
        r = entropy_decay_experiment(1.0, 1.0, 0, [t0, t0 + 1])
        assert r["entropy0"] == pytest.approx(math.log(2))
        assert r["rows"][1]["ratio"] <= math.exp(-2) + 1e-10

    def test_entropy_beta_domain(self):
        with pytest.raises(DomainError, match="beta >= 1/2"):
            entropy_decay_experiment(0.3, 1.0, 0, [1.0])


class TestJensen:
    def test_shapes(self):
        r = jensen_identity_check(1.0, 1.0, 12)
        assert r["pass"] and r["valid_shape"] == "n+beta+1"
        assert r["gamma_identity_residual_shape_n_beta"] > 1e-3

    def test_n2_brute_force(self):
        # 1F1(-2; 2; 1) = 1 - 2/2 + (-2)(-1)/(2*3*2)
        r = jensen_identity_check(1.0, 1.0, 2)
        assert r["gamma_identity_residual"] <= 1e-8
        assert float(mpmath.hyp1f1(-2, 2, 1)) == pytest.approx(1 - 1 + 2 / 12)

    @pytest.mark.parametrize("beta,q", [(0.5, 0.01), (2.5, 3.0), (1.2, 0.4)])
    def test_grid(self, beta, q):
        r = jensen_identity_check(beta, q, 20)
        assert r["gamma_identity_residual"] <= 1e-8 and r["series_identity_residual"] <= 1e-8
