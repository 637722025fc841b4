import math

import numpy as np
import pytest
from scipy import stats

from gateway.errors import ConvergenceError, DomainError
from gateway.kernels import RngStream
from gateway.semigroups import (
    bd_transition_row,
    bessel_laplace,
    laguerre_bdK_row,
)
from gateway.simulate import (
    PathSample,
    SamplerConfig,
    approximation_sweep,
    bd_endpoint_sample,
    bd_path,
    bessel_exact_sample,
    bessel_pipeline_sample,
    laguerre_bd_exact_sample,
    laguerre_exact_sample,
    sample_batched,
    sample_process,
    write_samples_csv,
)

N = 100_000


def chi2_pvalue(samples, pmf):
    """Pearson test with the upper tail lumped into the last bin."""
    samples = np.asarray(samples)
    exp = np.asarray(pmf) * len(samples)
    keep = np.flatnonzero(exp >= 5)
    last = keep[-1]
    obs = np.bincount(np.minimum(samples, last + 1), minlength=last + 2)[: last + 2].astype(float)
    e = np.append(exp[: last + 1], len(samples) - exp[: last + 1].sum())
    obs_m, e_m = [], []
    acc_o = acc_e = 0.0
    for o, ee in zip(obs, e):
        acc_o += o
        acc_e += ee
        if acc_e >= 5:
            obs_m.append(acc_o)
            e_m.append(acc_e)
            acc_o = acc_e = 0.0
    obs_m[-1] += acc_o
    e_m[-1] += acc_e
    stat = sum((o - ee) ** 2 / ee for o, ee in zip(obs_m, e_m))
    return stats.chi2.sf(stat, len(obs_m) - 1)


def gamma_cdf(shape, scale):
    return lambda y: stats.gamma.cdf(y, shape, scale=scale)


def qt_cdf(beta, t, x):
    if x == 0:
        return lambda y: stats.chi2.cdf(2 * np.asarray(y) / t, 2 * beta)
    return lambda y: stats.ncx2.cdf(2 * np.asarray(y) / t, 2 * beta, 2 * x / t)


class TestPaths:
    def test_path_invariants(self):
        p = bd_path("bessel_bd", 1.3, 1.0, 4, 2.0, np.random.default_rng(0))
        assert p.times[0] == 0 and all(b > a for a, b in zip(p.times, p.times[1:]))
        assert all(abs(b - a) == 1 for a, b in zip(p.states, p.states[1:]))
        assert p.times[-1] <= p.horizon == 2.0

    def test_invalid_path_rejected(self):
        with pytest.raises(ValueError):
            PathSample((0.0, 1.0), (0, 2), 3.0)
        with pytest.raises(ValueError):
            PathSample((0.0, 1.0), (0, 1), 0.5)

    def test_absorbing_zero(self):
        p = bd_path("bessel_bd", 0.0, 1.0, 0, 100.0, np.random.default_rng(1))
        assert p.states == (0,)
        assert np.all(bd_endpoint_sample("bessel_bd", 0.0, 1.0, 0, 5.0, np.random.default_rng(1), 100) == 0)

    def test_endpoint_law_single_paths(self):
        g = np.random.default_rng(11)
        ends = [bd_path("bessel_bd", 1.0, 1.0, 0, 1.0, g).endpoint for _ in range(20_000)]
        pmf = stats.nbinom.pmf(np.arange(60), 1, 0.5)
        assert chi2_pvalue(ends, pmf) > 0.01

    def test_endpoint_law_batch(self):
        ends = bd_endpoint_sample("bessel_bd", 1.0, 1.0, 0, 1.0, np.random.default_rng(5), N)
        assert chi2_pvalue(ends, bd_transition_row(1.0, 1.0, 0, 80).weights) > 0.01

    def test_holding_time_mean(self):
        # first sojourns only: completed later sojourns are biased short by the horizon
        g = np.random.default_rng(3)
        for s in (1, 2, 3):
            arr = np.array([bd_path("bessel_bd", 0.7, 1.0, s, 1e-9 + 40.0 / (2 * s + 0.7), g).times[1] for _ in range(4000)])
            se = arr.std() / math.sqrt(len(arr))
            assert abs(arr.mean() - 1 / (2 * s + 0.7)) < 4 * se

    def test_martingale_mean(self):
        ends = bd_endpoint_sample("bessel_bd", 1.5, 1.0, 3, 2.0, np.random.default_rng(8), N)
        se = ends.std() / math.sqrt(N)
        assert abs(ends.mean() - (3 + 1.5 * 2.0)) < 4 * se

    def test_runaway_guard(self, monkeypatch):
        import gateway.simulate as sim
        monkeypatch.setattr(sim, "JUMP_GUARD", 50)
        with pytest.raises(ConvergenceError):
            sim.bd_path("bessel_bd", 1.0, 1.0, 100, 100.0, np.random.default_rng(0))

    def test_reproducible(self):
        a = bd_path("laguerre_bd", 1.0, 2.0, 3, 1.5, RngStream(7, 1).generator)
        b = bd_path("laguerre_bd", 1.0, 2.0, 3, 1.5, RngStream(7, 1).generator)
        assert a == b


class TestBesselSamplers:
    def test_entrance_law(self):
        x = bessel_exact_sample(0.8, 1.0, 0.0, np.random.default_rng(1), N)
        assert stats.kstest(x, gamma_cdf(0.8, 1.0)).pvalue > 0.01

    @pytest.mark.parametrize("beta,t,x", [(1.0, 2.0, 2.0), (0.5, 0.7, 3.0), (2.5, 1.0, 0.4)])
    def test_exact_vs_ncx2(self, beta, t, x):
        y = bessel_exact_sample(beta, t, x, np.random.default_rng(2), N)
        assert stats.kstest(y, qt_cdf(beta, t, x)).pvalue > 0.01
        se = y.std() / math.sqrt(N)
        assert abs(y.mean() - (x + beta * t)) < 4 * se

    def test_laplace_within_3se(self):
        y = bessel_exact_sample(1.3, 0.8, 1.5, np.random.default_rng(4), N)
        for lam in (0.2, 1.0, 3.0):
            v = np.exp(-lam * y)
            assert abs(v.mean() - bessel_laplace(1.3, 0.8, lam, 1.5)) < 3 * v.std() / math.sqrt(N)

    def test_beta_zero_absorbs(self):
        y = bessel_exact_sample(0.0, 1.0, 0.5, np.random.default_rng(0), N)
        assert np.mean(y == 0) == pytest.approx(math.exp(-0.5), abs=0.01)

    def test_pipeline_t0_is_exact_sampler(self):
        a = bessel_pipeline_sample(1.2, 1.5, 0.0, 2.0, np.random.default_rng(9), 1000)
        b = bessel_exact_sample(1.2, 1.5, 2.0, np.random.default_rng(9), 1000)
        np.testing.assert_array_equal(a, b)

    def test_pipeline_vs_exact_two_sample(self):
        a = bessel_pipeline_sample(1.0, 1.0, 1.0, 2.0, np.random.default_rng(21), 200_000)
        b = bessel_exact_sample(1.0, 2.0, 2.0, np.random.default_rng(22), 200_000)
        assert stats.ks_2samp(a, b).pvalue > 0.01
        assert stats.kstest(a, qt_cdf(1.0, 2.0, 2.0)).pvalue > 0.01

    def test_pipeline_laplace(self):
        y = bessel_pipeline_sample(0.6, 0.5, 1.2, 1.0, np.random.default_rng(6), N)
        v = np.exp(-0.9 * y)
        assert abs(v.mean() - bessel_laplace(0.6, 1.7, 0.9, 1.0)) < 3 * v.std() / math.sqrt(N)


class TestLaguerreSamplers:
    def test_t0_identity(self):
        g = np.random.default_rng(0)
        assert laguerre_exact_sample(1.0, 2.0, 0.0, 3.5, g) == 3.5
        assert laguerre_bd_exact_sample(1.0, 2.0, 0.0, 4, g) == 4

    @pytest.mark.parametrize("method", ["mixture", "compose", "pipeline"])
    def test_ergodic_limit(self, method):
        y = laguerre_exact_sample(1.7, 0.6, 20.0, 5.0, np.random.default_rng(3), N, method=method)
        assert stats.kstest(y, gamma_cdf(1.7, 0.6)).pvalue > 0.01

    @pytest.mark.parametrize("method", ["mixture", "compose", "pipeline"])
    def test_finite_time_law(self, method):
        beta, sigma, t, x = 1.4, 0.8, 0.9, 2.0
        u, v = sigma * math.expm1(t), math.exp(-t)
        y = laguerre_exact_sample(beta, sigma, t, x, np.random.default_rng(4), N, method=method)
        assert stats.kstest(y / v, qt_cdf(beta, u, x)).pvalue > 0.01

    def test_factorized_vs_composition(self):
        a = laguerre_exact_sample(0.9, 1.5, 1.2, 1.0, np.random.default_rng(31), N, method="pipeline")
        b = laguerre_exact_sample(0.9, 1.5, 1.2, 1.0, np.random.default_rng(32), N, method="compose")
        assert stats.ks_2samp(a, b).pvalue > 0.01

    def test_short_horizon_pipeline(self):
        # t below ln(1 + 1/sigma) forces the auxiliary scale up
        y = laguerre_exact_sample(1.0, 1.0, 0.1, 2.0, np.random.default_rng(7), N, method="pipeline")
        u, v = math.expm1(0.1), math.exp(-0.1)
        assert stats.kstest(y / v, qt_cdf(1.0, u, 2.0)).pvalue > 0.01

    @pytest.mark.parametrize("method", ["mixture", "compose", "pipeline", "path"])
    def test_discrete_law(self, method):
        beta, sigma, t, n = 1.2, 1.5, 1.3, 4
        m = laguerre_bd_exact_sample(beta, sigma, t, n, np.random.default_rng(13), N, method=method)
        assert chi2_pvalue(m, laguerre_bdK_row(beta, sigma, t, n, 120).weights) > 0.01

    def test_discrete_ergodic(self):
        m = laguerre_bd_exact_sample(2.0, 1.0, 25.0, 7, np.random.default_rng(1), N)
        assert chi2_pvalue(m, stats.nbinom.pmf(np.arange(100), 2.0, 0.5)) > 0.01


class TestDispatch:
    @pytest.mark.parametrize("process,methods", [
        ("bessel", ["mixture", "pipeline", "compose"]),
        ("bd-bessel", ["mixture", "pipeline", "compose", "path"]),
    ])
    def test_bessel_family(self, process, methods):
        beta, t, x0 = 1.1, 1.6, 2
        for k, m in enumerate(methods):
            s = sample_process(process, m, beta=beta, t=t, x0=x0, n=N, rng=np.random.default_rng(40 + k))
            if process == "bessel":
                assert stats.kstest(s, qt_cdf(beta, t, x0)).pvalue > 0.01, m
            else:
                assert chi2_pvalue(s, bd_transition_row(beta, t, x0, 200).weights) > 0.01, m

    def test_bad_inputs(self):
        g = np.random.default_rng(0)
        with pytest.raises(DomainError):
            sample_process("bessel", "path", beta=1, t=1, x0=1, n=10, rng=g)
        with pytest.raises(DomainError):
            sample_process("nope", "mixture", beta=1, t=1, x0=1, n=10, rng=g)
        with pytest.raises(DomainError):
            sample_process("bd-bessel", "mixture", beta=1, t=1, x0=1.5, n=10, rng=g)
        with pytest.raises(DomainError):
            SamplerConfig(0, RngStream(1))

    def test_batched_independent_of_jobs(self):
        cfg = SamplerConfig(12_345, RngStream(5, 2))
        draw = lambda g, k: bessel_exact_sample(1.0, 1.0, 1.0, g, k)
        a = sample_batched(cfg, draw, chunk=1000, jobs=1)
        b = sample_batched(cfg, draw, chunk=1000, jobs=3)
        assert len(a) == 12_345
        np.testing.assert_array_equal(a, b)

    def test_csv(self, tmp_path):
        p = tmp_path / "s.csv"
        write_samples_csv(p, np.array([1, 2, 30]))
        assert p.read_text() == "index,value\n0,1\n1,2\n2,30\n"
        write_samples_csv(p, np.array([0.1]))
        lines = p.read_text().splitlines()
        assert lines[1].startswith("0,1.00000000000000006e-01")


class TestApproximation:
    def test_identity_is_exact(self):
        for row in approximation_sweep(1.0, 1.0, 2.0, None, [0.2, 0.05, 0.01], laplace_lambda=0.7):
            assert row.identity_gap < 1e-12
            assert row.error == pytest.approx(abs(row.shifted - row.target), abs=1e-12)

    def test_general_f_route(self):
        f = lambda y: 1.0 / (1.0 + np.asarray(y))
        (row,) = approximation_sweep(0.8, 0.5, 1.0, f, [0.25])
        assert row.identity_gap < 1e-9

    def test_first_order_slope(self):
        beta, t, x, lam = 1.3, 1.0, 2.0, 0.8
        den = 1 + lam * t
        slope = abs(bessel_laplace(beta, t, lam, x) * (-beta * lam / den + x * lam * lam / den**2))
        rows = approximation_sweep(beta, t, x, None, [0.05, 0.025, 0.0125], laplace_lambda=lam)
        for r in rows:
            assert r.error / r.eps == pytest.approx(slope, rel=0.2)
        for a, b in zip(rows, rows[1:]):
            assert b.error / a.error == pytest.approx(0.5, rel=0.25)
