import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from gateway.errors import DomainError
from gateway.harness import SUITES, Check, VerificationReport, run_suite
from gateway.harness.registry import TOPICS, validate_params
from gateway.harness.report import combined_json
from gateway.harness.stats import (
    McTest,
    chi_square_pmf_test,
    ks_test,
    merge_bins,
    two_sample_chi,
    two_sample_ks,
)
from gateway.semigroups import DiscreteMeasure


def _nb_pmf(beta, p, n=400):
    k = np.arange(n)
    return DiscreteMeasure(stats.nbinom.pmf(k, beta, p))


# ---------------------------------------------------------------- stats

def test_chi_square_self_consistency():
    rng = np.random.default_rng(1)
    draws = rng.negative_binomial(1.5, 0.5, size=100_000)
    assert chi_square_pmf_test(draws, _nb_pmf(1.5, 0.5))[1] > 0.01


def test_chi_square_power_nb_half_vs_nb_06():
    rng = np.random.default_rng(2)
    draws = rng.negative_binomial(1.5, 0.6, size=100_000)
    assert chi_square_pmf_test(draws, _nb_pmf(1.5, 0.5))[1] < 1e-6


def test_chi_square_single_bin_has_no_degrees_of_freedom():
    pmf = DiscreteMeasure(np.array([0.999, 0.001]))
    with pytest.raises(DomainError, match="degrees of freedom"):
        chi_square_pmf_test(np.zeros(1000, dtype=int), pmf, McTest("chi_square_pmf", 1000, min_expected=5))


def test_chi_square_insufficient_samples():
    with pytest.raises(DomainError, match="insufficient"):
        chi_square_pmf_test(np.zeros(10, dtype=int), _nb_pmf(1, 0.5))


def test_chi_square_overflow_cell_catches_out_of_range_samples():
    # every sample beyond the table lands in the overflow cell and is rejected
    pmf = DiscreteMeasure(stats.poisson.pmf(np.arange(40), 3.0))
    draws = np.full(5000, 100)
    assert chi_square_pmf_test(draws, pmf)[1] < 1e-12


def test_ks_uniform_self_consistency():
    u = np.random.default_rng(3).random(50_000)
    assert ks_test(u, lambda x: np.clip(x, 0, 1))[1] > 0.01


def test_ks_power_exponential_vs_gamma2():
    x = np.random.default_rng(4).exponential(size=100_000)
    assert ks_test(x, stats.gamma(2).cdf)[1] < 1e-6


def test_ks_needs_1000_samples():
    with pytest.raises(DomainError):
        ks_test(np.random.default_rng(0).random(999), lambda x: x)


def test_ks_rejects_non_monotone_cdf():
    with pytest.raises(DomainError, match="monotone"):
        ks_test(np.random.default_rng(0).random(2000), lambda x: np.sin(20 * np.asarray(x)))


def test_two_sample_tests():
    rng = np.random.default_rng(5)
    a, b = rng.poisson(4.0, 20_000), rng.poisson(4.0, 20_000)
    assert two_sample_chi(a, b)[1] > 0.01
    assert two_sample_chi(a, rng.poisson(4.3, 20_000))[1] < 1e-6
    x, y = rng.gamma(2.0, size=20_000), rng.gamma(2.0, size=20_000)
    assert two_sample_ks(x, y)[1] > 0.01
    assert two_sample_ks(x, rng.gamma(2.2, size=20_000))[1] < 1e-6


def test_mctest_validation():
    with pytest.raises(DomainError):
        McTest("chi_square_pmf", n_samples=10)
    with pytest.raises(DomainError):
        McTest("nonsense")
    with pytest.raises(DomainError):
        McTest("ks_continuous", alpha=1.5)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.0, 50.0), min_size=2, max_size=40), st.floats(1.0, 10.0))
def test_merge_bins_partitions_and_meets_minimum(expected, min_expected):
    e = np.array(expected)
    groups = merge_bins(e, min_expected)
    assert groups[0][0] == 0 and groups[-1][1] == len(e)
    assert all(a[1] == b[0] for a, b in zip(groups, groups[1:]))
    if e.sum() >= min_expected:
        assert all(e[s:t].sum() >= min_expected - 1e-9 for s, t in groups)


# ---------------------------------------------------------------- report

def _report():
    checks = [Check("a", "deterministic", 1e-14, 1e-12, "ref a"),
              Check("b", "statistical", 0.3, 0.01, "ref b"),
              Check("c", "deterministic", math.inf, 1.0, "ref c")]
    return VerificationReport("demo", {"beta": 0.5}, 7, checks, 12)


def test_check_pass_rules():
    assert Check("x", "deterministic", 1.0, 1.0, "r").passed
    assert not Check("x", "statistical", 0.01, 0.01, "r").passed
    assert not Check("x", "deterministic", math.nan, 1.0, "r").passed
    assert Check("x", "deterministic", 5.0, 1.0, "r", passed=True).passed


def test_report_json_layout_and_round_trip():
    r = _report()
    text = r.to_json()
    assert text.endswith("\n")
    d = json.loads(text)
    assert list(d) == ["suite", "params", "seed", "checks", "runtime_ms", "version"]
    assert list(d["checks"][0]) == ["name", "kind", "statistic", "threshold", "pass", "paper_ref"]
    assert d["checks"][2]["statistic"] == "inf"
    back = VerificationReport.from_json(text)
    assert back == r
    assert not back.passed


def test_combined_json():
    d = json.loads(combined_json([_report()], 7, {}, 5))
    assert d["suite"] == "all" and d["pass"] is False and len(d["reports"]) == 1


# ---------------------------------------------------------------- registry

def test_fifteen_suites_registered():
    assert len(SUITES) == 15


def test_every_topic_is_covered_by_a_suite():
    covered = set().union(*(s.topics for s in SUITES.values()))
    assert covered == set(TOPICS)


def test_product_kernels_example():
    r = run_suite("product_kernels", {"beta": 1.0}, seed=42)
    assert r.passed
    c = next(c for c in r.checks if c.name == "LambdaStarLambda_eq_Q1")
    assert c.statistic <= 1e-10
    assert all(c.paper_ref for c in r.checks)


def test_self_similarity_example():
    r = run_suite("self_similarity", {"beta": 0.5}, seed=42)
    assert r.passed
    assert max(c.statistic for c in r.checks) <= 1e-12


def test_unknown_suite_and_bad_params():
    with pytest.raises(DomainError):
        run_suite("unknown")
    with pytest.raises(DomainError, match="unknown parameter"):
        validate_params("spectral", {"gamma": 1})
    with pytest.raises(DomainError, match="beta >= 1/2"):
        validate_params("entropy", {"beta": 0.3})
    with pytest.raises(DomainError, match="n_samples"):
        validate_params("samplers", {"n_samples": 10})


def _strip(r):
    d = r.to_dict()
    d.pop("runtime_ms")
    return d


def test_determinism_and_jobs_independence():
    a = run_suite("beta_gamma", {"n_samples": 5000}, seed=3)
    b = run_suite("beta_gamma", {"n_samples": 5000}, seed=3)
    c = run_suite("beta_gamma", {"n_samples": 5000}, seed=3, jobs=3)
    assert _strip(a) == _strip(b) == _strip(c)


def test_seed_changes_statistics():
    a = run_suite("beta_gamma", {"n_samples": 5000}, seed=3)
    b = run_suite("beta_gamma", {"n_samples": 5000}, seed=4)
    sa = [c.statistic for c in a.checks if c.kind == "statistical"]
    sb = [c.statistic for c in b.checks if c.kind == "statistical"]
    assert sa != sb
