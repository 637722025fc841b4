"""Goodness-of-fit tests used by the statistical checks.

p-values come from scipy: chi-square survival function, and asymptotic
Kolmogorov distributions for the KS tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from ..errors import DomainError
from ..semigroups import DiscreteMeasure

__all__ = ["McTest", "chi_square_pmf_test", "ks_test", "two_sample_chi", "two_sample_ks", "merge_bins"]

TEST_KINDS = ("chi_square_pmf", "ks_continuous", "two_sample_ks", "two_sample_chi")
MIN_SAMPLES = 1000


@dataclass(frozen=True)
class McTest:
    kind: str = "chi_square_pmf"
    n_samples: int = 100_000
    alpha: float = 0.01
    min_expected: float = 5.0

    def __post_init__(self):
        if self.kind not in TEST_KINDS:
            raise DomainError(f"unknown test kind {self.kind!r}")
        if self.n_samples < MIN_SAMPLES:
            raise DomainError(f"statistical checks need at least {MIN_SAMPLES} samples")
        if not 0 < self.alpha < 1:
            raise DomainError("alpha must lie in (0, 1)")


def _need(n: int):
    if n < MIN_SAMPLES:
        raise DomainError(f"insufficient samples: {n} < {MIN_SAMPLES}")


def merge_bins(expected: np.ndarray, min_expected: float) -> list[tuple[int, int]]:
    """Group consecutive cells, left to right, until each group expects at
    least ``min_expected``; a short last group joins its neighbour.
    Returns [start, stop) index pairs."""
    groups, start, acc = [], 0, 0.0
    for i, e in enumerate(expected):
        acc += e
        if acc >= min_expected:
            groups.append((start, i + 1))
            start, acc = i + 1, 0.0
    if start < len(expected):
        if groups:
            groups[-1] = (groups[-1][0], len(expected))
        else:
            groups.append((start, len(expected)))
    return groups


def chi_square_pmf_test(samples: Sequence[int], pmf: DiscreteMeasure, test: McTest | None = None) -> tuple[float, float]:
    """Pearson statistic of integer samples against ``pmf``.

    The cell beyond the truncation collects the samples at or above
    ``pmf.size`` and the leftover probability ``1 - sum(weights)``.
    """
    test = test or McTest("chi_square_pmf", max(MIN_SAMPLES, len(samples)))
    x = np.asarray(samples)
    n = len(x)
    _need(n)
    if np.any(x < 0):
        raise DomainError("samples must be nonnegative integers")
    w = np.asarray(pmf.weights, dtype=float)
    counts = np.bincount(np.minimum(x, len(w)), minlength=len(w) + 1).astype(float)
    expected = np.append(w, max(0.0, 1.0 - w.sum())) * n
    groups = merge_bins(expected, test.min_expected)
    if len(groups) < 2:
        raise DomainError("only one bin left after merging; the chi-square test has no degrees of freedom")
    obs = np.array([counts[a:b].sum() for a, b in groups])
    exp = np.array([expected[a:b].sum() for a, b in groups])
    if np.any(exp <= 0):
        raise DomainError("observed values fall outside the support of the reference pmf")
    stat = float(((obs - exp) ** 2 / exp).sum())
    return stat, float(stats.chi2.sf(stat, len(groups) - 1))


def ks_test(samples: Sequence[float], cdf: Callable) -> tuple[float, float]:
    """One-sample Kolmogorov-Smirnov test with the asymptotic p-value.

    The cdf is evaluated on the sorted sample; decreasing values (beyond
    1e-12) are rejected.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    _need(len(x))
    F = np.asarray(cdf(x), dtype=float)
    if np.any(np.diff(F) < -1e-12) or np.any(F < -1e-12) or np.any(F > 1 + 1e-12):
        raise DomainError("cdf is not monotone on the sample")
    res = stats.kstest(x, lambda y: np.clip(np.asarray(cdf(y), dtype=float), 0.0, 1.0), method="asymp")
    return float(res.statistic), float(res.pvalue)


def two_sample_ks(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    _need(min(len(a), len(b)))
    res = stats.ks_2samp(a, b, method="asymp")
    return float(res.statistic), float(res.pvalue)


def two_sample_chi(a: Sequence[int], b: Sequence[int], min_expected: float = 5.0) -> tuple[float, float]:
    """Chi-square homogeneity test of two integer samples, cells merged until
    the pooled expected count in each sample is at least ``min_expected``."""
    a, b = np.asarray(a), np.asarray(b)
    _need(min(len(a), len(b)))
    top = int(max(a.max(), b.max())) + 1
    ca = np.bincount(a, minlength=top).astype(float)
    cb = np.bincount(b, minlength=top).astype(float)
    pooled = ca + cb
    frac = min(len(a), len(b)) / (len(a) + len(b))
    groups = merge_bins(pooled * frac, min_expected)
    if len(groups) < 2:
        raise DomainError("only one bin left after merging; the chi-square test has no degrees of freedom")
    table = np.array([[ca[s:e].sum() for s, e in groups], [cb[s:e].sum() for s, e in groups]])
    stat, p, _, _ = stats.chi2_contingency(table, correction=False)
    return float(stat), float(p)
