"""Registry of verification suites.

A suite is a list of tasks. Each task is tied to one reference topic and
returns check tuples ``(name, statistic, threshold[, passed])``; the topic
text becomes the check's ``paper_ref``. Statistical tasks draw from a stream
derived from (seed, suite, task), so results do not depend on ``jobs``.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from ..errors import DomainError
from ..kernels import RngStream
from .report import Check, VerificationReport
from . import suites

__all__ = ["TOPICS", "SUITES", "Suite", "Task", "Context", "run_suite", "run_all", "validate_params", "PARAM_KEYS"]

TOPICS = {
    "poisson_kernel": "Poisson kernel Lambda(x, n) = e^{-x} x^n / n!",
    "gamma_kernel": "gamma kernel Lambda*(n, dy) = Gamma(n + beta) law",
    "closed_forms": "closed-form Laplace transform of Q_t and generating function of the birth-death law",
    "invariant_measures": "reference measures mu_beta, m_beta, nu_sigma, n_sigma",
    "generator_gateway": "generator gateway: nabla maps x f'' + beta f' to the birth-death difference operator",
    "nabla_inverse": "nabla inverts the Poisson kernel on polynomial-exponentials; Lambda maps mu_beta to m_beta with norm <= 1",
    "bessel_gateway": "gateway Q_t Lambda = Lambda Q^bd_t between squared Bessel and birth-death semigroups",
    "gamma_kernel_gateway": "dual gateway Q^bd_t Lambda* = Lambda* Q_t through the gamma kernel",
    "thinning_self_similarity": "birth-death semigroup under binomial thinning: Q^bd_t D_sigma = D_sigma Q^bd_{sigma t}",
    "dilation_thinning": "dilation and thinning intertwined by the Poisson kernel: d_sigma Lambda = Lambda D_sigma",
    "beta_kernel": "beta multiplication kernel intertwined with beta-binomial thinning",
    "beta_gamma": "Beta(beta, alpha)-thinned Poisson-gamma(alpha + beta) is Poisson-gamma(beta)",
    "time_inversion": "time inversion Q^bd_{1/t} D_{t^2} g(0) = Q^bd_t g(0) = E g(Pois(t Gam(beta)))",
    "jensen": "Laguerre polynomials as Jensen polynomials of the normalized Bessel function",
    "kernel_products": "Lambda Lambda* = Q_1 and Lambda* Lambda = Q^bd_1 with explicit negative binomial kernel",
    "scaled_kernel_products": "scaled kernels: Lambda_s tilde-Lambda_s = Q_{1/s}, tilde-Lambda_s Lambda_s = Q^bd_1, Q_t Lambda_s = Lambda_s Q^bd_{s t}",
    "exact_simulation": "exact simulation of squared Bessel, birth-death and Laguerre laws",
    "approximation": "composed birth-death approximation of the squared Bessel semigroup equals Q_{t+eps}",
    "laguerre_semigroups": "Laguerre semigroups K_t = Q_{sigma(e^t-1)} d_{e^-t} and the discrete analogue with thinning",
    "laguerre_generator_gateway": "Laguerre generator gateway: nabla maps sigma G_beta + D to sigma bbG_beta + bbD",
    "laguerre_gateway": "gateway K_t Lambda_sigma = Lambda_sigma bbK_t between continuous and discrete Laguerre semigroups",
    "laguerre_adjoint_kernel": "adjoint of Lambda_sigma in the Laguerre invariant spaces is a gamma kernel of rate 1/varsigma + sigma",
    "laguerre_products": "Laguerre kernel products equal the semigroups at time ln(1 + 1/(varsigma sigma))",
    "isospectrality": "isospectrality of the discrete Laguerre generator with spectrum 0, -1, -2, ...",
    "entropy": "relative entropy decays at rate 2 after the warm-up time ln(1 + 1/sigma)",
    "spectral": "spectral decomposition of the discrete Laguerre semigroup in l^2(n_beta)",
    "variance": "variance decay at rate e^{-t} in l^2(n_beta)",
    "dual_thinning": "weighted dual thinning kernel, its row totals and the operator norm bound sigma^{-beta}",
    "thinning_semigroup": "thinning is a multiplicative semigroup generated by n (g(n-1) - g(n))",
}

PARAM_KEYS = ("beta", "sigma", "varsigma", "t", "tol", "n_samples")


@dataclass
class Context:
    suite: str
    seed: int
    params: dict = field(default_factory=dict)

    def grid(self, key: str, default) -> list:
        v = self.params.get(key)
        return [v] if v is not None else list(default)

    def tol(self, default: float) -> float:
        v = self.params.get("tol")
        return default if v is None else float(v)

    def n(self, default: int) -> int:
        v = self.params.get("n_samples")
        return default if v is None else int(v)

    def rng(self, label: str) -> RngStream:
        return RngStream(int(self.seed)).derive(f"{self.suite}/{label}")


@dataclass(frozen=True)
class Task:
    label: str
    topic: str
    kind: str
    fn: Callable[[Context], list]

    def run(self, ctx: Context) -> list[Check]:
        out = []
        for item in self.fn(ctx):
            name, stat, thr = item[:3]
            passed = item[3] if len(item) > 3 else None
            out.append(Check(name, self.kind, stat, thr, TOPICS[self.topic], passed))
        return out


@dataclass(frozen=True)
class Suite:
    name: str
    tasks: tuple

    @property
    def topics(self) -> set:
        return {t.topic for t in self.tasks}


def _t(label, topic, fn, kind="deterministic"):
    if topic not in TOPICS:
        raise KeyError(topic)
    return Task(label, topic, kind, fn)


S = "statistical"

SUITES: dict[str, Suite] = {s.name: s for s in [
    Suite("gateway_generators", (
        _t("generator_gateway", "generator_gateway", suites.generator_gateway),
        _t("laguerre_generator_gateway", "laguerre_generator_gateway", suites.laguerre_generator_gateway),
        _t("thinning_generator_gateway", "thinning_semigroup", suites.thinning_generator_gateway),
        _t("nabla_round_trip", "nabla_inverse", suites.nabla_round_trip),
        _t("poisson_transport", "invariant_measures", suites.poisson_transport),
    )),
    Suite("gateway_bessel", (
        _t("bessel_gateway", "bessel_gateway", suites.bessel_gateway_pgf),
        _t("gamma_gateway", "gamma_kernel_gateway", suites.gamma_gateway),
        _t("poisson_kernel", "poisson_kernel", suites.poisson_kernel_pgf),
        _t("gamma_kernel", "gamma_kernel", suites.gamma_kernel_laplace),
        _t("closed_forms", "closed_forms", suites.closed_forms),
    )),
    Suite("self_similarity", (
        _t("thinning_pgf", "thinning_self_similarity", suites.thinning_pgf),
        _t("semigroup_thinning", "thinning_self_similarity", suites.semigroup_thinning),
        _t("dilation_thinning", "dilation_thinning", suites.dilation_thinning),
    )),
    Suite("time_inversion", (
        _t("pgf_routes", "time_inversion", suites.time_inversion_pgf),
        _t("finite_support", "time_inversion", suites.time_inversion_rows),
    )),
    Suite("beta_gamma", (
        _t("pmf", "beta_gamma", suites.beta_gamma_pmf),
        _t("beta_kernel", "beta_kernel", suites.beta_kernel_gateway),
        _t("monte_carlo", "beta_gamma", suites.beta_gamma_mc, S),
    )),
    Suite("product_kernels", (
        _t("q1_discrete", "kernel_products", suites.q1_discrete),
        _t("q1_bessel", "kernel_products", suites.q1_bessel),
        _t("scaled_products", "scaled_kernel_products", suites.scaled_products),
    )),
    Suite("laguerre_gateway", (
        _t("gateway", "laguerre_gateway", suites.laguerre_gateway_pgf),
        _t("composition", "laguerre_semigroups", suites.laguerre_composition),
        _t("invariance", "invariant_measures", suites.laguerre_invariance),
        _t("adjoint_kernel", "laguerre_adjoint_kernel", suites.laguerre_adjoint),
        _t("isospectrality", "isospectrality", suites.isospectrality),
    )),
    Suite("laguerre_products", (
        _t("products", "laguerre_products", suites.laguerre_products),
        _t("dual_gateway", "laguerre_adjoint_kernel", suites.laguerre_dual_gateway),
        _t("factorized_samplers", "exact_simulation", suites.laguerre_factorized_mc, S),
    )),
    Suite("spectral", (
        _t("eigen", "spectral", suites.spectral_eigen),
        _t("orthogonality", "spectral", suites.spectral_orthogonality),
        _t("expansion", "spectral", suites.spectral_expansion),
        _t("normalizers", "spectral", suites.spectral_normalizers),
        _t("isospectrality", "isospectrality", suites.isospectrality),
    )),
    Suite("variance_gap", (
        _t("decay", "variance", suites.variance_decay),
    )),
    Suite("entropy", (
        _t("decay", "entropy", suites.entropy_decay),
    )),
    Suite("jensen", (
        _t("identities", "jensen", suites.jensen),
    )),
    Suite("dilation_semigroup", (
        _t("multiplicative", "thinning_semigroup", suites.thinning_multiplicative),
        _t("pure_death", "thinning_semigroup", suites.thinning_pure_death),
        _t("generator_limit", "thinning_semigroup", suites.thinning_generator_limit),
        _t("dual_kernel", "dual_thinning", suites.dual_thinning),
    )),
    Suite("samplers", (
        _t("bessel", "exact_simulation", suites.bessel_samplers, S),
        _t("birth_death", "exact_simulation", suites.bd_samplers, S),
    )),
    Suite("approximation", (
        _t("sweep", "approximation", suites.approximation),
    )),
]}

# suite -> (parameter, predicate, message); suites absent here accept beta = 0
_POSITIVE_BETA = ("beta", lambda b: b > 0, "gamma kernels and Laguerre bases need beta > 0")
DOMAIN_RULES = {
    "entropy": ("beta", lambda b: b >= 0.5, "the entropy decay bound requires beta >= 1/2"),
    **{name: _POSITIVE_BETA for name in (
        "gateway_bessel", "time_inversion", "beta_gamma", "product_kernels", "laguerre_gateway",
        "laguerre_products", "spectral", "variance_gap", "jensen", "dilation_semigroup", "approximation")},
}


def validate_params(suite: str, params: dict) -> dict:
    """Check keys and domains; returns a cleaned copy with ``None`` values dropped."""
    if suite not in SUITES:
        raise DomainError(f"unknown suite {suite!r}; known: {', '.join(SUITES)}")
    clean = {k: v for k, v in (params or {}).items() if v is not None}
    for k in clean:
        if k not in PARAM_KEYS:
            raise DomainError(f"unknown parameter {k!r}")
    if "beta" in clean and not clean["beta"] >= 0:
        raise DomainError("beta must be nonnegative")
    for k in ("sigma", "varsigma", "t", "tol"):
        if k in clean and not clean[k] > 0:
            raise DomainError(f"{k} must be positive")
    if "n_samples" in clean and clean["n_samples"] < 1000:
        raise DomainError("n_samples must be at least 1000")
    rule = DOMAIN_RULES.get(suite)
    if rule and rule[0] in clean and not rule[1](clean[rule[0]]):
        raise DomainError(f"suite {suite}: {rule[2]} (got {rule[0]}={clean[rule[0]]})")
    return clean


def run_suite(name: str, params: dict | None = None, seed: int = 42, jobs: int = 1) -> VerificationReport:
    """Run one suite. Deterministic tasks run in order; statistical tasks are
    spread over ``jobs`` threads. Check order is the task order either way."""
    clean = validate_params(name, params or {})
    suite = SUITES[name]
    ctx = Context(name, int(seed), clean)
    start = time.perf_counter()
    results: dict[int, list] = {}
    stat_idx = [i for i, t in enumerate(suite.tasks) if t.kind == S]
    pool = ThreadPoolExecutor(max_workers=jobs) if jobs > 1 and stat_idx else None
    try:
        futures = {i: pool.submit(suite.tasks[i].run, ctx) for i in stat_idx} if pool else {}
        for i, task in enumerate(suite.tasks):
            if i not in futures:
                results[i] = task.run(ctx)
        for i, fut in futures.items():
            results[i] = fut.result()
    finally:
        if pool:
            pool.shutdown()
    checks = [c for i in range(len(suite.tasks)) for c in results[i]]
    runtime = int(round((time.perf_counter() - start) * 1000))
    return VerificationReport(name, clean, int(seed), checks, runtime)


def run_all(params: dict | None = None, seed: int = 42, jobs: int = 1) -> list[VerificationReport]:
    return [run_suite(name, params, seed, jobs) for name in SUITES]
