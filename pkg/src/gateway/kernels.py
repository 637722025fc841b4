"""Intertwining kernels, as deterministic operators and as samplers.

Conventions:

* ``lambda`` (Poisson kernel): g -> x -> E[g(Pois(x))], and ``lambda_sigma``
  uses Pois(sigma x).
* ``lambda_star`` (gamma kernel): f -> n -> E[f(Gam(n+beta))] with rate 1;
  ``tilde_lambda_sigma`` uses rate sigma and ``hat_lambda`` rate
  1/varsigma + sigma.
* ``binomial_D`` (thinning): g -> n -> sum_m C(n,m) s^m (1-s)^(n-m) g(m),
  Markov for s in [0, 1] and signed above.
* ``beta_binomial_B``: thinning with a Beta(beta, alpha) random fraction.

Random variates come from :class:`numpy.random.Generator`. Its Poisson
sampler uses transformed rejection (PTRS) for means of 10 and above, and its
gamma sampler is Marsaglia-Tsang.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence, Union

import numpy as np
from scipy import integrate, stats
from scipy.special import betaln, gammaln, roots_genlaguerre

from .errors import ConvergenceError, DomainError
from .generators import FiniteSeq

__all__ = [
    "KERNEL_KINDS",
    "KernelSpec",
    "RngStream",
    "D_star_adjoint",
    "D_star_kernel",
    "beta_binomial_B_apply",
    "beta_binomial_B_pmf",
    "beta_binomial_B_sample",
    "binomial_D_apply",
    "binomial_D_matrix",
    "binomial_D_sample",
    "composite_kernel_sample",
    "dilation_apply",
    "gamma_expectation",
    "lambda_apply",
    "lambda_sample",
    "lambda_star_apply",
    "lambda_star_sample",
    "poisson_pmf",
]

SeqLike = Union[FiniteSeq, Sequence, np.ndarray, Callable]

KERNEL_KINDS = (
    "poisson_lambda",
    "gamma_lambda_star",
    "lambda_sigma",
    "tilde_lambda_sigma",
    "hat_lambda",
    "binomial_D",
    "D_star",
    "beta_binomial_B",
    "dilation",
)

POISSON_TAIL = 1e-15
SIGNED_SUPPORT_CAP = 64


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by (seed, stream_id).

    Distinct pairs map to independent ``SeedSequence`` children; the numpy
    generator is created lazily and then owned by this object.
    """

    seed: int
    stream_id: int = 0
    _gen: list = field(default_factory=list, repr=False, compare=False)

    @property
    def generator(self) -> np.random.Generator:
        if not self._gen:
            ss = np.random.SeedSequence(entropy=int(self.seed) % 2**64, spawn_key=(int(self.stream_id) % 2**64,))
            self._gen.append(np.random.Generator(np.random.PCG64(ss)))
        return self._gen[0]

    def derive(self, label: str) -> "RngStream":
        """Child stream whose id depends only on this stream and ``label``."""
        digest = hashlib.blake2b(f"{self.stream_id}:{label}".encode(), digest_size=8).digest()
        return RngStream(self.seed, int.from_bytes(digest, "little"))


def _gen(rng) -> np.random.Generator:
    return rng.generator if isinstance(rng, RngStream) else rng


@dataclass(frozen=True)
class KernelSpec:
    """Kernel kind plus the parameters it uses."""

    kind: str
    beta: float = 1.0
    sigma: float = 1.0
    varsigma: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise DomainError(f"unknown kernel kind {self.kind!r}")
        if self.kind in ("gamma_lambda_star", "tilde_lambda_sigma", "hat_lambda", "D_star", "beta_binomial_B") and not self.beta > 0:
            raise DomainError(f"{self.kind} needs beta > 0")
        if self.kind in ("lambda_sigma", "tilde_lambda_sigma", "hat_lambda", "dilation", "binomial_D") and not self.sigma >= 0:
            raise DomainError(f"{self.kind} needs sigma >= 0")
        if self.kind in ("tilde_lambda_sigma",) and not self.sigma > 0:
            raise DomainError("tilde_lambda_sigma needs sigma > 0")
        if self.kind == "hat_lambda" and not (self.varsigma > 0 and self.sigma >= 0):
            raise DomainError("hat_lambda needs varsigma > 0")
        if self.kind == "D_star" and not 0 < self.sigma <= 1:
            raise DomainError("D_star needs sigma in (0, 1]")
        if self.kind == "beta_binomial_B" and not self.alpha > 0:
            raise DomainError("beta_binomial_B needs alpha > 0")

    @property
    def signed(self) -> bool:
        """True for thinning with sigma > 1, where the kernel has negative entries."""
        return self.kind == "binomial_D" and self.sigma > 1

    @property
    def gamma_rate(self) -> float:
        if self.kind == "gamma_lambda_star":
            return 1.0
        if self.kind == "tilde_lambda_sigma":
            return self.sigma
        if self.kind == "hat_lambda":
            return 1.0 / self.varsigma + self.sigma
        raise DomainError(f"{self.kind} is not a gamma kernel")


def _seq_getter(g: SeqLike) -> Callable[[int], object]:
    if callable(g) and not isinstance(g, FiniteSeq):
        return g
    if isinstance(g, FiniteSeq):
        return g.__getitem__
    vals = list(g)
    return lambda n: vals[n] if 0 <= n < len(vals) else 0


def poisson_pmf(n: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Poisson(x) pmf at n, evaluated in log space (broadcasts)."""
    n = np.asarray(n, dtype=float)
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.exp(n * np.log(x) - x - gammaln(n + 1))
    return np.where(x == 0, (n == 0).astype(float), out)


def _poisson_range(xmax: float) -> int:
    if xmax <= 0:
        return 1
    return int(stats.poisson.isf(POISSON_TAIL, xmax)) + 2


def lambda_apply(g: SeqLike, x, *, sigma: float = 1.0, exact: bool = False):
    """Poisson kernel: E[g(Pois(sigma x))].

    ``g`` is a :class:`FiniteSeq`, a sequence, or a function of n. For
    functions the sum stops once the Poisson tail beyond the range is below
    1e-15. With ``exact=True`` and rational x the weighted sum
    sum g(n) (sigma x)^n / n! is accumulated exactly (useful for signed,
    fast-growing g) and multiplied by e^{-sigma x} at the end.
    """
    get = _seq_getter(g)
    if exact:
        return _lambda_apply_exact(get, Fraction(x) * Fraction(sigma))
    xa = np.asarray(x, dtype=float) * sigma
    if np.any(xa < 0):
        raise DomainError("lambda_apply needs x >= 0")
    if isinstance(g, FiniteSeq) or not callable(g):
        nmax = len(g) if not callable(g) else len(g.values)
    else:
        nmax = _poisson_range(float(np.max(xa)))
    n = np.arange(nmax)
    vals = np.array([float(get(k)) for k in n])
    pmf = poisson_pmf(n[:, None], np.atleast_1d(xa)[None, :])
    out = vals @ pmf
    return float(out[0]) if xa.ndim == 0 else out.reshape(xa.shape)


def _lambda_apply_exact(get, x: Fraction) -> float:
    total = Fraction(0)
    weight = Fraction(1)
    quiet = 0
    n = 0
    while True:
        term = get(n) * weight
        total += term
        if n > x and abs(term) <= abs(total) * Fraction(1, 10**40):
            quiet += 1
            if quiet >= 8:
                break
        else:
            quiet = 0
        n += 1
        weight = weight * x / n
        if n > 100000:
            raise ConvergenceError("exact Poisson series did not settle")
    return float(total) * math.exp(-float(x))


def lambda_sample(x, rng, size=None, *, sigma: float = 1.0):
    """Poisson(sigma x) variates."""
    if np.any(np.asarray(x) < 0):
        raise DomainError("lambda_sample needs x >= 0")
    return _gen(rng).poisson(np.asarray(x, dtype=float) * sigma, size=size)


@lru_cache(maxsize=512)
def _gl_rule(m: int, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    x, w = roots_genlaguerre(m, alpha)
    return x, w / w.sum()


def gamma_expectation(f: Callable, shape: float, rate: float = 1.0, *, rtol: float = 1e-12,
                      atol: float = 0.0, start_nodes: int = 32, max_nodes: int = 256) -> float:
    """E[f(G / rate)] for G ~ Gamma(shape), by Gauss-Laguerre quadrature with
    the generalized weight x^(shape-1) e^{-x}. The node count doubles until two
    successive values agree to ``rtol`` (relative) or ``atol``. Beyond
    ``max_nodes`` (scipy's node computation degrades past 256) adaptive
    quadrature takes over.

    ``f`` must accept a numpy array of nodes.
    """
    if not shape > 0:
        raise DomainError("gamma shape must be positive")
    if shape > 150:
        return _gamma_expectation_quad(f, shape, rate)
    prev = None
    m = start_nodes
    while m <= max_nodes:
        x, w = _gl_rule(m, float(shape - 1))
        val = float(np.dot(w, f(x / rate)))
        if prev is not None and abs(val - prev) <= rtol * abs(val) + atol:
            return val
        prev = val
        m *= 2
    val = _gamma_expectation_quad(f, shape, rate)
    if not math.isfinite(val):
        raise ConvergenceError(f"gamma quadrature did not converge (shape={shape}, last={prev})")
    return val


def _gamma_expectation_quad(f, shape, rate):
    # adaptive quadrature around the bulk of the density
    sd = math.sqrt(shape)
    lo, hi = max(0.0, shape - 40 * sd), shape + 40 * sd
    dens = lambda u: math.exp((shape - 1) * math.log(u) - u - math.lgamma(shape)) if u > 0 else 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(lambda u: float(f(np.array([u / rate]))[0]) * dens(u), lo, hi,
                                  points=[shape], limit=400, epsabs=0.0, epsrel=1e-13)
    return val


def lambda_star_apply(f: Callable, n: int, beta: float, *, rate: float = 1.0, **kw) -> float:
    """Gamma kernel: E[f(Gam(n+beta)/rate)] by adaptive Gauss-Laguerre quadrature."""
    if not n + beta > 0:
        raise DomainError("lambda_star needs n + beta > 0")
    return gamma_expectation(f, n + beta, rate, **kw)


def lambda_star_sample(n, beta: float, rng, size=None, *, rate: float = 1.0):
    """Gamma(n+beta) variates with the given rate."""
    shape = np.asarray(n, dtype=float) + beta
    if np.any(shape <= 0):
        raise DomainError("lambda_star_sample needs n + beta > 0")
    return _gen(rng).gamma(shape, size=size) / rate


def composite_kernel_sample(spec: KernelSpec, state, rng, size=None):
    """Draw from ``spec``'s kernel at ``state``.

    Continuous-to-discrete kinds (poisson_lambda, lambda_sigma) take real
    states; discrete-to-continuous kinds take integers; ``dilation`` is
    deterministic.
    """
    g = _gen(rng)
    k = spec.kind
    integer_state = isinstance(state, (int, np.integer)) or (
        isinstance(state, np.ndarray) and np.issubdtype(state.dtype, np.integer))
    if k in ("poisson_lambda", "lambda_sigma"):
        sig = 1.0 if k == "poisson_lambda" else spec.sigma
        return lambda_sample(state, g, size, sigma=sig)
    if k in ("gamma_lambda_star", "tilde_lambda_sigma", "hat_lambda"):
        if not integer_state:
            raise DomainError(f"{k} acts on integer states")
        return lambda_star_sample(state, spec.beta, g, size, rate=spec.gamma_rate)
    if k == "binomial_D":
        return binomial_D_sample(spec.sigma, state, g, size)
    if k == "beta_binomial_B":
        return beta_binomial_B_sample(spec.beta, spec.alpha, state, g, size)
    if k == "dilation":
        return spec.sigma * np.asarray(state, dtype=float)
    raise DomainError(f"{k} has no sampler (signed or non-normalized kernel)")


def binomial_D_apply(sigma, g: SeqLike, n: int):
    """Thinning operator at n: sum_m C(n,m) sigma^m (1-sigma)^(n-m) g(m).

    Exact for rational sigma and g. For sigma in [0, 1] the binomial weights
    are evaluated in log space and summed with ``math.fsum``. For sigma > 1
    (signed kernel, alternating terms of size ~ (2 sigma - 1)^n) the float
    inputs are converted to exact binary rationals, summed exactly and rounded
    once; n is capped at 64 there.
    """
    get = _seq_getter(g)
    if isinstance(sigma, (int, Fraction)) and not isinstance(sigma, bool):
        s = Fraction(sigma)
        return sum(math.comb(n, m) * s**m * (1 - s) ** (n - m) * get(m) for m in range(n + 1))
    sigma = float(sigma)
    if sigma < 0:
        raise DomainError("thinning needs sigma >= 0")
    if sigma <= 1:
        w = stats.binom.pmf(np.arange(n + 1), n, sigma)
        return math.fsum(float(w[m]) * float(get(m)) for m in range(n + 1) if w[m] != 0)
    if n > SIGNED_SUPPORT_CAP:
        raise OverflowError(f"signed thinning is limited to n <= {SIGNED_SUPPORT_CAP} in floating point")
    s = Fraction(sigma)
    return float(sum(math.comb(n, m) * s**m * (1 - s) ** (n - m) * Fraction(float(get(m))) for m in range(n + 1)))


def binomial_D_matrix(sigma: float, N: int) -> np.ndarray:
    """Thinning kernel restricted to {0..N-1}^2 (lower triangular)."""
    if not 0 <= sigma <= 1:
        raise DomainError("matrix form is provided for sigma in [0, 1]")
    n = np.arange(N)
    return stats.binom.pmf(n[None, :], n[:, None], sigma)


def binomial_D_sample(sigma: float, n, rng, size=None):
    """Binomial(n, sigma) thinning of n."""
    if not 0 <= sigma <= 1:
        raise DomainError("thinning sampler needs sigma in [0, 1]")
    return _gen(rng).binomial(n, sigma, size=size)


def _nb_logpmf(k, r, p):
    # NB_{r,p}(k) = C(r+k-1, k) p^k (1-p)^r
    if r == 0:
        return 0.0 if k == 0 else -math.inf
    out = math.lgamma(r + k) - math.lgamma(r) - math.lgamma(k + 1) + r * math.log1p(-p)
    if k:
        out += k * math.log(p) if p > 0 else -math.inf
    return out


def D_star_kernel(sigma: float, beta: float, m: int, n: int) -> float:
    """Weighted dual thinning kernel sigma^-beta C(m+beta-1, m) NB_{m+beta,1-sigma}(n-m).

    Equal to m_beta(n) D_sigma(n, m); zero for n < m.
    """
    if n < m:
        return 0.0
    log_mb = math.lgamma(m + beta) - math.lgamma(beta) - math.lgamma(m + 1)
    return math.exp(-beta * math.log(sigma) + log_mb + _nb_logpmf(n - m, m + beta, 1 - sigma))


def D_star_adjoint(sigma: float, beta: float, m: int, n: int) -> float:
    """Adjoint of thinning in l^2(m_beta): sigma^-beta NB_{m+beta,1-sigma}(n-m)."""
    if n < m:
        return 0.0
    return math.exp(-beta * math.log(sigma) + _nb_logpmf(n - m, m + beta, 1 - sigma))


def beta_binomial_B_pmf(beta: float, alpha: float, n: int) -> np.ndarray:
    """Row n of the beta-binomial kernel: C(n,m) B(beta+m, alpha+n-m) / B(beta, alpha)."""
    m = np.arange(n + 1)
    logc = gammaln(n + 1) - gammaln(m + 1) - gammaln(n - m + 1)
    return np.exp(logc + betaln(beta + m, alpha + n - m) - betaln(beta, alpha))


def beta_binomial_B_apply(beta: float, alpha: float, g: SeqLike, n: int) -> float:
    """Beta-binomial kernel applied to g at n."""
    if not (beta > 0 and alpha > 0):
        raise DomainError("beta-binomial kernel needs alpha, beta > 0")
    get = _seq_getter(g)
    w = beta_binomial_B_pmf(beta, alpha, n)
    return math.fsum(float(w[m]) * float(get(m)) for m in range(n + 1))


def beta_binomial_B_sample(beta: float, alpha: float, n, rng, size=None):
    """Draw B ~ Beta(beta, alpha) then Binomial(n, B)."""
    g = _gen(rng)
    b = g.beta(beta, alpha, size=size if size is not None else (np.shape(n) or None))
    return g.binomial(n, b)


def dilation_apply(sigma: float, f: Callable, x):
    """d_sigma f(x) = f(sigma x)."""
    return f(sigma * x)
