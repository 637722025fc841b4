"""Closed forms and transition kernels of the four semigroups.

* ``Q_t``: squared Bessel semigroup, generator x f'' + beta f'. In this time
  scaling X_t is (t/2) times a noncentral chi-square with 2 beta degrees of
  freedom; the classical BESQ(2 beta) runs twice as fast.
* birth-death semigroup: birth rate n + beta, death rate n.
* ``K_t``: Laguerre semigroup, K_t f(x) = E_x[f(e^{-t} X_u)] with
  u = sigma (e^t - 1), generator sigma x f'' + (sigma beta - x) f'.
* discrete Laguerre semigroup: birth-death for time u followed by binomial
  thinning with e^{-t}.

Transition rows of the birth-death kernels come from the generating function
(1 + (1-s) tau)^(-beta) * ((1 + (tau - v)(1-s)) / (1 + (1-s) tau))^n,
with (tau, v) = (t, 1) for the birth-death chain and
(sigma (1 - e^{-t}), e^{-t}) for its Laguerre version. Its coefficients are
the law of K + NB(K + beta, tau/(1+tau)) with K ~ Binomial(n, v/(1+tau)),
which gives rows as sums of nonnegative terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, stats
from scipy.interpolate import CubicHermiteSpline
from scipy.special import gammaln, roots_jacobi, roots_legendre

from .errors import DomainError, TruncationError
from .generators import TridiagGenerator, birth_death_rates
from .special_fn import gen_binom, log_bessel_i_scaled

__all__ = [
    "BesselLaw",
    "ContinuousDensity",
    "DiscreteMeasure",
    "bd_pgf",
    "bd_transition",
    "bd_transition_exact",
    "bd_transition_row",
    "bessel_laplace",
    "bessel_transition_density",
    "evolve_measure",
    "expm_action",
    "invariant_measure",
    "laguerre_K_apply",
    "laguerre_bdK_row",
    "laguerre_bd_pgf",
    "laguerre_laplace",
    "matrix_exp_transition",
    "nb_truncation",
    "q1_discrete_kernel",
]

MEASURE_KINDS = ("m_beta", "mu_beta", "nu_sigma", "n_sigma", "n_half")


@dataclass
class DiscreteMeasure:
    """Nonnegative weights on {0, ..., N-1} plus a bound on the mass beyond N."""

    weights: np.ndarray
    tail_mass_bound: float = 0.0
    is_probability: bool = True

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < -1e-15):
            raise ValueError("measure weights must be nonnegative")
        self.weights = np.clip(w, 0.0, None)
        if self.tail_mass_bound < 0:
            raise ValueError("tail_mass_bound must be nonnegative")

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def mass(self) -> float:
        return math.fsum(self.weights)

    def expect(self, g: Sequence) -> float:
        g = np.asarray(g, dtype=float)[: self.size]
        return float(np.dot(self.weights[: len(g)], g))


@dataclass
class ContinuousDensity:
    """Density on [0, inf) given by an evaluator handle."""

    pdf: Callable
    tol: float = 1e-8
    is_probability: bool = True

    def normalization(self) -> float:
        f = lambda y: float(np.asarray(self.pdf(np.array([y])))[0])
        a = integrate.quad(f, 0.0, 1.0, limit=400, epsabs=1e-13, epsrel=1e-12)[0]
        b = integrate.quad(f, 1.0, np.inf, limit=400, epsabs=1e-13, epsrel=1e-12)[0]
        return a + b

    def check(self) -> bool:
        return abs(self.normalization() - 1.0) <= self.tol


# ---------------------------------------------------------------- continuous

def bessel_laplace(beta, t, lam, x):
    """Q_t e_{-lam}(x) = (1 + lam t)^(-beta) exp(-x lam / (1 + lam t))."""
    lam = np.asarray(lam, dtype=float)
    den = 1.0 + lam * t
    out = den ** (-beta) * np.exp(-np.asarray(x, dtype=float) * lam / den)
    return float(out) if np.ndim(out) == 0 else out


def _log_pdf(beta: float, t: float, x: float, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    out = np.full(y.shape, -np.inf)
    pos = y > 0
    yp = y[pos]
    if x == 0:
        out[pos] = (beta - 1) * np.log(yp / t) - yp / t - math.log(t) - math.lgamma(beta)
        return out
    z = 2.0 * np.sqrt(x * yp) / t
    order = np.argsort(z)
    logi = np.empty_like(z)
    for block in np.array_split(order, max(1, len(order) // 4096)):
        logi[block] = _log_ive_window(beta - 1, z[block])
    out[pos] = (-math.log(t) + 0.5 * (beta - 1) * np.log(yp / x) - (math.sqrt(x) - np.sqrt(yp)) ** 2 / t + logi)
    return out


def _log_ive_window(nu: float, z: np.ndarray) -> np.ndarray:
    # log(e^{-z} I_nu(z)) summing only the series terms around the peak n ~ z/2
    if len(z) == 0:
        return z
    zmin, zmax = float(z.min()), float(z.max())
    if zmax < 50:
        return log_bessel_i_scaled(nu, z)
    lo = max(0, int(0.5 * zmin - 12 * math.sqrt(zmax) - 60))
    hi = int(0.5 * zmax + 12 * math.sqrt(zmax) + 60)
    n = np.arange(lo, hi)[:, None]
    logt = (2 * n + nu) * np.log(0.5 * z)[None, :] - gammaln(n + 1) - gammaln(n + nu + 1)
    peak = logt.max(axis=0)
    return peak + np.log(np.exp(logt - peak).sum(axis=0)) - z


def bessel_transition_density(beta: float, t: float, x: float, y):
    """Density of Q_t(x, dy).

    t^-1 (y/x)^((beta-1)/2) exp(-(x+y)/t) I_{beta-1}(2 sqrt(xy)/t) for x > 0,
    and the gamma entrance law (y/t)^(beta-1) e^{-y/t} / (t Gamma(beta)) at x = 0.
    """
    if not beta > 0 or not t > 0 or x < 0:
        raise DomainError("density needs beta > 0, t > 0, x >= 0")
    ya = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.exp(_log_pdf(beta, t, x, ya))
    return float(out[0]) if np.ndim(y) == 0 else out


class BesselLaw:
    """Q_t(x, .) as a quadrature rule built from its density.

    The first panel [0, y1] uses Gauss-Jacobi with the y^(beta-1) factor in the
    weight; the rest is split into Gauss-Legendre panels on a mixed
    geometric/linear grid refined around the mean. ``cdf`` interpolates the
    panel integrals with a cubic Hermite spline whose slopes are the density.
    """

    ORDER = 16

    def __init__(self, beta: float, t: float, x: float, n_linear: int = 1000, n_geometric: int = 400, n_bulk: int = 800):
        if not beta > 0 or not t > 0 or x < 0:
            raise DomainError("BesselLaw needs beta > 0, t > 0, x >= 0")
        self.beta, self.t, self.x = float(beta), float(t), float(x)
        mean = x + beta * t
        sd = math.sqrt(2 * x * t + beta * t * t)
        self.y1 = 1e-6 * (mean + t)
        self.y_hi = mean + 45 * sd + 60 * t
        edges = np.concatenate([
            np.geomspace(self.y1, self.y_hi, n_geometric),
            np.linspace(self.y1, self.y_hi, n_linear),
            np.linspace(max(self.y1, mean - 12 * sd), min(self.y_hi, mean + 12 * sd), n_bulk),
        ])
        self.edges = np.unique(edges)
        u, w = roots_legendre(self.ORDER)
        a, b = self.edges[:-1, None], self.edges[1:, None]
        nodes = 0.5 * (b - a) * u[None, :] + 0.5 * (a + b)
        weights = 0.5 * (b - a) * w[None, :]
        dens = self.pdf(nodes.ravel()).reshape(nodes.shape)
        panel_mass = (weights * dens).sum(axis=1)
        first_nodes, first_w = self._jacobi(self.y1)
        first_mass = float(np.dot(first_w, self._smooth_part(first_nodes)))
        self.nodes = np.concatenate([first_nodes, nodes.ravel()])
        # density folded into the weights, so expect(f) = sum(weights * f(nodes))
        self.weights = np.concatenate([first_w * self._smooth_part(first_nodes), (weights * dens).ravel()])
        cum = np.concatenate([[first_mass], first_mass + np.cumsum(panel_mass)])
        self.total_mass = float(cum[-1])
        self._spline = CubicHermiteSpline(self.edges, cum, self.pdf(self.edges))

    def _jacobi(self, top: float):
        u, w = roots_jacobi(self.ORDER, 0.0, self.beta - 1)
        nodes = 0.5 * top * (1 + u)
        return nodes, w * (0.5 * top) ** self.beta

    def _smooth_part(self, y):
        # density divided by y^(beta - 1)
        return np.exp(_log_pdf(self.beta, self.t, self.x, y) - (self.beta - 1) * np.log(y))

    def pdf(self, y):
        return np.exp(_log_pdf(self.beta, self.t, self.x, np.asarray(y, dtype=float)))

    def expect(self, f: Callable) -> float:
        """Integral of f against Q_t(x, dy); ``f`` must accept arrays."""
        return float(np.dot(self.weights, f(self.nodes)))

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        out = np.empty(y.shape)
        low = y < self.y1
        mid = (~low) & (y <= self.y_hi)
        out[mid] = self._spline(y[mid])
        out[y > self.y_hi] = self.total_mass
        for i in np.flatnonzero(low.ravel()):
            yi = y.ravel()[i]
            if yi <= 0:
                out.ravel()[i] = 0.0
            else:
                nodes, w = self._jacobi(yi)
                out.ravel()[i] = float(np.dot(w, self._smooth_part(nodes)))
        return out


def laguerre_laplace(beta, sigma, t, lam, x):
    """K_t e_{-lam}(x) for the Laguerre semigroup with scale sigma."""
    tau = sigma * -math.expm1(-t)
    lam = np.asarray(lam, dtype=float)
    den = 1.0 + lam * tau
    out = den ** (-beta) * np.exp(-np.asarray(x, dtype=float) * lam * math.exp(-t) / den)
    return float(out) if np.ndim(out) == 0 else out


def laguerre_K_apply(beta: float, sigma: float, t: float, f: Callable, x: float) -> float:
    """K_t f(x) = integral of f(e^{-t} y) against Q_{sigma(e^t - 1)}(x, dy)."""
    if t == 0:
        return f(x)
    u = sigma * math.expm1(t)
    v = math.exp(-t)
    return BesselLaw(beta, u, x).expect(lambda y: f(v * y))


# ------------------------------------------------------------------ discrete

def bd_pgf(beta, t, s, n):
    """Generating function of the birth-death law from n at time t."""
    a = 1.0 + (1.0 - s) * t
    return a ** (-beta) * ((1.0 + (t - 1.0) * (1.0 - s)) / a) ** n


def laguerre_bd_pgf(beta, sigma, t, s, n):
    """Generating function of the discrete Laguerre law from n at time t."""
    tau = sigma * -math.expm1(-t)
    v = math.exp(-t)
    a = 1.0 + (1.0 - s) * tau
    return a ** (-beta) * ((1.0 + (tau - v) * (1.0 - s)) / a) ** n


def _nb_logpmf(j, r, p):
    return gammaln(r + j) - gammaln(r) - gammaln(j + 1) + j * np.log(p) + r * np.log1p(-p)


def _branching_row(beta: float, tau: float, v: float, n: int, M: int) -> DiscreteMeasure:
    pi = v / (1.0 + tau)
    p = tau / (1.0 + tau)
    k = np.arange(n + 1)
    binw = stats.binom.pmf(k, n, pi)
    m = np.arange(M)
    j = m[None, :] - k[:, None]
    r = (k + beta)[:, None]
    valid = j >= 0
    if p == 0:
        nb = (j == 0).astype(float)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            nb = np.where(valid, np.exp(_nb_logpmf(np.maximum(j, 0), r, p)), 0.0)
        if beta == 0:
            nb[0] = (j[0] == 0).astype(float)
    row = binw @ nb
    if p == 0:
        tail = float(binw[M:].sum()) if M <= n else 0.0
    else:
        sf = np.array([stats.nbinom.sf(M - 1 - kk, kk + beta, 1 - p) if kk + beta > 0 and M - 1 - kk >= 0
                       else (1.0 if M - 1 - kk < 0 else 0.0) for kk in k])
        tail = float(np.dot(binw, sf))
    return DiscreteMeasure(row, tail)


def bd_transition_row(beta: float, t: float, n: int, M: int) -> DiscreteMeasure:
    """Row n of the birth-death kernel at time t, on states 0..M-1."""
    if t < 0 or beta < 0:
        raise DomainError("bd_transition needs t >= 0 and beta >= 0")
    return _branching_row(float(beta), float(t), 1.0, int(n), int(M))


def bd_transition(beta: float, t: float, n: int, m: int) -> float:
    """Transition probability of the birth-death chain from n to m in time t."""
    return float(bd_transition_row(beta, t, n, m + 1).weights[m])


def bd_transition_exact(beta, t, n: int, m: int) -> float:
    """Coefficient extraction from the literal generating function.

    Expands (t + (1-t)s)^n as a polynomial and convolves with the negative
    binomial series of (1 + (1-s)t)^(-(n+beta)). All of it is rational except
    the prefactor (1+t)^(-(n+beta)), which is applied in floating point at
    the end.
    """
    beta, t = Fraction(beta), Fraction(t)
    q = t / (1 + t)
    acc = Fraction(0)
    for j in range(min(n, m) + 1):
        a_j = math.comb(n, j) * t ** (n - j) * (1 - t) ** j
        acc += a_j * gen_binom(n + beta + m - j - 1, m - j) * q ** (m - j)
    return float(acc) * math.exp(-float(n + beta) * math.log1p(float(t)))


def q1_discrete_kernel(beta: float, n: int, m: int) -> float:
    """Closed form of the time-one kernel: 2^-(m+n+beta) Gamma(m+n+beta) / (Gamma(n+beta) m!)."""
    if not beta > 0:
        raise DomainError("q1_discrete_kernel needs beta > 0")
    return math.exp(-(m + n + beta) * math.log(2) + math.lgamma(m + n + beta) - math.lgamma(n + beta) - math.lgamma(m + 1))


def laguerre_bdK_row(beta: float, sigma: float, t: float, n: int, N: int) -> DiscreteMeasure:
    """Row n of the discrete Laguerre kernel at time t on states 0..N-1.

    Same law as running the birth-death chain for sigma (e^t - 1) and then
    thinning with e^{-t}, computed from the reparametrized generating function
    so that long horizons stay cheap.
    """
    if t < 0:
        raise DomainError("t must be nonnegative")
    tau = sigma * -math.expm1(-t)
    return _branching_row(float(beta), tau, math.exp(-t), int(n), int(N))


# ------------------------------------------------------------ uniformization

def _uniformize(gen: TridiagGenerator, t: float, vec: np.ndarray, side: str, tol: float):
    sub, diag, sup = gen.arrays()
    theta = float(np.max(np.abs(diag)))
    v = np.array(vec, dtype=float)
    if t == 0 or theta == 0:
        return v, 0.0, 0.0
    lam = theta * t
    K = int(stats.poisson.isf(tol, lam)) + 2
    ks = np.arange(K + 1)
    w = stats.poisson.pmf(ks, lam)
    survive = stats.poisson.sf(ks, lam)
    stay = 1.0 + diag / theta
    up, down = sup / theta, sub / theta
    acc = w[0] * v
    occupancy = survive[0] * v[-1]
    for k in range(1, K + 1):
        if side == "left":
            nv = v * stay
            nv[1:] += v[:-1] * up[:-1]
            nv[:-1] += v[1:] * down[1:]
        else:
            nv = v * stay
            nv[1:] += down[1:] * v[:-1]
            nv[:-1] += up[:-1] * v[1:]
        v = nv
        acc += w[k] * v
        occupancy += survive[k] * v[-1]
    dropped_rate = birth_death_rates(gen.kind, float(gen.beta), float(gen.sigma), gen.size - 1)[0]
    flux = float(dropped_rate * occupancy / theta)
    return acc, flux, float(stats.poisson.sf(K, lam))


def expm_action(gen: TridiagGenerator, t: float, vec, *, side: str = "left", tol: float = 1e-14) -> np.ndarray:
    """vec e^{tG} (``side='left'``, measures) or e^{tG} vec (``'right'``, functions)."""
    if side not in ("left", "right"):
        raise DomainError("side must be 'left' or 'right'")
    return _uniformize(gen, t, vec, side, tol)[0]


def matrix_exp_transition(gen: TridiagGenerator, t: float, row: int, *, tol: float = 1e-14,
                          max_tail: float = 1e-10) -> DiscreteMeasure:
    """Row of e^{tG} by uniformization.

    The tail bound adds the Poisson truncation error to the expected mass
    pushed across the truncation boundary, i.e. the dropped birth rate at the
    last state times its expected occupation time. Raises
    :class:`TruncationError` when that bound exceeds ``max_tail``.
    """
    if t < 0 or not 0 <= row < gen.size:
        raise DomainError("need t >= 0 and a row inside the truncation")
    e = np.zeros(gen.size)
    e[row] = 1.0
    acc, flux, trunc = _uniformize(gen, t, e, "left", tol)
    bound = flux + trunc
    if bound > max_tail:
        raise TruncationError(f"truncation at N={gen.size} leaks about {bound:.2e} of mass by t={t}")
    return DiscreteMeasure(acc, bound)


def evolve_measure(gen: TridiagGenerator, times: Sequence[float], m0, *, tol: float = 1e-14,
                   max_tail: float = 1e-10) -> list[DiscreteMeasure]:
    """m0 e^{tG} at each of the increasing ``times``, stepping between them."""
    out = []
    v = np.array(m0, dtype=float)
    prev = 0.0
    leak = 0.0
    for t in times:
        if t < prev:
            raise DomainError("times must be increasing")
        v, flux, trunc = _uniformize(gen, t - prev, v, "left", tol)
        leak += flux + trunc
        if leak > max_tail:
            raise TruncationError(f"truncation at N={gen.size} leaks about {leak:.2e} of mass by t={t}")
        out.append(DiscreteMeasure(v.copy(), leak))
        prev = t
    return out


# --------------------------------------------------------- invariant measures

def nb_truncation(beta: float, sigma: float = 1.0, tol: float = 1e-12) -> int:
    """Smallest N with n_sigma mass beyond N below ``tol``."""
    return int(stats.nbinom.isf(tol, beta, 1.0 / (1.0 + sigma))) + 2


def invariant_measure(kind: str, beta: float, sigma: float = 1.0, N: int | None = None):
    """Reference measures.

    ``m_beta``: m(n) = Gamma(n+beta)/(n! Gamma(beta)) (infinite mass);
    ``n_sigma``: negative binomial (1+sigma)^-beta (sigma/(1+sigma))^n m(n);
    ``n_half``: n_sigma at sigma = 1;
    ``mu_beta``: density x^(beta-1)/Gamma(beta);
    ``nu_sigma``: gamma density with shape beta and scale sigma.
    """
    if kind not in MEASURE_KINDS:
        raise DomainError(f"unknown measure kind {kind!r}")
    if not beta > 0:
        raise DomainError("invariant measures need beta > 0")
    if kind in ("nu_sigma", "n_sigma") and not sigma > 0:
        raise DomainError("sigma must be positive")
    if kind == "mu_beta":
        return ContinuousDensity(lambda y: np.where(np.asarray(y) > 0, np.asarray(y, dtype=float) ** (beta - 1), 0.0) / math.gamma(beta),
                                 is_probability=False)
    if kind == "nu_sigma":
        def pdf(y):
            y = np.asarray(y, dtype=float)
            with np.errstate(divide="ignore"):
                out = np.exp((beta - 1) * np.log(y) - y / sigma - beta * math.log(sigma) - math.lgamma(beta))
            return np.where(y > 0, out, 0.0)
        return ContinuousDensity(pdf)
    if kind == "n_half":
        sigma = 1.0
    n = np.arange(N if N is not None else nb_truncation(beta, sigma if kind != "m_beta" else 1.0))
    logm = gammaln(n + beta) - gammaln(beta) - gammaln(n + 1)
    if kind == "m_beta":
        return DiscreteMeasure(np.exp(logm), math.inf, is_probability=False)
    w = np.exp(logm - beta * math.log1p(sigma) + n * math.log(sigma / (1 + sigma)))
    return DiscreteMeasure(w, float(stats.nbinom.sf(len(n) - 1, beta, 1 / (1 + sigma))))
