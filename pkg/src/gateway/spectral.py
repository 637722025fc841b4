"""Spectral expansions of the Laguerre semigroups.

Bases (``beta > 0``, scale sigma = 1):

* continuous: L_k(x) = sum_r (-1)^r C(k+beta-1, k-r) x^r / r!, eigenfunctions
  of x f'' + (beta - x) f' with eigenvalue -k, orthogonal in the gamma law
  nu_beta, squared norm Gamma(k+beta)/(k! Gamma(beta));
* discrete: LL_k(n) = E[L_k(G)] with G ~ Gamma(n+beta, rate 2), eigenfunctions
  of the birth-death generator with rates (n+beta, 2n) and eigenvalue -k,
  orthogonal in the negative binomial law n_beta(n) = 2^-(n+beta) m_beta(n).

LL_k is a rescaled Meixner polynomial with c = 1/2, which gives a stable
three-term recurrence in k. Every normalizer is computed numerically
(quadrature or summation); closed forms are only used to cross-check.
"""

from __future__ import annotations

import csv
import math
from contextlib import contextmanager
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import special
from scipy.linalg import eigh_tridiagonal

from .errors import DomainError
from .generators import PolySeq, build_generator, laguerre_generator_poly
from .kernels import _gl_rule, gamma_expectation
from .semigroups import DiscreteMeasure, evolve_measure, expm_action, invariant_measure, nb_truncation
from .special_fn import gen_binom, laguerre_coeffs, laguerre_poly

__all__ = [
    "BASIS_KINDS",
    "SpectralExpansion",
    "discrete_laguerre",
    "discrete_laguerre_table",
    "eigen_check_continuous",
    "eigen_check_discrete",
    "entropy",
    "entropy_decay_experiment",
    "isospectral_eigenvalues",
    "jensen_identity_check",
    "laguerre_norm",
    "shifted_normalizer_ratio",
    "spectral_evaluate",
    "spectral_expand",
    "variance",
    "variance_decay_check",
    "write_spectrum_csv",
]

BASIS_KINDS = ("continuous_laguerre", "discrete_laguerre")


def _check_beta(beta):
    if not beta > 0:
        raise DomainError("beta must be positive")


# ------------------------------------------------------------------- bases

def discrete_laguerre(k: int, beta, n: int):
    """LL_k(n) = sum_r (-1)^r C(k+beta-1, k-r) (n+beta)_r / (r! 2^r).

    Evaluated in exact rational arithmetic (floats are converted exactly) and
    rounded once; Fraction inputs give a Fraction.
    """
    if k < 0 or n < 0:
        raise DomainError("k and n must be nonnegative")
    exact = isinstance(beta, (int, Fraction))
    b = Fraction(beta)
    _check_beta(b)
    total = Fraction(0)
    rising = Fraction(1)
    for r in range(k + 1):
        if r:
            rising *= (n + b + r - 1)
        total += (-1) ** r * gen_binom(k + b - 1, k - r) * rising / (math.factorial(r) * 2**r)
    return total if exact else float(total)


def discrete_laguerre_table(K: int, beta: float, N: int) -> np.ndarray:
    """Array T[k, n] = LL_k(n) for k < K, n < N by the Meixner recurrence

    -(n/2) M_k = ((k+beta)/2) M_{k+1} - (k + (k+beta)/2) M_k + k M_{k-1},
    M_0 = 1, M_1 = 1 - n/beta, and LL_k = m_beta(k) 2^-k M_k.
    Written directly for LL_k the recurrence reads
    (k+1) LL_{k+1} = ((3k+beta)/2 - n/2) LL_k - ((k+beta-1)/2) LL_{k-1}.
    """
    _check_beta(beta)
    n = np.arange(N, dtype=float)
    T = np.empty((K, N))
    T[0] = 1.0
    if K > 1:
        T[1] = (beta - n) / 2
    for k in range(1, K - 1):
        T[k + 1] = (((3 * k + beta) - n) / 2 * T[k] - (k + beta - 1) / 2 * T[k - 1]) / (k + 1)
    return T


def _nbeta(beta: float, N: int) -> np.ndarray:
    return invariant_measure("n_half", beta, N=N).weights


def _sum_size(beta: float, K: int) -> int:
    # n_beta tail below 1e-16 plus room for the polynomial growth of LL_k^2
    return nb_truncation(beta, 1.0, 1e-16) + 12 * K + 100


def laguerre_norm(beta: float, k: int, basis_kind: str) -> float:
    """<phi_k, phi_k> in nu_beta (Gauss-Laguerre, exact for polynomials) or in
    n_beta (direct summation)."""
    _check_beta(beta)
    if basis_kind == "continuous_laguerre":
        return gamma_expectation(lambda x: laguerre_poly(k, beta, x) ** 2, beta, start_nodes=max(32, k + 2))
    if basis_kind == "discrete_laguerre":
        N = _sum_size(beta, k + 1)
        T = discrete_laguerre_table(k + 1, beta, N)
        return math.fsum(T[k] ** 2 * _nbeta(beta, N))
    raise DomainError(f"unknown basis kind {basis_kind!r}")


def shifted_normalizer_ratio(beta: float, k: int) -> dict:
    """Compare the constant c_k = Gamma(k+1)Gamma(beta+1)/Gamma(k+beta+1), and
    2^k c_k for the discrete basis, with the computed 1/<phi_k, phi_k>.

    c_k is the normalizer at beta + 1 in place of beta, so each ratio is
    beta/(k+beta) rather than 1; it must not be used as the normalizer.
    """
    c_k = math.exp(math.lgamma(k + 1) + math.lgamma(beta + 1) - math.lgamma(k + beta + 1))
    cont = 1.0 / laguerre_norm(beta, k, "continuous_laguerre")
    disc = 1.0 / laguerre_norm(beta, k, "discrete_laguerre")
    return {
        "k": k,
        "c_k": c_k,
        "computed_continuous": cont,
        "ratio_continuous": c_k / cont,
        "c_k_discrete": 2**k * c_k,
        "computed_discrete": disc,
        "ratio_discrete": 2**k * c_k / disc,
        "index_shift_prediction": beta / (k + beta),
    }


# ------------------------------------------------------------ eigen checks

def eigen_check_continuous(beta, k: int, x_grid: Sequence[float]) -> float:
    """max |L L_k + k L_k| / (1 + |L_k|) over the grid.

    The generator image is formed exactly on the coefficient list (beta is
    converted to an exact rational), then both polynomials are evaluated
    with a single rounding. The exact image is identically zero, so any
    residual is rounding.
    """
    if not 0 <= k <= 30:
        raise DomainError("k must lie in [0, 30]")
    b = Fraction(beta)
    _check_beta(b)
    P = PolySeq(laguerre_coeffs(k, b))
    LP = laguerre_generator_poly(b, 1, P)
    if any((LP + P.scale(k)).coeffs):
        return math.inf
    worst = 0.0
    for x in x_grid:
        xf = Fraction(float(x))
        p = float(P(xf))
        worst = max(worst, abs(float(LP(xf)) + k * p) / (1 + abs(p)))
    return worst


def eigen_check_discrete(beta: float, k: int, n_max: int) -> float:
    """max over n <= n_max of the relative residual of
    (n+beta) LL_k(n+1) - (3n+beta) LL_k(n) + 2n LL_k(n-1) + k LL_k(n),
    scaled by 1 + the sum of the magnitudes of the terms."""
    if not 0 <= k <= 20 or not 0 <= n_max <= 200:
        raise DomainError("need 0 <= k <= 20 and 0 <= n_max <= 200")
    _check_beta(beta)
    T = discrete_laguerre_table(k + 1, beta, n_max + 2)[k]
    n = np.arange(n_max + 1, dtype=float)
    prev = np.concatenate([[0.0], T[:n_max]])
    terms = [(n + beta) * T[1:], -(3 * n + beta) * T[:-1], 2 * n * prev, k * T[:-1]]
    res = np.abs(sum(terms)) / (1 + sum(np.abs(t) for t in terms))
    return float(res.max())


def isospectral_eigenvalues(beta: float, N: int = 400, count: int = 10) -> np.ndarray:
    """Top ``count`` eigenvalues of the truncated discrete Laguerre generator
    (sigma = 1), symmetrized by sqrt(n_beta) into a symmetric tridiagonal matrix."""
    gen = build_generator("laguerre_bd", float(beta), 1.0, N)
    sub, diag, sup = gen.arrays()
    off = np.sqrt(sup[:-1] * sub[1:])
    vals = eigh_tridiagonal(diag, off, eigvals_only=True, select="i", select_range=(N - count, N - 1))
    return np.sort(vals)[::-1]


# ---------------------------------------------------------------- expansion

@dataclass(frozen=True)
class SpectralExpansion:
    """Coefficients <g, phi_k>/<phi_k, phi_k> for k < K; K_t acts as e^{-kt}."""

    basis_kind: str
    beta: float
    K: int
    coeffs: tuple
    norms: tuple

    def __post_init__(self):
        if self.basis_kind not in BASIS_KINDS:
            raise DomainError(f"unknown basis kind {self.basis_kind!r}")
        if self.K < 1 or len(self.coeffs) != self.K:
            raise ValueError("need K >= 1 coefficients")
        if not all(math.isfinite(c) for c in self.coeffs):
            raise ValueError("coefficients must be finite")

    def eigenvalues(self) -> np.ndarray:
        return -np.arange(self.K, dtype=float)


def _as_function(g) -> Callable[[np.ndarray], np.ndarray]:
    if callable(g):
        return lambda n: np.asarray(g(n), dtype=float)
    arr = np.asarray(list(g.values) if hasattr(g, "values") else g, dtype=float)
    return lambda n: np.where(n < len(arr), arr[np.minimum(n, len(arr) - 1)], 0.0)


def spectral_expand(basis_kind: str, beta: float, g, K: int) -> SpectralExpansion:
    """Project g on the first K basis functions.

    Continuous: ``g`` is a vectorized callable and the inner products use
    Gauss-Laguerre quadrature against nu_beta. Discrete: ``g`` is a finite
    sequence or a callable on integer arrays; sums run until the n_beta tail
    is below 1e-16 (beyond the growth of LL_k^2).
    """
    _check_beta(beta)
    if K < 1:
        raise DomainError("K must be at least 1")
    coeffs, norms = [], []
    if basis_kind == "continuous_laguerre":
        m = max(64, 2 * K + 8)
        x, w = _gl_rule(m, float(beta - 1))
        gx = np.asarray(g(x), dtype=float)
        for k in range(K):
            phi = laguerre_poly(k, beta, x)
            nk = float(np.dot(w, phi * phi))
            coeffs.append(float(np.dot(w, gx * phi)) / nk)
            norms.append(nk)
    elif basis_kind == "discrete_laguerre":
        N = _sum_size(beta, K)
        T = discrete_laguerre_table(K, beta, N)
        nb = _nbeta(beta, N)
        gn = _as_function(g)(np.arange(N))
        for k in range(K):
            nk = math.fsum(T[k] ** 2 * nb)
            if nk == 0 or not math.isfinite(nk):
                warnings.warn(f"norm of basis function {k} is not representable; coefficient unreliable")
            coeffs.append(math.fsum(gn * T[k] * nb) / nk)
            norms.append(nk)
    else:
        raise DomainError(f"unknown basis kind {basis_kind!r}")
    return SpectralExpansion(basis_kind, float(beta), K, tuple(coeffs), tuple(norms))


def spectral_evaluate(exp: SpectralExpansion, t: float, point):
    """sum_k e^{-kt} c_k phi_k(point); ``point`` may be an array."""
    if t < 0:
        raise DomainError("t must be nonnegative")
    pts = np.atleast_1d(np.asarray(point))
    decay = np.exp(-t * np.arange(exp.K))
    if exp.basis_kind == "continuous_laguerre":
        phis = np.array([laguerre_poly(k, exp.beta, pts.astype(float)) for k in range(exp.K)])
    else:
        idx = pts.astype(int)
        if np.any(idx != pts) or np.any(idx < 0):
            raise DomainError("discrete expansions are evaluated at nonnegative integers")
        phis = discrete_laguerre_table(exp.K, exp.beta, int(idx.max()) + 1)[:, idx]
    out = (decay * np.asarray(exp.coeffs)) @ phis
    return float(out[0]) if np.ndim(point) == 0 else out


@contextmanager
def _sink(path):
    # a path, or an open text stream left open for the caller
    if hasattr(path, "write"):
        yield path
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            yield fh


def write_spectrum_csv(path, exp: SpectralExpansion, t: float = 0.0) -> None:
    """Rows k, eigenvalue -k, coefficient times e^{-kt}, squared norm."""
    with _sink(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "eigenvalue", "coefficient", "norm"])
        for k in range(exp.K):
            w.writerow([k, f"{0.0 - k:.17e}", f"{exp.coeffs[k] * math.exp(-k * t):.17e}", f"{exp.norms[k]:.17e}"])


# ------------------------------------------------------ variance and entropy

def variance(g: np.ndarray, weights: np.ndarray) -> float:
    """L^2(nu) distance of g from its mean, ||g - nu g|| (not squared)."""
    g = np.asarray(g, dtype=float)
    w = np.asarray(weights, dtype=float)
    mean = math.fsum(w * g) / math.fsum(w)
    return math.sqrt(max(0.0, math.fsum(w * (g - mean) ** 2)))


def variance_decay_check(beta: float, g, t_grid: Sequence[float], *, N: int | None = None) -> dict:
    """Compare ||K_t g - mean|| with e^{-t} ||g - mean|| in l^2(n_beta).

    K_t g is computed by uniformization of the truncated generator (sigma = 1).
    Squared variances are reported too; for those the sharp factor is e^{-2t}.
    """
    _check_beta(beta)
    N = N or nb_truncation(beta, 1.0, 1e-18) + 20
    gen = build_generator("laguerre_bd", float(beta), 1.0, N)
    nb = _nbeta(beta, N)
    gv = _as_function(g)(np.arange(N))
    v0 = variance(gv, nb)
    rows = []
    for t in t_grid:
        kt = expm_action(gen, float(t), gv, side="right")
        lhs = variance(kt, nb)
        rhs = math.exp(-t) * v0
        rows.append({"t": float(t), "lhs": lhs, "rhs": rhs, "margin": rhs - lhs,
                     "lhs_squared": lhs * lhs, "rhs_squared": rhs * rhs, "holds": lhs <= rhs + 1e-12})
    return {"beta": float(beta), "N": N, "var0": v0, "rows": rows, "pass": all(r["holds"] for r in rows)}


def entropy(m: DiscreteMeasure, ref: DiscreteMeasure) -> float:
    """sum m log(m / ref) with 0 log 0 = 0."""
    mw = np.asarray(m.weights, dtype=float)
    rw = np.asarray(ref.weights, dtype=float)
    if len(mw) > len(rw):
        if np.any(mw[len(rw):] > 0):
            raise DomainError("measure has mass beyond the reference truncation")
        mw = mw[: len(rw)]
    rw = rw[: len(mw)]
    pos = mw > 0
    if np.any(rw[pos] <= 0):
        raise DomainError("measure is not absolutely continuous with respect to the reference")
    return max(0.0, math.fsum(mw[pos] * np.log(mw[pos] / rw[pos])))


def entropy_decay_experiment(beta: float, sigma: float, m0, t_grid: Sequence[float], N: int | None = None,
                             *, margin_tol: float = 1e-10) -> dict:
    """Track Ent(m0 K_t | n_sigma) against exp(-2 [t - ln(1 + 1/sigma)]_+) Ent(m0 | n_sigma).

    ``m0`` is a weight vector or an integer starting state. The law at each
    time comes from uniformization, stepping along the increasing grid.
    """
    if beta < 0.5:
        raise DomainError("the entropy decay bound is stated for beta >= 1/2")
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    if isinstance(m0, (int, np.integer)):
        start = int(m0)
        N = N or max(nb_truncation(beta, sigma, 1e-16), start) + 40
        w0 = np.zeros(N)
        w0[start] = 1.0
    else:
        w0 = np.asarray(m0, dtype=float)
        N = N or max(nb_truncation(beta, sigma, 1e-16), len(w0)) + 40
        w0 = np.concatenate([w0, np.zeros(N - len(w0))])
    ref = invariant_measure("n_sigma", beta, sigma, N=N)
    e0 = entropy(DiscreteMeasure(w0), ref)
    shift = math.log1p(1.0 / sigma)
    gen = build_generator("laguerre_bd", float(beta), float(sigma), N)
    laws = evolve_measure(gen, [float(t) for t in t_grid], w0)
    rows = []
    for t, law in zip(t_grid, laws):
        ent = entropy(law, ref)
        bound = math.exp(-2 * max(0.0, t - shift)) * e0
        rows.append({"t": float(t), "entropy": ent, "bound": bound, "margin": bound - ent,
                     "ratio": ent / e0 if e0 > 0 else 0.0, "holds": bound - ent >= -margin_tol})
    return {"beta": float(beta), "sigma": float(sigma), "N": N, "entropy0": e0, "shift": shift,
            "rows": rows, "pass": all(r["holds"] for r in rows)}


# ------------------------------------------------------------------ Jensen

def _normalized_J(beta: float, z: np.ndarray) -> np.ndarray:
    # Gamma(1+beta) z^{-beta/2} J_beta(2 sqrt z), with the z -> 0 limit 1
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    pos = z > 0
    s = np.sqrt(z[pos])
    out[pos] = math.gamma(1 + beta) * special.jv(beta, 2 * s) / s**beta
    return out


def _kummer_neg(n: int, b, q) -> float:
    """1F1(-n; b; q), a terminating sum evaluated exactly."""
    b, q = Fraction(b), Fraction(q)
    term, total = Fraction(1), Fraction(1)
    for r in range(n):
        term *= Fraction(-n + r) * q / ((b + r) * (r + 1))
        total += term
    return float(total)


def jensen_identity_check(beta: float, q: float, n_max: int, *, x_grid: Sequence[float] = (0.0, 0.3, 1.0, 2.5, 5.0)) -> dict:
    """Check the Jensen-polynomial identities for the normalized Bessel function.

    (i) E[J(q G)] with G ~ Gamma(n + beta + 1) against e^{-q} 1F1(-n; 1+beta; q),
        also evaluated with shape n + beta to record which shape works;
    (ii) e^{-x} sum_n 1F1(-n; 1+beta; q) x^n / n! against J(q x).
    """
    _check_beta(beta)
    if not q > 0:
        raise DomainError("q must be positive")
    f = lambda y: _normalized_J(beta, q * y)
    res_plus, res_plain = [], []
    for n in range(n_max + 1):
        target = math.exp(-q) * _kummer_neg(n, 1 + beta, q)
        res_plus.append(abs(gamma_expectation(f, n + beta + 1, rtol=1e-13, atol=1e-15) - target))
        res_plain.append(abs(gamma_expectation(f, n + beta, rtol=1e-13, atol=1e-15) - target))
    res_series = []
    for x in x_grid:
        if x == 0:
            series = 1.0
        else:
            nmax = int(x + 12 * math.sqrt(x) + 40)
            terms = [_kummer_neg(n, 1 + beta, q) * math.exp(n * math.log(x) - math.lgamma(n + 1) - x) for n in range(nmax)]
            series = math.fsum(terms)
        res_series.append(abs(series - float(_normalized_J(beta, np.array([q * x]))[0])))
    shape = "n+beta+1" if max(res_plus) <= 1e-8 else ("n+beta" if max(res_plain) <= 1e-8 else "neither")
    return {"beta": float(beta), "q": float(q), "n_max": n_max,
            "gamma_identity_residual": max(res_plus), "gamma_identity_residual_shape_n_beta": max(res_plain),
            "series_identity_residual": max(res_series), "valid_shape": shape,
            "pass": max(res_plus) <= 1e-8 and max(res_series) <= 1e-8}
