"""Special functions behind the closed forms: log-gamma, generalized binomials,
Laguerre polynomials and the Bessel series.

Functions accept :class:`fractions.Fraction` arguments where the result is a
finite rational expression, in which case the arithmetic is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import numpy as np
from scipy.special import gammaln

from .errors import ConvergenceError, DomainError

__all__ = [
    "ConvergenceError",
    "SeriesTolerance",
    "gen_binom",
    "kahan_sum",
    "laguerre_coeffs",
    "laguerre_poly",
    "ln_gamma",
    "log_bessel_i_scaled",
    "modified_bessel_I",
    "normalized_bessel_J",
]


@dataclass(frozen=True)
class SeriesTolerance:
    """Stopping rule for ascending series.

    Summation stops once two consecutive terms are smaller than
    ``rel_tol * |partial sum|``.
    """

    rel_tol: float = 1e-14
    max_terms: int = 500

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise DomainError("rel_tol must be positive")
        if self.max_terms < 1:
            raise DomainError("max_terms must be at least 1")


DEFAULT_TOL = SeriesTolerance()


def ln_gamma(x: float) -> float:
    """Natural log of the gamma function for x > 0."""
    if not x > 0:
        raise DomainError(f"ln_gamma needs x > 0, got {x}")
    return math.lgamma(x)


def gen_binom(a, n: int):
    """Generalized binomial coefficient a(a-1)...(a-n+1)/n!.

    Uses the product form, so it is defined for every real ``a``. Exact when
    ``a`` is an int or Fraction.
    """
    if n < 0:
        raise DomainError("n must be nonnegative")
    exact = isinstance(a, (int, Fraction))
    out = Fraction(1) if exact else 1.0
    for j in range(n):
        out = out * (a - j) / (j + 1)
    return out


def kahan_sum(terms: Iterable):
    """Compensated sum; works elementwise on numpy arrays."""
    total = 0.0
    comp = 0.0
    for term in terms:
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


def _is_exact(*args) -> bool:
    return any(isinstance(a, Fraction) for a in args) and all(isinstance(a, (int, Fraction)) for a in args)


def laguerre_coeffs(k: int, beta) -> list:
    """Coefficients of x^r in the degree-k Laguerre polynomial.

    The basis is fixed by the eigen-equation x f'' + (beta - x) f' = -k f,
    which gives coefficient (-1)^r C(k+beta-1, k-r)/r!.
    """
    exact = isinstance(beta, (int, Fraction))
    b = Fraction(beta) if exact else float(beta)
    return [(-1) ** r * gen_binom(k + b - 1, k - r) / math.factorial(r) for r in range(k + 1)]


def laguerre_poly(k: int, beta, x):
    """Laguerre polynomial of degree k with parameter beta at x.

    Equal to the classical generalized Laguerre polynomial L_k^{(beta-1)}.
    Exact for Fraction inputs. Float inputs with k <= 10 use the explicit sum
    with every term formed and accumulated in exact binary-rational
    arithmetic, so the only rounding is the final one; larger k use the
    three-term recurrence. ``x`` may be a numpy array.
    """
    if k < 0:
        raise DomainError("k must be nonnegative")
    if _is_exact(beta, x):
        return sum(c * Fraction(x) ** r for r, c in enumerate(laguerre_coeffs(k, Fraction(beta))))
    beta = float(beta)
    xa = np.asarray(x, dtype=float)
    if k <= 10:
        coeffs = laguerre_coeffs(k, Fraction(beta))
        flat = [float(_horner_exact(coeffs, Fraction(v))) for v in xa.ravel()]
        val = np.array(flat, dtype=float).reshape(xa.shape)
    else:
        prev = np.ones_like(xa)
        cur = beta - xa
        for j in range(1, k):
            prev, cur = cur, ((2 * j + beta - xa) * cur - (j + beta - 1) * prev) / (j + 1)
        val = cur
    val = np.asarray(val, dtype=float) + np.zeros_like(xa)
    return float(val) if val.ndim == 0 else val


def _horner_exact(coeffs, x: Fraction) -> Fraction:
    acc = Fraction(0)
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def normalized_bessel_J(beta: float, z: float, tol: SeriesTolerance = DEFAULT_TOL) -> float:
    """Normalized Bessel function Gamma(1+beta) sum_n (-z)^n / (n! Gamma(n+1+beta)).

    J(0) = 1 exactly. Raises :class:`ConvergenceError` when the series needs
    more than ``tol.max_terms`` terms.
    """
    if beta < 0:
        raise DomainError("beta must be nonnegative")
    if z == 0:
        return 1.0
    total, comp = 1.0, 0.0
    term = 1.0
    small = 0
    for n in range(tol.max_terms):
        term *= -z / ((n + 1) * (n + 1 + beta))
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        if abs(term) < tol.rel_tol * abs(total):
            small += 1
            if small == 2:
                return total
        else:
            small = 0
    raise ConvergenceError(f"J series did not converge in {tol.max_terms} terms (z={z})")


def modified_bessel_I(nu: float, z: float, tol: SeriesTolerance = DEFAULT_TOL) -> float:
    """Modified Bessel function of the first kind I_nu(z) by its ascending series."""
    if not nu > -1:
        raise DomainError("nu must exceed -1")
    if z < 0:
        raise DomainError("z must be nonnegative")
    if z == 0:
        if nu == 0:
            return 1.0
        return 0.0 if nu > 0 else math.inf
    half = 0.5 * z
    term = math.exp(nu * math.log(half) - math.lgamma(nu + 1))
    total, comp = term, 0.0
    small = 0
    for n in range(tol.max_terms):
        term *= half * half / ((n + 1) * (n + 1 + nu))
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        if term <= tol.rel_tol * total:
            small += 1
            if small == 2:
                return total
        else:
            small = 0
    raise ConvergenceError(f"I series did not converge in {tol.max_terms} terms (z={z})")


def log_bessel_i_scaled(nu: float, z) -> np.ndarray:
    """log(exp(-z) I_nu(z)) for an array of z > 0, by log-sum-exp of the series.

    Stable for large z, where I_nu itself overflows.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    out = np.empty_like(z)
    pos = z > 0
    out[~pos] = 0.0 if nu == 0 else (-np.inf if nu > 0 else np.inf)
    if pos.any():
        zp = z[pos]
        zmax = float(zp.max())
        n = np.arange(int(0.5 * zmax + 12 * math.sqrt(zmax) + 60))[:, None]
        logt = (2 * n + nu) * np.log(0.5 * zp)[None, :] - gammaln(n + 1) - gammaln(n + nu + 1)
        peak = logt.max(axis=0)
        out[pos] = peak + np.log(np.exp(logt - peak).sum(axis=0)) - zp
    return out
