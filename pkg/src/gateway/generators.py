"""Exact operator layer.

Polynomial actions of the squared Bessel generator ``x f'' + beta f'``, the
thinning generator ``-x f'`` and their Laguerre combination, the matching
difference operators on sequences, and the transform

    nabla f(n) = d^n/dx^n (e^x f(x)) at x = 0

that carries one family into the other. With integer or Fraction inputs all
arithmetic is exact.

Polynomials can be read in two ways. By default a :class:`PolySeq` ``P`` stands
for the function ``x -> P(x)``. With ``pe=True`` it stands for
``x -> P(x) e^{-x}``, the image of a finitely supported sequence under the
Poisson kernel; in that reading ``nabla`` returns ``(n! a_n)_n`` and inverts
:func:`lambda_inverse` exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import DomainError

__all__ = [
    "FiniteSeq",
    "PolySeq",
    "TridiagGenerator",
    "D_poly",
    "G_beta_poly",
    "bbD_apply",
    "bbG_apply",
    "birth_death_rates",
    "build_generator",
    "laguerre_generator_poly",
    "laguerre_seq_apply",
    "lambda_inverse",
    "nabla",
]

NABLA_GUARD = 8
GENERATOR_KINDS = ("bessel_bd", "laguerre_bd")


def _trim(values: Sequence) -> tuple:
    vals = list(values)
    while vals and vals[-1] == 0:
        vals.pop()
    return tuple(vals)


@dataclass(frozen=True)
class PolySeq:
    """Polynomial stored by coefficients, ``coeffs[n]`` multiplying x^n."""

    coeffs: tuple

    def __init__(self, coeffs: Sequence):
        object.__setattr__(self, "coeffs", _trim(coeffs))

    @classmethod
    def monomial(cls, d: int, one=Fraction(1)) -> "PolySeq":
        return cls([0] * d + [one])

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, x):
        acc = 0
        for c in reversed(self.coeffs):
            acc = acc * x + c
        return acc

    def __getitem__(self, k: int):
        return self.coeffs[k] if 0 <= k < len(self.coeffs) else 0

    def __add__(self, other: "PolySeq") -> "PolySeq":
        n = max(len(self.coeffs), len(other.coeffs))
        return PolySeq([self[k] + other[k] for k in range(n)])

    def __sub__(self, other: "PolySeq") -> "PolySeq":
        return self + other.scale(-1)

    def scale(self, c) -> "PolySeq":
        return PolySeq([c * a for a in self.coeffs])

    def mul_x(self) -> "PolySeq":
        return PolySeq([0, *self.coeffs]) if self.coeffs else self

    def derivative(self) -> "PolySeq":
        return PolySeq([k * self.coeffs[k] for k in range(1, len(self.coeffs))])


@dataclass(frozen=True)
class FiniteSeq:
    """Sequence on the nonnegative integers, zero beyond ``len(values)``."""

    values: tuple

    def __init__(self, values: Sequence):
        object.__setattr__(self, "values", tuple(values))

    @property
    def support_bound(self) -> int:
        return len(self.values)

    def __getitem__(self, n: int):
        return self.values[n] if 0 <= n < len(self.values) else 0

    def __len__(self) -> int:
        return len(self.values)


def nabla(P: PolySeq, *, pe: bool = False, guard: int = NABLA_GUARD) -> FiniteSeq:
    """Apply nabla to a polynomial, returning entries n = 0 .. deg + guard.

    Plain reading: n -> sum_k C(n, k) k! P_k. With ``pe=True`` the input is
    P e^{-x} and the output is n -> n! P_n.
    """
    length = max(P.degree, 0) + guard + 1
    if pe:
        return FiniteSeq([math.factorial(n) * P[n] for n in range(length)])
    out = []
    for n in range(length):
        acc = 0
        for k in range(min(n, P.degree) + 1):
            acc += math.comb(n, k) * math.factorial(k) * P[k]
        out.append(acc)
    return FiniteSeq(out)


def lambda_inverse(g: FiniteSeq) -> PolySeq:
    """Polynomial part of the Poisson-kernel image: coefficients g(n)/n!."""
    return PolySeq([Fraction(v) / math.factorial(n) if isinstance(v, (int, Fraction)) else v / math.factorial(n)
                    for n, v in enumerate(g.values)])


def _d(P: PolySeq, pe: bool) -> PolySeq:
    # derivative in the chosen reading: (P e^{-x})' = (P' - P) e^{-x}
    return P.derivative() - P if pe else P.derivative()


def G_beta_poly(beta, P: PolySeq, *, pe: bool = False) -> PolySeq:
    """Squared Bessel generator x f'' + beta f' on a polynomial."""
    d1 = _d(P, pe)
    d2 = _d(d1, pe)
    return d2.mul_x() + d1.scale(beta)


def D_poly(P: PolySeq, *, pe: bool = False) -> PolySeq:
    """Dilation generator -x f'."""
    return _d(P, pe).mul_x().scale(-1)


def laguerre_generator_poly(beta, sigma, P: PolySeq, *, pe: bool = False) -> PolySeq:
    """Laguerre operator sigma x f'' + (sigma beta - x) f'."""
    d1 = _d(P, pe)
    d2 = _d(d1, pe)
    return d2.mul_x().scale(sigma) + d1.scale(sigma * beta) - d1.mul_x()


def bbG_apply(beta, g: FiniteSeq, alpha=1) -> FiniteSeq:
    """Birth-death difference operator.

    n -> (n+beta) g(n+1) - alpha (2n+beta) g(n) + alpha^2 n g(n-1).
    ``alpha = 1`` is the Markov generator; other values give the non-Markov
    family. The output support grows by one.
    """
    out = []
    for n in range(len(g) + 1):
        out.append((n + beta) * g[n + 1] - alpha * (2 * n + beta) * g[n] + alpha * alpha * n * g[n - 1])
    return FiniteSeq(out)


def bbD_apply(g: FiniteSeq) -> FiniteSeq:
    """Thinning generator n -> n (g(n-1) - g(n))."""
    return FiniteSeq([n * (g[n - 1] - g[n]) for n in range(len(g))])


def laguerre_seq_apply(beta, sigma, g: FiniteSeq) -> FiniteSeq:
    """Discrete Laguerre generator sigma * bbG + bbD."""
    a = bbG_apply(beta, g)
    b = bbD_apply(g)
    return FiniteSeq([sigma * a[n] + b[n] for n in range(len(a))])


def birth_death_rates(kind: str, beta, sigma, n: int) -> tuple:
    """(birth, death) rates at state n, with no truncation."""
    if kind == "bessel_bd":
        return n + beta, n
    if kind == "laguerre_bd":
        return sigma * (n + beta), (sigma + 1) * n
    raise DomainError(f"unknown generator kind {kind!r}")


@dataclass(frozen=True)
class TridiagGenerator:
    """Birth-death generator truncated to states 0 .. size-1.

    ``sub[m]``, ``diag[m]`` and ``sup[m]`` are the (m, m-1), (m, m) and
    (m, m+1) entries. The last row drops its birth term. With the default
    reflecting boundary the diagonal is adjusted so the row still sums to
    zero; with ``absorbing_tail`` the lost rate is left as a leak.
    """

    kind: str
    beta: object
    sigma: object
    size: int
    sub: tuple
    diag: tuple
    sup: tuple
    absorbing_tail: bool = False
    _dense: np.ndarray | None = field(default=None, repr=False, compare=False)

    def row(self, m: int) -> tuple:
        return self.sub[m], self.diag[m], self.sup[m]

    def matvec(self, g: Sequence) -> list:
        """Right action (G g)(m), exact for rational inputs."""
        n = self.size
        out = []
        for m in range(n):
            acc = self.diag[m] * g[m]
            if m > 0:
                acc += self.sub[m] * g[m - 1]
            if m < n - 1:
                acc += self.sup[m] * g[m + 1]
            out.append(acc)
        return out

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Float copies of (sub, diag, sup)."""
        return (np.array(self.sub, dtype=float), np.array(self.diag, dtype=float), np.array(self.sup, dtype=float))

    def to_dense(self) -> np.ndarray:
        sub, diag, sup = self.arrays()
        m = np.diag(diag)
        m += np.diag(sub[1:], -1)
        m += np.diag(sup[:-1], 1)
        return m


def build_generator(kind: str, beta, sigma=1, N: int = 2, *, absorbing_tail: bool = False) -> TridiagGenerator:
    """Truncated generator of the squared-Bessel birth-death chain
    (``bessel_bd``: rates n+beta up, n down) or the discrete Laguerre chain
    (``laguerre_bd``: sigma(n+beta) up, (sigma+1)n down)."""
    if kind not in GENERATOR_KINDS:
        raise DomainError(f"unknown generator kind {kind!r}")
    if N < 2:
        raise DomainError("generator size must be at least 2")
    if beta < 0:
        raise DomainError("beta must be nonnegative")
    if kind == "laguerre_bd" and not sigma > 0:
        raise DomainError("laguerre_bd needs sigma > 0")
    sub, diag, sup = [], [], []
    for m in range(N):
        up, down = birth_death_rates(kind, beta, sigma, m)
        sub.append(down)
        diag.append(-(up + down))
        sup.append(up)
    if not absorbing_tail:
        diag[-1] = -sub[-1]
    sup[-1] = 0 * sup[-1]
    return TridiagGenerator(kind, beta, sigma, N, tuple(sub), tuple(diag), tuple(sup), absorbing_tail)
