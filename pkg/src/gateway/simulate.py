"""Exact samplers for the Bessel, Laguerre and birth-death processes.

Every continuous sampler here is a Poisson-gamma mixture or a chain of
kernels that reproduces the target law exactly:

* ``Q_t(x, .)`` is t Gamma(N + beta) with N ~ Poisson(x / t).
* Pipeline: Poisson(x/s), birth-death for t/s, then s Gamma(. + beta) gives
  ``Q_{s+t}``.
* Laguerre ``K_t(x, .)`` is tau Gamma(N + beta) with N ~ Poisson(x e^{-t}/tau),
  where tau = sigma (1 - e^{-t}).
* Factorized Laguerre: Poisson(a x), discrete Laguerre with scale sigma a for
  t - t0, then the gamma kernel with rate 1/sigma + a, where
  t0 = ln(1 + 1/(sigma a)).

Birth-death chains are simulated without truncation: rates are linear in the
state and computed on the fly.
"""

from __future__ import annotations

import csv
import math
from contextlib import contextmanager
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .errors import ConvergenceError, DomainError
from .generators import birth_death_rates
from .kernels import RngStream, _gen, gamma_expectation
from .semigroups import BesselLaw, bd_pgf, bd_transition_row, bessel_laplace

__all__ = [
    "JUMP_GUARD",
    "METHODS",
    "PROCESSES",
    "PathSample",
    "SamplerConfig",
    "SweepRow",
    "approximation_sweep",
    "bd_endpoint_sample",
    "bd_path",
    "bessel_exact_sample",
    "bessel_pipeline_sample",
    "branching_sample",
    "laguerre_bd_exact_sample",
    "laguerre_exact_sample",
    "sample_process",
    "write_samples_csv",
]

JUMP_GUARD = 10**7
METHODS = ("mixture", "pipeline", "compose", "path")
PROCESSES = ("bessel", "bd-bessel", "laguerre", "bd-laguerre")
_KIND = {"bd-bessel": "bessel_bd", "bd-laguerre": "laguerre_bd", "bessel_bd": "bessel_bd", "laguerre_bd": "laguerre_bd"}


@dataclass(frozen=True)
class PathSample:
    """Jump epochs and states of one birth-death trajectory on [0, horizon]."""

    times: tuple
    states: tuple
    horizon: float

    def __post_init__(self):
        if len(self.times) != len(self.states) or not self.times or self.times[0] != 0:
            raise ValueError("path needs matching times/states starting at time 0")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("jump times must be strictly increasing")
        if any(abs(b - a) != 1 for a, b in zip(self.states, self.states[1:])):
            raise ValueError("consecutive states must differ by one")
        if self.times[-1] > self.horizon:
            raise ValueError("last epoch exceeds the horizon")

    @property
    def endpoint(self) -> int:
        return self.states[-1]

    def holding_times(self) -> list[tuple[int, float]]:
        """(state, holding time) for every completed sojourn."""
        return [(s, b - a) for s, a, b in zip(self.states, self.times, self.times[1:])]


@dataclass(frozen=True)
class SamplerConfig:
    n_samples: int
    rng: RngStream
    method: str = "mixture"

    def __post_init__(self):
        if self.n_samples < 1:
            raise DomainError("n_samples must be at least 1")
        if self.method not in METHODS:
            raise DomainError(f"unknown method {self.method!r}; expected one of {METHODS}")


def _check_kind(kind: str) -> str:
    if kind not in _KIND:
        raise DomainError(f"unknown chain kind {kind!r}")
    return _KIND[kind]


def bd_path(kind: str, beta: float, sigma: float, n0: int, horizon: float, rng) -> PathSample:
    """Gillespie path: hold an Exp(total rate) time, then step up with
    probability birth/total and down otherwise."""
    kind = _check_kind(kind)
    if horizon < 0 or n0 < 0 or beta < 0:
        raise DomainError("need horizon >= 0, n0 >= 0, beta >= 0")
    g = _gen(rng)
    times, states = [0.0], [int(n0)]
    t, n = 0.0, int(n0)
    for _ in range(JUMP_GUARD):
        b, d = birth_death_rates(kind, beta, sigma, n)
        total = b + d
        if total == 0:
            break
        t += g.exponential(1.0 / total)
        if t > horizon:
            break
        n += 1 if g.random() * total < b else -1
        times.append(t)
        states.append(n)
    else:
        raise ConvergenceError(f"more than {JUMP_GUARD} jumps; parameters look pathological")
    return PathSample(tuple(times), tuple(states), float(horizon))


def bd_endpoint_sample(kind: str, beta: float, sigma: float, n0, horizon: float, rng, size: int | None = None) -> np.ndarray:
    """Endpoints of independent Gillespie paths, advanced together.

    ``n0`` may be a scalar (broadcast to ``size``) or an array of starting states.
    """
    kind = _check_kind(kind)
    if horizon < 0 or beta < 0:
        raise DomainError("need horizon >= 0, beta >= 0")
    g = _gen(rng)
    n = np.array(np.broadcast_to(n0, (size,)) if size is not None else n0, dtype=np.int64).ravel().copy()
    if np.any(n < 0):
        raise DomainError("starting states must be nonnegative")
    t = np.zeros(n.shape)
    active = np.ones(n.shape, dtype=bool)
    steps = 0
    while active.any():
        steps += 1
        if steps > JUMP_GUARD:
            raise ConvergenceError(f"more than {JUMP_GUARD} jumps; parameters look pathological")
        idx = np.flatnonzero(active)
        b, d = birth_death_rates(kind, beta, sigma, n[idx])
        total = b + d
        alive = total > 0
        active[idx[~alive]] = False
        idx, b, total = idx[alive], b[alive], total[alive]
        t[idx] += g.exponential(1.0, size=len(idx)) / total
        done = t[idx] > horizon
        active[idx[done]] = False
        idx, b, total = idx[~done], b[~done], total[~done]
        up = g.random(len(idx)) * total < b
        n[idx] += np.where(up, 1, -1)
    return n


def branching_sample(beta: float, tau: float, v: float, n, rng, size: int | None = None) -> np.ndarray:
    """K + NegBin(K + beta, tau/(1+tau)) with K ~ Binomial(n, v/(1+tau)).

    With (tau, v) = (t, 1) this is the birth-death law at time t; with
    (sigma(1-e^{-t}), e^{-t}) it is the discrete Laguerre law.
    """
    g = _gen(rng)
    k = g.binomial(n, v / (1.0 + tau), size=size)
    r = k + beta
    out = np.array(k, dtype=np.int64)
    if tau > 0:
        pos = r > 0
        lam = g.gamma(np.where(pos, r, 1.0)) * tau
        out = out + np.where(pos, g.poisson(lam), 0)
    return out


def bessel_exact_sample(beta: float, t: float, x: float, rng, size: int | None = None):
    """Q_t(x, .) as t Gamma(N + beta), N ~ Poisson(x/t); 0 when N + beta = 0."""
    if not t > 0 or np.any(np.asarray(x) < 0) or beta < 0:
        raise DomainError("need t > 0, x >= 0, beta >= 0")
    g = _gen(rng)
    n = g.poisson(np.asarray(x, dtype=float) / t, size=size)
    return _gamma_or_zero(g, n + beta, size) * t


def _gamma_or_zero(g, shape, size):
    shape = np.asarray(shape, dtype=float)
    out = g.gamma(np.where(shape > 0, shape, 1.0), size=size)
    return np.where(shape > 0, out, 0.0)


def bessel_pipeline_sample(beta: float, s: float, t: float, x: float, rng, size: int | None = None):
    """Q_{s+t}(x, .): Poisson(x/s), birth-death for t/s, then s Gamma(. + beta)."""
    if not s > 0 or t < 0 or np.any(np.asarray(x) < 0):
        raise DomainError("need s > 0, t >= 0, x >= 0")
    g = _gen(rng)
    n = g.poisson(np.asarray(x, dtype=float) / s, size=size)
    if t > 0:
        n = bd_endpoint_sample("bessel_bd", beta, 1.0, n, t / s, g).reshape(np.shape(n))
    return _gamma_or_zero(g, n + beta, size) * s


def _default_split(T: float) -> tuple[float, float]:
    s = min(1.0, T)
    return s, T - s


def laguerre_exact_sample(beta: float, sigma: float, t: float, x: float, rng, size: int | None = None,
                          *, method: str = "mixture", aux: float = 1.0):
    """K_t(x, .) for the Laguerre diffusion with scale sigma.

    ``mixture``: tau Gamma(Poisson(x e^{-t}/tau) + beta), tau = sigma(1-e^{-t}).
    ``compose``: e^{-t} times a Q_{sigma(e^t - 1)}(x, .) draw.
    ``pipeline``: Poisson(aux x), discrete Laguerre with scale sigma*aux for
    t - t0, then Gamma(. + beta) with rate 1/sigma + aux, t0 = ln(1 + 1/(sigma aux)).
    ``aux`` is raised when needed so that t0 = t/2 fits inside the horizon.
    """
    if not beta > 0 or not sigma > 0 or t < 0 or np.any(np.asarray(x) < 0):
        raise DomainError("need beta, sigma > 0 and t, x >= 0")
    g = _gen(rng)
    if t == 0:
        return np.array(np.broadcast_to(x, (size,)) if size is not None else x, dtype=float)
    if method == "mixture":
        tau = sigma * -math.expm1(-t)
        n = g.poisson(x * math.exp(-t) / tau, size=size)
        return g.gamma(n + beta) * tau
    if method == "compose":
        return math.exp(-t) * bessel_exact_sample(beta, sigma * math.expm1(t), x, g, size)
    if method == "pipeline":
        t0 = math.log1p(1.0 / (sigma * aux))
        if t0 > t:
            aux = 1.0 / (sigma * math.expm1(t / 2))
            t0 = t / 2
        n = g.poisson(aux * x, size=size)
        m = laguerre_bd_exact_sample(beta, sigma * aux, t - t0, n, g, method="mixture")
        return g.gamma(m + beta) / (1.0 / sigma + aux)
    raise DomainError(f"method {method!r} is not available for the Laguerre diffusion")


def laguerre_bd_exact_sample(beta: float, sigma: float, t: float, n, rng, size: int | None = None,
                             *, method: str = "mixture"):
    """Discrete Laguerre kernel at time t from n.

    ``path``: Gillespie with rates sigma(n + beta) up and (1 + sigma) n down.
    ``mixture``: closed-form branching draw.
    ``compose``: birth-death law for u = sigma(e^t - 1), then Binomial(., e^{-t}).
    ``pipeline``: gamma kernel (rate 1 + 1/sigma), Laguerre diffusion with
    scale sigma for t - t0, then Poisson; t0 = ln(1 + 1/sigma). Horizons
    shorter than t0 fall back to ``path``.
    """
    if not beta > 0 or not sigma > 0 or t < 0:
        raise DomainError("need beta, sigma > 0 and t >= 0")
    g = _gen(rng)
    if size is not None:
        n = np.broadcast_to(n, (size,))
    n = np.asarray(n, dtype=np.int64)
    if t == 0:
        return n.copy()
    if method == "mixture":
        return branching_sample(beta, sigma * -math.expm1(-t), math.exp(-t), n, g)
    if method == "compose":
        m = branching_sample(beta, sigma * math.expm1(t), 1.0, n, g)
        return g.binomial(m, math.exp(-t))
    t0 = math.log1p(1.0 / sigma)
    if method == "path" or (method == "pipeline" and t < t0):
        return bd_endpoint_sample("laguerre_bd", beta, sigma, n, t, g).reshape(n.shape)
    if method == "pipeline":
        y = g.gamma(n + beta) / (1.0 + 1.0 / sigma)
        if t > t0:
            y = laguerre_exact_sample(beta, sigma, t - t0, y, g, method="mixture")
        return g.poisson(y)
    raise DomainError(f"unknown method {method!r}")


def _bd_bessel_sample(beta, t, n, g, size, method):
    if method == "path" or (method == "pipeline" and t < 1):
        return bd_endpoint_sample("bessel_bd", beta, 1.0, n, t, g, size)
    if method == "mixture":
        return branching_sample(beta, t, 1.0, n, g, size)
    if method == "compose":
        half = branching_sample(beta, t / 2, 1.0, n, g, size)
        return branching_sample(beta, t / 2, 1.0, half, g)
    if method == "pipeline":
        # gamma kernel, Bessel for t - 1, then Poisson
        y = _gamma_or_zero(g, np.broadcast_to(n, (size,)) + beta, size)
        if t > 1:
            y = _bessel_from(beta, t - 1, y, g)
        return g.poisson(y)
    raise DomainError(f"unknown method {method!r}")


def _bessel_from(beta, t, x, g):
    n = g.poisson(x / t)
    return _gamma_or_zero(g, n + beta, None) * t


def sample_process(process: str, method: str, *, beta: float, sigma: float = 1.0, t: float, x0: float,
                   n: int, rng) -> np.ndarray:
    """Dispatch used by the CLI: ``n`` draws of ``process`` at time t from x0."""
    if process not in PROCESSES:
        raise DomainError(f"unknown process {process!r}; expected one of {PROCESSES}")
    if method not in METHODS:
        raise DomainError(f"unknown method {method!r}; expected one of {METHODS}")
    g = _gen(rng)
    if process == "bessel":
        if method == "path":
            raise DomainError("the Bessel diffusion has no jump-path sampler; use mixture, pipeline or compose")
        if method == "mixture":
            return bessel_exact_sample(beta, t, x0, g, n)
        if method == "compose":
            half = bessel_exact_sample(beta, t / 2, x0, g, n)
            return _bessel_from(beta, t / 2, half, g)
        s, rest = _default_split(t)
        return bessel_pipeline_sample(beta, s, rest, x0, g, n)
    if process == "laguerre":
        if method == "path":
            raise DomainError("the Laguerre diffusion has no jump-path sampler; use mixture, pipeline or compose")
        return laguerre_exact_sample(beta, sigma, t, x0, g, n, method=method)
    if float(x0) != int(x0) or x0 < 0:
        raise DomainError("birth-death chains start from a nonnegative integer")
    if process == "bd-bessel":
        return _bd_bessel_sample(beta, t, int(x0), g, n, method)
    return laguerre_bd_exact_sample(beta, sigma, t, int(x0), g, n, method=method)


def sample_batched(config: SamplerConfig, draw: Callable[[np.random.Generator, int], np.ndarray],
                   *, chunk: int = 50_000, jobs: int = 1) -> np.ndarray:
    """Draw ``config.n_samples`` values in fixed-size chunks, one derived stream
    per chunk, so the output depends on the seed but not on ``jobs``."""
    sizes = [min(chunk, config.n_samples - i) for i in range(0, config.n_samples, chunk)]
    streams = [config.rng.derive(f"chunk{i}") for i in range(len(sizes))]
    work = lambda i: np.asarray(draw(streams[i].generator, sizes[i]))
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            parts = list(ex.map(work, range(len(sizes))))
    else:
        parts = [work(i) for i in range(len(sizes))]
    return np.concatenate(parts)


@contextmanager
def _sink(path):
    # a path, or an open text stream left open for the caller
    if hasattr(path, "write"):
        yield path
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            yield fh


def write_samples_csv(path, values: Sequence) -> None:
    """CSV with header ``index,value``; integers as is, reals as %.17e."""
    arr = np.asarray(values)
    integer = np.issubdtype(arr.dtype, np.integer)
    with _sink(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "value"])
        for i, v in enumerate(arr):
            w.writerow([i, int(v) if integer else f"{float(v):.17e}"])


# ------------------------------------------------------------- approximation

@dataclass(frozen=True)
class SweepRow:
    eps: float
    value: float
    error: float
    target: float
    shifted: float
    identity_gap: float


def _composed_value(beta, t, x, eps, f, lam):
    """Poisson(x/eps) -> birth-death for t/eps -> eps Gamma(. + beta), applied to f."""
    mu = x / eps
    nmax = int(mu + 12 * math.sqrt(mu) + 40) if x > 0 else 0
    ns = np.arange(nmax + 1)
    pw = stats.poisson.pmf(ns, x / eps) if x > 0 else np.array([1.0])
    if lam is not None:
        # gamma transform of e_{-lam}: (1 + lam eps)^{-(m + beta)}, summed against the row via the pgf
        s = 1.0 / (1.0 + lam * eps)
        inner = s**beta * bd_pgf(beta, t / eps, s, ns.astype(float))
        return math.fsum(pw * inner)
    total = []
    for n, p in zip(ns, pw):
        if p < 1e-18:
            continue
        M = int(stats.nbinom.isf(1e-15, n + beta, 1 / (1 + t / eps))) + n + 10
        row = bd_transition_row(beta, t / eps, int(n), M)
        vals = np.array([gamma_expectation(f, m + beta, 1.0 / eps) if row.weights[m] > 1e-20 else 0.0
                         for m in range(M)])
        total.append(p * float(np.dot(row.weights, vals)))
    return math.fsum(total)


def approximation_sweep(beta: float, t: float, x: float, f: Callable | None, eps_list: Sequence[float],
                        *, laplace_lambda: float | None = None) -> list[SweepRow]:
    """Composed birth-death approximation of Q_t f for each eps.

    ``value`` is Lambda_{1/eps} Q^{bd}_{t/eps} tilde-Lambda_{1/eps} f (x),
    evaluated deterministically; ``error`` is |value - Q_t f(x)|,
    ``shifted`` is Q_{t+eps} f(x) and ``identity_gap`` is |value - shifted|,
    which is zero up to rounding. Pass ``laplace_lambda`` for f = e^{-lam y}
    to use closed forms throughout.
    """
    if not beta > 0 or not t > 0 or x < 0:
        raise DomainError("need beta > 0, t > 0, x >= 0")
    if f is None and laplace_lambda is None:
        raise DomainError("give f or laplace_lambda")
    if laplace_lambda is not None:
        lam = float(laplace_lambda)
        f = lambda y: np.exp(-lam * np.asarray(y))
        q = lambda s: bessel_laplace(beta, s, lam, x)
    else:
        lam = None
        q = lambda s: BesselLaw(beta, s, x).expect(f)
    target = q(t)
    rows = []
    for eps in eps_list:
        if not eps > 0:
            raise DomainError("eps must be positive")
        value = _composed_value(beta, t, x, eps, f, lam)
        shifted = q(t + eps)
        rows.append(SweepRow(float(eps), value, abs(value - target), target, shifted, abs(value - shifted)))
    return rows
