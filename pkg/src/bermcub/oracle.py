"""Brute-force references: full path enumeration, a grid recursion for first
passage, and Monte Carlo stopping estimators with per-path seeded streams.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .bermudan import PricingJob
from .cubature import CubatureFormula
from .errors import ResourceError
from .model import MarketModel, PayoffSpec, increment_distribution

DEFAULT_TREE_BUDGET = 1_000_000


# ------------------------------------------------------------- naive tree

@dataclass
class NaiveTree:
    int_sums: np.ndarray     # (m^N, d) integer point sums per path
    weights: np.ndarray      # (m^N,) path weights

    @property
    def paths(self) -> int:
        return len(self.weights)


def naive_tree(formula: CubatureFormula, N: int, budget: int = DEFAULT_TREE_BUDGET) -> NaiveTree:
    m = formula.size
    if m ** N > budget:
        raise ResourceError(f"{m}^{N} paths exceed the budget of {budget}")
    sums = np.zeros((1, formula.dim), dtype=np.int64)
    w = np.ones(1)
    for _ in range(N):
        sums = (sums[:, None, :] + formula.int_points[None, :, :]).reshape(-1, formula.dim)
        w = (w[:, None] * formula.weights[None, :]).ravel()
    return NaiveTree(sums, w)


def naive_tree_price(job: PricingJob, budget: int = DEFAULT_TREE_BUDGET, steps: int | None = None) -> float:
    """Bermudan recursion over every path, no recombination.

    ``steps`` overrides the job's step count (``0`` returns g(x0)).
    """
    N = job.steps if steps is None else steps
    f, m = job.formula, job.model
    if f.size ** N > budget:
        raise ResourceError(f"{f.size}^{N} paths exceed the budget of {budget}")
    h = job.maturity / max(N, 1)
    inc = m.drift * h + math.sqrt(h) * m.vol * f.points
    disc = math.exp(-m.rate * h)
    x0 = np.asarray(job.x0)
    levels = [x0[None, :]]
    for _ in range(N):
        levels.append((levels[-1][:, None, :] + inc[None, :, :]).reshape(-1, f.dim))
    v = job.payoff.evaluate(levels[N])
    for k in range(N - 1, -1, -1):
        cont = disc * (v.reshape(-1, f.size) @ f.weights)
        v = np.maximum(job.payoff.evaluate(levels[k]), cont) if k % job.exercise_every == 0 else cont
    return float(v[0])


# ------------------------------------------------------------ random streams

def path_generator(seed: int, path: int) -> np.random.Generator:
    """Counter-based stream for one path, keyed by (seed, path index)."""
    return np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), path]))


@dataclass
class MCResult:
    mean: float
    se: float
    paths: int
    truncation_bound: float = 0.0
    batch_means: np.ndarray | None = None


def _summarise(samples, batches=10, bound=0.0):
    samples = np.asarray(samples, float)
    n = len(samples)
    se = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    bm = np.array([b.mean() for b in np.array_split(samples, batches)]) if n >= batches else None
    return MCResult(float(samples.mean()), se, n, bound, bm)


def _increment_sampler(model: MarketModel, s: float, formula: CubatureFormula | None):
    if formula is None:
        law = increment_distribution(model, s)
        return lambda rng, n: law.sample(rng, n)
    inc = model.drift * s + math.sqrt(s) * model.vol * formula.points
    return lambda rng, n: inc[rng.choice(formula.size, size=n, p=formula.weights)]


def horizon_steps(rate: float, s: float, strike: float, bias: float = 1e-6) -> int:
    """Steps so that K e^{-rT} < bias."""
    T = math.log(max(strike, 1e-300) / bias) / rate
    return max(1, math.ceil(T / s))


def mc_stopping_value(model: MarketModel, payoff: PayoffSpec, region, s: float, x0,
                      paths: int = 10_000, seed: int = 0, horizon: float | None = None,
                      formula: CubatureFormula | None = None) -> MCResult:
    """Estimate E[e^{-r tau} g(X_tau)] with tau the first grid time in the region.

    ``region`` maps sample points (..., d) to booleans.  Paths that do not
    enter the region before the horizon contribute 0; that bias is at most
    K e^{-rT}, reported as ``truncation_bound``.
    """
    x0 = np.atleast_1d(np.asarray(x0, float))
    if horizon is None:
        n_steps = horizon_steps(model.rate, s, payoff.strike)
    else:
        n_steps = max(0, int(round(horizon / s)))
    bound = payoff.strike * math.exp(-model.rate * n_steps * s)
    if region(x0[None, :])[0]:
        return MCResult(float(payoff.evaluate(x0)), 0.0, paths, 0.0,
                        np.full(10, float(payoff.evaluate(x0))))
    draw = _increment_sampler(model, s, formula)
    out = np.zeros(paths)
    for p in range(paths):
        rng = path_generator(seed, p)
        x = x0 + np.cumsum(draw(rng, n_steps), axis=0)
        hit = np.flatnonzero(region(x))
        if len(hit):
            n = hit[0] + 1
            out[p] = math.exp(-model.rate * n * s) * payoff.evaluate(x[hit[0]])
    return _summarise(out, bound=bound)


def mc_first_passage(model: MarketModel, region, s: float, paths: int = 20_000,
                     seed: int = 0, max_steps: int | None = None, eps: float = 1e-10) -> MCResult:
    """Estimate xi = E[q^tau] for the random walk X_{ns} started at 0, q = e^{-rs}."""
    q = math.exp(-model.rate * s)
    n_steps = max_steps or max(1, math.ceil(math.log(eps) / math.log(q)))
    draw = _increment_sampler(model, s, None)
    inside = region.contains if hasattr(region, "contains") else region
    out = np.zeros(paths)
    for p in range(paths):
        rng = path_generator(seed, p)
        x = np.cumsum(draw(rng, n_steps), axis=0)
        hit = np.flatnonzero(inside(x))
        if len(hit):
            out[p] = q ** (hit[0] + 1)
    return _summarise(out, bound=q ** (n_steps + 1))


# ------------------------------------------------------------ grid recursion

@dataclass
class DPResult:
    xi: float
    dx: float
    refinement_delta: float     # |xi(dx) - xi(2 dx)|
    steps: int
    lost_mass: float            # survivor mass pushed past the upper edge


def _dp_once(law, q, anchor, dx, width, n_steps, kernel_half):
    M = max(2, int(math.ceil(width / dx)))
    edges = anchor + dx * np.arange(M + 1)
    centres = edges[:-1] + 0.5 * dx
    w = law.cdf(edges[1:]) - law.cdf(edges[:-1])           # first step from 0
    xi = q * float(np.ravel(law.cdf(anchor))[0])
    j = np.arange(-kernel_half, kernel_half + 1)
    kern = law.cdf((j + 0.5) * dx) - law.cdf((j - 0.5) * dx)
    absorb = law.cdf(anchor - centres)
    lost = 0.0
    qn = q
    for _ in range(2, n_steps + 1):
        qn *= q
        xi += qn * float(w @ absorb)
        full = fftconvolve(w, kern)                       # index i + j + kernel_half
        nxt = full[kernel_half:kernel_half + M]
        lost += float(full[kernel_half + M:].sum())
        w = np.maximum(nxt, 0.0)
    return xi, lost


def dp_first_passage_1d(model: MarketModel, s: float, anchor: float = 0.0,
                        dx: float | None = None, refine_tol: float = 1e-4,
                        eps: float = 1e-9, max_refine: int = 6) -> DPResult:
    """xi = sum_n q^n P[first entry into (-inf, anchor] at step n], q = e^{-rs}.

    Survivor mass lives on cells above the anchor and is pushed through the
    increment law each step; mass landing at or below the anchor is
    absorbed.  The cell width is halved until two successive estimates differ
    by less than ``refine_tol``, and the last two are Richardson-combined.
    """
    if model.dim != 1:
        raise ValueError("grid recursion is one-dimensional")
    law = increment_distribution(model, s)
    q = math.exp(-model.rate * s)
    n_steps = max(2, math.ceil(math.log(eps) / math.log(q)))
    sd = float(math.sqrt(law.covariance[0, 0]))
    mean = float(law.mean[0])
    width = max(0.0, mean) * n_steps + 12.0 * sd * math.sqrt(n_steps) + abs(anchor) + 12 * sd
    if dx is None:
        dx = sd / 8.0
    kernel_half_for = lambda d: int(math.ceil((abs(mean) + 12.0 * sd) / d))
    prev, _ = _dp_once(law, q, anchor, dx, width, n_steps, kernel_half_for(dx))
    for _ in range(max_refine):
        dx /= 2
        cur, lost = _dp_once(law, q, anchor, dx, width, n_steps, kernel_half_for(dx))
        delta = abs(cur - prev)
        est = 2 * cur - prev
        prev = cur
        if delta < refine_tol:
            break
    return DPResult(est, dx, delta, n_steps, lost)
