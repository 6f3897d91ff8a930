"""Bermudan pricing by backward induction on the recombined lattice."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .cubature import CubatureFormula
from .lattice import DEFAULT_NODE_BUDGET, LevelMap, build_levels
from .model import BlackScholes, PayoffKind, PayoffSpec


@dataclass(frozen=True)
class PricingJob:
    model: BlackScholes
    payoff: PayoffSpec
    x0: tuple                 # log start prices
    maturity: float
    steps: int
    formula: CubatureFormula
    exercise_every: int = 1   # exercise allowed at levels divisible by this

    def __post_init__(self):
        x0 = tuple(float(v) for v in np.atleast_1d(self.x0))
        object.__setattr__(self, "x0", x0)
        if not isinstance(self.model, BlackScholes):
            raise ValueError("lattice pricing needs a Black-Scholes model")
        d = self.model.dim
        if len(x0) != d or self.formula.dim != d:
            raise ValueError(
                f"dimension mismatch: model {d}, x0 {len(x0)}, formula {self.formula.dim}")
        self.payoff.check_dim(d)
        if not self.maturity > 0:
            raise ValueError(f"maturity must be positive, got {self.maturity}")
        if self.steps < 1:
            raise ValueError(f"need at least one step, got {self.steps}")
        if self.exercise_every < 1 or self.steps % self.exercise_every:
            raise ValueError("exercise_every must divide the number of steps")

    @property
    def h(self) -> float:
        return self.maturity / self.steps

    @property
    def discount(self) -> float:
        return math.exp(-self.model.rate * self.h)

    @classmethod
    def from_prices(cls, model, payoff, prices, maturity, steps, formula, **kw):
        return cls(model, payoff, tuple(np.log(np.asarray(prices, float))),
                   maturity, steps, formula, **kw)


@dataclass
class PricingResult:
    price: float
    node_counts: list
    exercise: bool            # immediate exercise optimal at the root
    continuation: float
    wall_time: float = field(default=0.0, compare=False)


def compensated_expectation(values: np.ndarray, index_sets, weights) -> np.ndarray:
    """sum_j w_j values[idx_j] with Neumaier compensation, per output entry."""
    total = None
    comp = None
    for idx, w in zip(index_sets, weights):
        term = w * values[idx]
        if total is None:
            total = term.copy()
            comp = np.zeros_like(term)
            continue
        t = total + term
        big = np.abs(total) >= np.abs(term)
        comp += np.where(big, (total - t) + term, (term - t) + total)
        total = t
    return total + comp


class Chain:
    """The cubature Markov chain on a fixed lattice, with discounting and payoff.

    Values may carry trailing axes, which index a batch of start points
    obtained by shifting x0 by the rows of ``shifts``.
    """

    def __init__(self, levels: list[LevelMap], formula: CubatureFormula,
                 discount: float, payoff: PayoffSpec, shifts=None):
        self.levels = levels
        self.formula = formula
        self.discount = discount
        self.payoff = payoff
        self.shifts = None if shifts is None else np.atleast_2d(np.asarray(shifts, float))
        self._deltas = levels[0].codec.delta(formula.int_points)
        self._index = {}

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    def successor_index(self, k: int):
        """Index arrays into level k+1 for each cubature point, from level k."""
        if k not in self._index:
            src, dst = self.levels[k], self.levels[k + 1]
            self._index[k] = [dst.index(src.keys + dlt) for dlt in self._deltas]
        return self._index[k]

    def payoff_at(self, k: int, clip: bool = True) -> np.ndarray:
        x = self.levels[k].positions()
        if self.shifts is not None:
            x = x[:, None, :] + self.shifts[None, :, :]
        return self.payoff.evaluate(x, clip=clip)

    def expect(self, k: int, values_next: np.ndarray) -> np.ndarray:
        """Discounted one-step expectation e^{-rh} P_h v, from level k+1 to k."""
        return self.discount * compensated_expectation(
            values_next, self.successor_index(k), self.formula.weights)

    def propagate(self, k_to: int, k_from: int, values: np.ndarray) -> np.ndarray:
        for k in range(k_from - 1, k_to - 1, -1):
            values = self.expect(k, values)
        return values

    def bt(self, k_to: int, k_from: int, values: np.ndarray):
        """B_t with t = (k_from - k_to) h: max(e^{-rt} P_t v, g) at level k_to.

        Returns (values, continuation); ties count as exercise.
        """
        cont = self.propagate(k_to, k_from, values)
        return np.maximum(cont, self.payoff_at(k_to)), cont

    def bermudan(self, every: int = 1, terminal=None):
        """Backward induction with exercise every ``every`` levels."""
        n = self.depth
        v = self.payoff_at(n) if terminal is None else terminal
        cont = v
        for k in range(n - every, -1, -every):
            v, cont = self.bt(k, k + every, v)
        return v, cont


def _chain_for(job: PricingJob, node_budget=DEFAULT_NODE_BUDGET, shifts=None) -> Chain:
    m, h = job.model, job.h
    levels = build_levels(job.x0, job.formula, job.steps, h, drift=m.drift, vol=m.vol,
                          node_budget=node_budget)
    return Chain(levels, job.formula, job.discount, job.payoff, shifts)


def price_bermudan(job: PricingJob, node_budget: int | None = DEFAULT_NODE_BUDGET) -> PricingResult:
    """V_0(x0) of the Bermudan recursion over the recombined lattice."""
    t0 = time.perf_counter()
    chain = _chain_for(job, node_budget)
    v, cont = chain.bermudan(job.exercise_every)
    price, c = float(v[0]), float(cont[0])
    exercise = c <= float(chain.payoff_at(0)[0])
    return PricingResult(price, [len(lv) for lv in chain.levels], exercise, c,
                         time.perf_counter() - t0)


def apply_bt(levels: list[LevelMap], formula: CubatureFormula, payoff: PayoffSpec,
             rate: float, h: float, k_to: int, k_from: int, values: np.ndarray) -> LevelMap:
    """B_t applied to values on level k_from, t = (k_from - k_to) h.

    Returns a copy of level k_to carrying max(e^{-rt} P_t v, g).
    """
    chain = Chain(levels, formula, math.exp(-rate * h), payoff)
    out, _ = chain.bt(k_to, k_from, values)
    return replace(levels[k_to], values=out)


# ------------------------------------------------------------------- dyadic

def gamma1_power(job: PricingJob, t: float) -> float:
    """gamma_1^t: growth bound of the chain on the aggregated price, at least e^{rt}.

    Computed at the base mesh and raised to t/h, which is how the bound
    propagates through the semigroup.
    """
    f, m, h = job.formula, job.model, job.h
    moves = np.exp(m.drift * h + math.sqrt(h) * m.vol * f.points)   # (m_pts, d)
    if job.payoff.kind in (PayoffKind.PUT_ON_MIN, PayoffKind.PUT_ON_MAX):
        per_step = float(f.weights @ moves.max(axis=1))
    else:
        per_step = float(np.max(f.weights @ moves))
    g1 = max(per_step ** (1.0 / h), math.exp(m.rate))
    return g1 ** t


def gap_constant_R(job: PricingJob) -> float:
    """R = K sup_{t in hN, t <= T} (gamma_1^t - 1) / t."""
    ts = job.h * np.arange(1, job.steps + 1)
    return job.payoff.strike * max((gamma1_power(job, t) - 1.0) / t for t in ts)


@dataclass
class DyadicGapTable:
    k: np.ndarray
    sup_gap: np.ndarray
    l1_gap: np.ndarray
    bound: np.ndarray          # R T 2^{-(k+1)}
    within_bound: np.ndarray
    ratio: float               # fitted geometric decay of l1_gap
    prices: np.ndarray         # values at the start grid for each refinement level
    grid: np.ndarray
    mask: np.ndarray


def _grid_values(job: PricingJob, n: int, grid, node_budget=DEFAULT_NODE_BUDGET):
    base = replace(job, steps=2 ** n, exercise_every=1)
    shifts = np.asarray(grid, float)[:, None] - np.asarray(job.x0)[None, :]
    return _chain_for(base, node_budget, shifts), base


def dyadic_values(job: PricingJob, n: int, grid) -> tuple[np.ndarray, Chain]:
    """(B_{T 2^-j})^{2^j} (g v 0) on the grid for j = 0..n, one row per j.

    All levels share the base chain at mesh T 2^-n, so P_s is that chain
    iterated s/h times.
    """
    chain, _ = _grid_values(job, n, grid)
    rows = []
    for j in range(n + 1):
        v, _ = chain.bermudan(2 ** (n - j))
        rows.append(v[0])
    return np.array(rows), chain


def one_step_gap(job: PricingJob, s_steps: int, n: int, grid) -> float:
    """sup over the grid of (B_{s/2})^2 (g v 0) - B_s (g v 0), s = s_steps * h."""
    if s_steps % 2:
        raise ValueError("s must be an even number of base steps")
    chain, _ = _grid_values(job, n, grid)
    f = chain.payoff_at(s_steps)
    half, _ = chain.bt(s_steps // 2, s_steps, f)
    two, _ = chain.bt(0, s_steps // 2, half)
    one, _ = chain.bt(0, s_steps, f)
    return float(np.max(two[0] - one[0]))


def exercise_window_mask(job: PricingJob, grid, h: float) -> np.ndarray:
    """Grid points where P_h(g v 0) > P_h g, i.e. some successor has g < 0."""
    f, m = job.formula, job.model
    inc = m.drift * h + math.sqrt(h) * m.vol * f.points
    x = np.asarray(grid, float)
    if x.ndim == 1:
        x = x[:, None]
    succ = x[:, None, :] + inc[None, :, :]
    return np.any(job.payoff.evaluate(succ, clip=False) < 0, axis=1)


def dyadic_refinement_gap(job: PricingJob, n: int, grid=None) -> DyadicGapTable:
    """Gaps between successive dyadic exercise meshes on a grid of start points."""
    if grid is None:
        k0 = math.log(job.payoff.strike)
        grid = np.linspace(k0 - 1.0, k0 + 1.0, 401)
    grid = np.asarray(grid, float)
    values, _ = dyadic_values(job, n, grid)
    base_h = job.maturity / 2 ** n
    mask = exercise_window_mask(job, grid, base_h)
    dx = np.gradient(grid) if len(grid) > 1 else np.ones(1)
    diffs = values[1:] - values[:-1]
    sup_gap = np.max(np.abs(diffs), axis=1)
    l1_gap = np.sum(np.abs(diffs) * dx * mask, axis=1)
    R = gap_constant_R(replace(job, steps=2 ** n, exercise_every=1))
    k = np.arange(n)
    bound = R * job.maturity * 2.0 ** -(k + 1)
    ok = l1_gap > 0
    ratio = float(np.exp(np.polyfit(k[ok], np.log(l1_gap[ok]), 1)[0])) if ok.sum() >= 2 else float("nan")
    return DyadicGapTable(k, sup_gap, l1_gap, bound, sup_gap <= bound + 1e-12, ratio,
                          values, grid, mask)
