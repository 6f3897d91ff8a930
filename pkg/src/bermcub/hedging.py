"""Approximate delta hedging in d-asset binomial product markets.

Each asset moves by a factor alpha_i (bit 0) or beta_i (bit 1) per step, so
there are 2^d joint moves but only d + 1 hedging instruments (d assets and
a bond).  The market is made complete by keeping d + 1 of the moves.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMarketError
from .oracle import path_generator

RHO_RTOL = 1e-12


@dataclass(frozen=True)
class BinomialMarket:
    up: tuple              # alpha_i
    down: tuple            # beta_i
    pmf: np.ndarray        # shape (2,)*d, index 0 = alpha move, 1 = beta move
    bond_rate: float = 0.0

    def __post_init__(self):
        up = tuple(float(a) for a in self.up)
        down = tuple(float(b) for b in self.down)
        object.__setattr__(self, "up", up)
        object.__setattr__(self, "down", down)
        d = len(up)
        pmf = np.asarray(self.pmf, float).reshape((2,) * d)
        object.__setattr__(self, "pmf", pmf)
        if len(down) != d or d < 1:
            raise ValueError("need one up and one down factor per asset")
        if any(a <= 0 or b <= 0 for a, b in zip(up, down)):
            raise ValueError("move factors must be positive")
        if any(a == b for a, b in zip(up, down)):
            raise ValueError("up and down factors must differ")
        if np.any(pmf < 0) or abs(pmf.sum() - 1.0) > 1e-12:
            raise ValueError("pmf must be nonnegative and sum to one")
        if any(not 0 < p < 1 for p in self.marginals):
            raise ValueError("every marginal up-probability must lie in (0, 1)")

    @classmethod
    def independent(cls, up, down, p, bond_rate=0.0) -> "BinomialMarket":
        p = np.broadcast_to(np.asarray(p, float), (len(up),))
        pmf = np.ones(())
        for pi in p:
            pmf = np.multiply.outer(pmf, np.array([pi, 1 - pi]))
        return cls(tuple(up), tuple(down), pmf, bond_rate)

    @property
    def dim(self) -> int:
        return len(self.up)

    @property
    def growth(self) -> float:
        return 1.0 + self.bond_rate

    @property
    def marginals(self) -> np.ndarray:
        d = len(self.up)
        return np.array([self.pmf.sum(axis=tuple(j for j in range(d) if j != i))[0]
                         for i in range(d)])

    def states(self) -> list:
        """All joint moves as bit tuples, in lexicographic order."""
        return list(itertools.product((0, 1), repeat=self.dim))

    def factors(self, state) -> np.ndarray:
        return np.where(np.asarray(state) == 0, self.up, self.down)

    def prob(self, state) -> float:
        return float(self.pmf[tuple(state)])


def binary_sigma(alpha: float, beta: float, p: float) -> float:
    """Standard deviation of a factor equal to alpha w.p. p and beta otherwise."""
    mean = alpha * p + beta * (1 - p)
    var = alpha * alpha * p + beta * beta * (1 - p) - mean * mean
    return math.sqrt(max(var, 0.0))


def per_asset_sigma(m: BinomialMarket, i: int) -> float:
    return binary_sigma(m.up[i], m.down[i], float(m.marginals[i]))


def rho(m: BinomialMarket, y) -> float:
    """Overall absolute correlation of the joint move y (a bit tuple).

    Every factor |y_i - mean_i| is divided by the full product of the sigmas.
    """
    p = m.marginals
    sig = np.array([per_asset_sigma(m, i) for i in range(m.dim)])
    if np.any(sig == 0):
        raise DegenerateMarketError("an asset has zero volatility")
    mean = np.asarray(m.up) * p + np.asarray(m.down) * (1 - p)
    dev = np.abs(m.factors(y) - mean)
    return float(np.prod(dev / np.prod(sig)))


@dataclass(frozen=True)
class TrimmedMarket:
    market: BinomialMarket
    states: tuple           # retained bit tuples, lexicographic
    probs: np.ndarray       # renormalised pmf on the retained states
    removed: tuple

    @property
    def dim(self) -> int:
        return self.market.dim


def _ranked(states, key_rho, order):
    rank = {s: i for i, s in enumerate(order)}

    def cmp(a, b):
        ra, rb = key_rho[a], key_rho[b]
        if not math.isclose(ra, rb, rel_tol=RHO_RTOL, abs_tol=0.0):
            return -1 if ra < rb else 1
        return rank[a] - rank[b]
    return sorted(states, key=functools.cmp_to_key(cmp))


def restrict(m: BinomialMarket, keep) -> TrimmedMarket:
    keep = tuple(sorted(tuple(s) for s in keep))
    p = np.array([m.prob(s) for s in keep])
    if p.sum() <= 0:
        raise DegenerateMarketError("retained states carry no probability")
    removed = tuple(s for s in m.states() if s not in set(keep))
    return TrimmedMarket(m, keep, p / p.sum(), removed)


def trim(m: BinomialMarket, order=None, rho_scale: float = 1.0) -> TrimmedMarket:
    """Keep d + 1 joint moves ranked by (rho, order).

    For d <= 3 the 2^d - (d + 1) smallest moves are dropped, otherwise the
    d + 1 greatest are kept; both give the same set.  ``order`` is a list of
    all states, smallest first (default lexicographic).
    """
    states = m.states()
    order = states if order is None else [tuple(s) for s in order]
    key = {s: rho_scale * rho(m, s) for s in states}
    ranked = _ranked(states, key, order)
    d = m.dim
    if d <= 3:
        keep = ranked[2 ** d - (d + 1):]
    else:
        keep = ranked[-(d + 1):]
    return restrict(m, keep)


def simplex_points(d: int) -> np.ndarray:
    """Vertices of a regular simplex with unit covariance under equal weights."""
    e = np.eye(d + 1) - 1.0 / (d + 1)
    # orthonormal basis of the sum-zero subspace
    q, _ = np.linalg.qr(e[:, :d])
    v = e @ q
    return v * math.sqrt(d / np.mean(np.sum(v * v, axis=1)))


def cubature_trim(m: BinomialMarket, order=None) -> TrimmedMarket:
    """Heuristic: keep the moves nearest to simplex points in standardised log-move space."""
    p = m.marginals
    lu, ld = np.log(m.up), np.log(m.down)
    mean = p * lu + (1 - p) * ld
    sd = np.sqrt(p * (1 - p)) * np.abs(lu - ld)
    states = m.states() if order is None else [tuple(s) for s in order]
    coords = {s: (np.where(np.asarray(s) == 0, lu, ld) - mean) / sd for s in states}
    keep = []
    for v in simplex_points(m.dim):
        free = [s for s in states if s not in keep]
        keep.append(min(free, key=lambda s: float(np.sum((coords[s] - v) ** 2))))
    return restrict(m, keep)


# ------------------------------------------------------------- replication

@dataclass
class HedgePortfolio:
    holdings: np.ndarray      # units of each asset
    bond: float               # bond units (worth growth each next step)
    residuals: dict           # state -> portfolio value - option value

    def value(self, prices) -> float:
        return float(self.holdings @ np.asarray(prices) + self.bond)


def _option_lookup(values, market):
    if isinstance(values, dict):
        return lambda s: float(values[tuple(s)])
    arr = np.asarray(values, float).reshape((2,) * market.dim)
    return lambda s: float(arr[tuple(s)])


def hedge_step(tm: TrimmedMarket, option_values, prices) -> HedgePortfolio:
    """Asset and bond holdings matching the option on every retained move."""
    m = tm.market
    S = np.asarray(prices, float)
    V = _option_lookup(option_values, m)
    rows = [np.append(S * m.factors(s), m.growth) for s in tm.states]
    A = np.array(rows)
    if np.linalg.matrix_rank(A) < len(tm.states):
        raise DegenerateMarketError(f"replication system is singular on states {tm.states}")
    sol = np.linalg.solve(A, np.array([V(s) for s in tm.states]))
    hold, bond = sol[:-1], sol[-1]
    res = {s: float(hold @ (S * m.factors(s)) + bond * m.growth - V(s)) for s in m.states()}
    return HedgePortfolio(hold, float(bond), res)


def marginal_market(m: BinomialMarket, assets) -> BinomialMarket:
    assets = tuple(assets)
    other = tuple(i for i in range(m.dim) if i not in assets)
    pmf = m.pmf.sum(axis=other) if other else m.pmf
    return BinomialMarket(tuple(m.up[i] for i in assets), tuple(m.down[i] for i in assets),
                          pmf, m.bond_rate)


def subset_hedge_step(m: BinomialMarket, assets, option_values, prices) -> HedgePortfolio:
    """Hedge with a subset of the assets against the conditional option value."""
    assets = tuple(assets)
    V = _option_lookup(option_values, m)
    sub = marginal_market(m, assets)
    cond = {}
    for s in m.states():
        key = tuple(s[i] for i in assets)
        cond.setdefault(key, [0.0, 0.0])
        cond[key][0] += m.prob(s) * V(s)
        cond[key][1] += m.prob(s)
    cond = {k: a / b for k, (a, b) in cond.items()}
    tm = trim(sub) if len(assets) > 1 else restrict(sub, sub.states())
    S = np.asarray(prices, float)
    part = hedge_step(tm, cond, S[list(assets)])
    hold = np.zeros(m.dim)
    hold[list(assets)] = part.holdings
    res = {s: float(hold @ (S * m.factors(s)) + part.bond * m.growth - V(s)) for s in m.states()}
    return HedgePortfolio(hold, part.bond, res)


# --------------------------------------------------------------- simulation

def european_pricer(m: BinomialMarket, payoff, prices0, N: int):
    """Value function (n, prices) -> discounted pmf-expectation of payoff at step N."""
    S0 = np.asarray(prices0, float)
    lu, ld = np.log(m.up), np.log(m.down)
    states = m.states()
    probs = np.array([m.prob(s) for s in states])
    moves = np.array(states)

    @functools.lru_cache(maxsize=None)
    def value(n, downs):
        S = S0 * np.exp((n - np.asarray(downs)) * lu + np.asarray(downs) * ld)
        if n == N:
            return float(payoff(S))
        nxt = [value(n + 1, tuple(np.asarray(downs) + z)) for z in moves]
        return float(probs @ np.array(nxt)) / m.growth

    def price(n, S):
        downs = np.rint((np.log(np.asarray(S) / S0) - n * lu) / (ld - lu)).astype(int)
        return value(n, tuple(int(k) for k in downs))
    return price


STRATEGIES = ("subset-hedge", "rho-trim", "cubature-trim")


@dataclass
class HedgeReport:
    strategy: str
    l1: float
    l2: float
    linf: float
    paths: int
    steps: int
    seed: int
    residuals: np.ndarray = field(repr=False, default=None)

    def norm(self, p) -> float:
        return {1: self.l1, 2: self.l2, math.inf: self.linf}[p]


def simulate_hedge(m: BinomialMarket, pricer, prices0, N: int, paths: int, seed: int = 0,
                   strategies=STRATEGIES, subset_size: int = 1, cycle_subsets: bool = False):
    """Realised one-step replication errors along simulated paths.

    At each step the strategy's portfolio is set up from the option values
    at all successor moves; its residual at the realised move is recorded.
    Norms are taken over the concatenated N * paths residual sequence.
    """
    states = m.states()
    probs = np.array([m.prob(s) for s in states])
    rho_tm = trim(m)
    cub_tm = cubature_trim(m)
    subsets = list(itertools.combinations(range(m.dim), subset_size))
    out = {name: np.zeros((paths, N)) for name in strategies}
    for p in range(paths):
        rng = path_generator(seed, p)
        draws = rng.choice(len(states), size=N, p=probs)
        S = np.asarray(prices0, float)
        for n in range(N):
            vals = {s: pricer(n + 1, S * m.factors(s)) for s in states}
            z = states[draws[n]]
            for name in strategies:
                if name == "rho-trim":
                    port = hedge_step(rho_tm, vals, S)
                elif name == "cubature-trim":
                    port = hedge_step(cub_tm, vals, S)
                elif name == "subset-hedge":
                    sub = subsets[n % len(subsets)] if cycle_subsets else subsets[0]
                    port = subset_hedge_step(m, sub, vals, S)
                else:
                    raise ValueError(f"unknown strategy {name!r}")
                out[name][p, n] = port.residuals[z]
            S = S * m.factors(z)
    reports = []
    for name in strategies:
        r = out[name].ravel()
        reports.append(HedgeReport(name, float(np.sum(np.abs(r))), float(np.sqrt(np.sum(r * r))),
                                   float(np.max(np.abs(r))) if len(r) else 0.0,
                                   paths, N, seed, out[name]))
    return reports
