"""Continuity correction between Bermudan and American prices.

The American-minus-Bermudan gap at the exercise boundary for a mesh s is

    K * exp(-sum_{n>=1} e^{-r n s} / n * P0{X_{ns} in H})

and the same series gives the discounted first-passage mass xi through
1 - xi = exp(-sum ...).  Its log-log slope in s is the scaling exponent used
to extrapolate Bermudan price ladders to h = 0.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr
from scipy.stats import poisson

from .bermudan import PricingJob, price_bermudan
from .errors import ResourceError
from .model import MarketModel, ModelKind, POISSON_TAIL


class RegionKind(enum.Enum):
    HALF_LINE = "half_line"
    ORTHANT = "orthant"
    HALF_SPACE = "half_space"


@dataclass(frozen=True)
class RegionSpec:
    """Stopping region H anchored at gamma.

    half_line: {x <= gamma}; orthant: {x_i <= gamma_i for all i};
    half_space (d = 2): {(x_1 - gamma_1) + c (x_2 - gamma_2) <= 0}.
    """

    kind: RegionKind = RegionKind.HALF_LINE
    slope: float | None = None
    anchor: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", RegionKind(self.kind))
        if self.kind is RegionKind.HALF_SPACE and not (self.slope and self.slope > 0):
            raise ValueError("half-space region needs a positive slope")

    def gamma(self, d: int) -> np.ndarray:
        return np.zeros(d) if self.anchor is None else np.broadcast_to(
            np.asarray(self.anchor, float), (d,))

    def contains(self, x) -> np.ndarray:
        """Membership for sample points x of shape (..., d)."""
        x = np.asarray(x, float)
        g = self.gamma(x.shape[-1])
        if self.kind is RegionKind.HALF_SPACE:
            return (x[..., 0] - g[0]) + self.slope * (x[..., 1] - g[1]) <= 0
        return np.all(x <= g, axis=-1)


def region_probability(model: MarketModel, region: RegionSpec, t) -> np.ndarray:
    """P0{X_t in H} for an array of horizons t, process started at 0."""
    t = np.atleast_1d(np.asarray(t, float))
    d = model.dim
    g = region.gamma(d)
    if model.kind is ModelKind.MERTON:
        if region.kind is not RegionKind.HALF_LINE:
            raise ValueError("jump model supports the half-line region only")
        return _merton_cdf(model, g[0], t)
    mu, sig = model.drift, model.vol
    if region.kind is RegionKind.HALF_LINE:
        if d != 1:
            raise ValueError("half-line region needs a one-dimensional model")
        return ndtr((g[0] - mu[0] * t) / (sig[0] * np.sqrt(t)))
    if region.kind is RegionKind.ORTHANT:
        z = (g[None, :] - mu[None, :] * t[:, None]) / (sig[None, :] * np.sqrt(t)[:, None])
        return np.prod(ndtr(z), axis=1)
    if d != 2:
        raise ValueError("half-space region needs a two-dimensional model")
    c = region.slope
    m = (mu[0] + c * mu[1]) * t
    v = (sig[0] ** 2 + c * c * sig[1] ** 2) * t
    return ndtr((g[0] + c * g[1] - m) / np.sqrt(v))


def _merton_cdf(model, x, t, chunk=200_000):
    out = np.empty_like(t)
    s = model.sigma
    for i in range(0, len(t), chunk):
        tc = t[i:i + chunk]
        lam = model.intensity * tc
        kmax = int(poisson.isf(POISSON_TAIL, max(lam.max(), 1e-300))) + 1 if lam.max() > 0 else 0
        k = np.arange(kmax + 1)
        w = poisson.pmf(k[None, :], lam[:, None]) if kmax else np.ones((len(tc), 1))
        z = (x - model.alpha * tc[:, None] - k[None, :] * model.jump) / (s * np.sqrt(tc)[:, None])
        out[i:i + chunk] = np.sum(w * ndtr(z), axis=1)
    return out


# ------------------------------------------------------------------- series

@dataclass(frozen=True)
class FellerSeriesSpec:
    model: MarketModel
    mesh: float
    region: RegionSpec = field(default_factory=RegionSpec)
    strike: float = 1.0
    eps: float = 1e-12
    max_terms: int = 50_000_000

    def __post_init__(self):
        if not self.mesh > 0:
            raise ValueError(f"mesh must be positive, got {self.mesh}")

    @property
    def rate(self) -> float:
        return self.model.rate


@dataclass
class FellerResult:
    gap: float           # K * exp(-series)
    series: float        # sum_{n <= N} q^n / n * P_n
    n_terms: int
    tail_bound: float    # bound on K * (omitted series terms)


def truncation_terms(q: float, strike: float, eps: float, max_terms: int) -> int:
    """Smallest N with K q^{N+1} / ((N+1)(1-q)) < eps."""
    def tail(n):
        return strike * math.exp((n + 1) * math.log(q)) / ((n + 1) * (1 - q))
    n = max(1, int(math.log(eps * (1 - q) / strike) / math.log(q)) // 2)
    while tail(n) >= eps:
        n = int(n * 1.25) + 1
        if n > max_terms:
            raise ResourceError(f"series tail above {eps} after {max_terms} terms")
    lo, hi = max(1, n // 2), n
    while lo < hi:
        mid = (lo + hi) // 2
        if tail(mid) < eps:
            hi = mid
        else:
            lo = mid + 1
    if lo > max_terms:
        raise ResourceError(f"series tail above {eps} after {max_terms} terms")
    return lo


def feller_series(spec: FellerSeriesSpec, chunk: int = 1_000_000) -> FellerResult:
    s = spec.mesh
    q = math.exp(-spec.rate * s)
    n_terms = truncation_terms(q, spec.strike, spec.eps, spec.max_terms)
    partial = []
    for start in range(1, n_terms + 1, chunk):
        n = np.arange(start, min(start + chunk, n_terms + 1), dtype=float)
        p = region_probability(spec.model, spec.region, n * s)
        partial.append(math.fsum(np.exp(-spec.rate * s * n) / n * p))
    total = math.fsum(partial)
    tail = spec.strike * q ** (n_terms + 1) / ((n_terms + 1) * (1 - q))
    return FellerResult(spec.strike * math.exp(-total), total, n_terms, tail)


def feller_gap(spec: FellerSeriesSpec) -> float:
    return feller_series(spec).gap


def first_passage_lhs(spec: FellerSeriesSpec, via: str = "dp", **kw):
    """Discounted first-entry mass xi = sum_n e^{-rns} P0[first entry into H at step n]."""
    from . import oracle
    if via == "dp":
        if spec.region.kind is not RegionKind.HALF_LINE:
            raise ValueError("grid recursion covers the half-line region only")
        return oracle.dp_first_passage_1d(spec.model, spec.mesh, anchor=spec.region.gamma(1)[0], **kw)
    if via == "mc":
        return oracle.mc_first_passage(spec.model, spec.region, spec.mesh, **kw)
    raise ValueError(f"unknown method {via!r}")


# ---------------------------------------------------------------- exponents

UPWARD_BOUNDS = (1 / (2 * math.sqrt(2)), 0.5)
DOWNWARD_BOUNDS = (0.5, 1 / math.sqrt(2))


@dataclass
class ExponentFit:
    meshes: np.ndarray
    gaps: np.ndarray
    slope: float
    intercept: float
    lower: float
    upper: float
    case: str
    flagged: bool


def exponent_case(model: MarketModel):
    """Bounds on the scaling exponent for a one-dimensional model."""
    if model.dim != 1:
        raise ValueError("exponent bounds are one-dimensional")
    mu = float(model.drift[0])
    if mu >= 0:
        return "upward", UPWARD_BOUNDS
    sigma = float(model.vol[0])
    if model.rate > mu * mu / (2 * sigma * sigma):
        return "downward", DOWNWARD_BOUNDS
    return "none", (float("nan"), float("nan"))


def exponent_estimate(model: MarketModel, meshes, strike: float = 1.0,
                      slack: float = 0.05) -> ExponentFit:
    meshes = np.sort(np.asarray(meshes, float))
    if len(meshes) < 4:
        raise ValueError("need at least four meshes")
    if meshes[-1] / meshes[0] < 100:
        raise ValueError("meshes must span at least two decades")
    gaps = np.array([feller_gap(FellerSeriesSpec(model, s, strike=strike)) for s in meshes])
    if np.any(gaps <= 0):
        raise ValueError("nonpositive gap in ladder")
    slope, intercept = np.polyfit(np.log(meshes), np.log(gaps), 1)
    case, (lo, hi) = exponent_case(model)
    flagged = bool(case != "none" and not (lo - slack <= slope <= hi + slack))
    return ExponentFit(meshes, gaps, float(slope), float(intercept), lo, hi, case, flagged)


# ------------------------------------------------------------ extrapolation

def extrapolate_american(prices, alpha: float, at: float = 0.0) -> float:
    """Value at h = ``at`` (default 0) of the interpolating polynomial in h^alpha."""
    pts = [(float(h), float(u)) for h, u in prices]
    hs = [h for h, _ in pts]
    if len(set(hs)) != len(hs):
        raise ValueError("duplicate meshes")
    if not pts:
        raise ValueError("empty ladder")
    z = [h ** alpha for h in hs]
    z0 = at ** alpha if at > 0 else 0.0
    # Neville's scheme
    p = [u for _, u in pts]
    n = len(p)
    for k in range(1, n):
        for i in range(n - k):
            p[i] = ((z[i + k] - z0) * p[i] - (z[i] - z0) * p[i + 1]) / (z[i + k] - z[i])
    return p[0]


@dataclass
class AmericanEstimate:
    meshes: list
    prices: list
    extrapolated: dict        # alpha -> value
    wall_time: float


def price_american(job: PricingJob, ladder=(1, 2, 3), alphas=(1.0, 0.5)) -> AmericanEstimate:
    """Bermudan prices for steps in ``ladder`` and their extrapolations to h = 0."""
    meshes, prices, wall = [], [], 0.0
    for n in ladder:
        res = price_bermudan(replace(job, steps=n, exercise_every=1))
        meshes.append(job.maturity / n)
        prices.append(res.price)
        wall += res.wall_time
    ext = {a: extrapolate_american(list(zip(meshes, prices)), a) for a in alphas}
    return AmericanEstimate(meshes, prices, ext, wall)
