"""Market models for log prices and payoff functions on log-price space."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr
from scipy.stats import poisson

POISSON_TAIL = 1e-14


class ModelKind(enum.Enum):
    BLACK_SCHOLES = "black_scholes"
    MERTON = "merton"


@dataclass(frozen=True)
class BlackScholes:
    """Independent geometric Brownian motions; log prices drift at r - sigma^2/2."""

    rate: float
    sigma: tuple

    kind = ModelKind.BLACK_SCHOLES

    def __post_init__(self):
        sig = tuple(float(s) for s in np.atleast_1d(self.sigma))
        object.__setattr__(self, "sigma", sig)
        if not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate}")
        if len(sig) == 0:
            raise ValueError("at least one volatility is required")
        if any(not s > 0 for s in sig):
            raise ValueError(f"volatilities must be positive, got {sig}")

    @property
    def dim(self) -> int:
        return len(self.sigma)

    @property
    def vol(self) -> np.ndarray:
        return np.asarray(self.sigma)

    @property
    def drift(self) -> np.ndarray:
        v = self.vol
        return self.rate - 0.5 * v * v


@dataclass(frozen=True)
class MertonJump1D:
    """X_t = X_0 + alpha t + beta Z_t + sigma B_t with Z a Poisson process.

    The drift alpha is not a free parameter: it is fixed by requiring
    exp(X_t - r t) to be a martingale.
    """

    rate: float
    sigma: float
    jump: float
    intensity: float

    kind = ModelKind.MERTON

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.jump > 0:
            raise ValueError(f"jump size must be positive, got {self.jump}")
        if self.intensity < 0:
            raise ValueError(f"intensity must be nonnegative, got {self.intensity}")

    @classmethod
    def from_drift(cls, alpha, sigma, jump, intensity) -> "MertonJump1D":
        """Build the model whose risk-neutral drift equals ``alpha``."""
        rate = alpha + 0.5 * sigma * sigma + intensity * math.expm1(jump)
        return cls(rate, sigma, jump, intensity)

    @property
    def dim(self) -> int:
        return 1

    @property
    def vol(self) -> np.ndarray:
        return np.array([self.sigma])

    @property
    def alpha(self) -> float:
        return self.rate - 0.5 * self.sigma ** 2 - self.intensity * math.expm1(self.jump)

    @property
    def drift(self) -> np.ndarray:
        return np.array([self.alpha])


MarketModel = BlackScholes | MertonJump1D


# ---------------------------------------------------------------- increments

@dataclass(frozen=True)
class IncrementLaw:
    """Law of X_t - X_0 for a fixed horizon t."""

    model: MarketModel
    t: float

    @property
    def mean(self) -> np.ndarray:
        m = self.model
        if m.kind is ModelKind.MERTON:
            return np.array([(m.alpha + m.intensity * m.jump) * self.t])
        return m.drift * self.t

    @property
    def covariance(self) -> np.ndarray:
        m = self.model
        if m.kind is ModelKind.MERTON:
            return np.array([[(m.sigma ** 2 + m.intensity * m.jump ** 2) * self.t]])
        return np.diag(m.vol ** 2 * self.t)

    def _jump_counts(self):
        lam = self.model.intensity * self.t
        if lam == 0.0:
            return np.array([0]), np.array([1.0])
        kmax = int(poisson.isf(POISSON_TAIL, lam)) + 1
        k = np.arange(kmax + 1)
        return k, poisson.pmf(k, lam)

    def cdf(self, x) -> np.ndarray:
        """P{X_t - X_0 <= x}; componentwise for Black-Scholes."""
        m, t = self.model, self.t
        x = np.asarray(x, dtype=float)
        if m.kind is ModelKind.MERTON:
            k, pk = self._jump_counts()
            s = m.sigma * math.sqrt(t)
            z = (x[..., None] - m.alpha * t - k * m.jump) / s
            return ndtr(z) @ pk
        return ndtr((x - m.drift * t) / (m.vol * math.sqrt(t)))

    def cdf_at_zero(self):
        """P{X_t <= 0} started at 0 (array for Black-Scholes, float for Merton)."""
        p = self.cdf(np.zeros(self.model.dim))
        return float(p[0]) if self.model.kind is ModelKind.MERTON else p

    def expected_exp(self) -> np.ndarray:
        """E[exp(X_t - X_0)] per component, from the moment generating function."""
        m, t = self.model, self.t
        if m.kind is ModelKind.MERTON:
            return np.array([math.exp(t * (m.alpha + 0.5 * m.sigma ** 2
                                           + m.intensity * math.expm1(m.jump)))])
        return np.exp(t * (m.drift + 0.5 * m.vol ** 2))

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        """Draw increments with shape ``size + (d,)``."""
        m, t = self.model, self.t
        size = (size,) if np.isscalar(size) else tuple(size)
        z = rng.standard_normal(size + (m.dim,))
        x = m.drift * t + m.vol * math.sqrt(t) * z
        if m.kind is ModelKind.MERTON:
            x = x + m.jump * rng.poisson(m.intensity * t, size + (1,))
        return x


def increment_distribution(model: MarketModel, t: float) -> IncrementLaw:
    if not t > 0:
        raise ValueError(f"horizon must be positive, got {t}")
    return IncrementLaw(model, float(t))


# ------------------------------------------------------------------- payoffs

class PayoffKind(enum.Enum):
    PUT_ON_MIN = "put_on_min"
    PUT_ON_MAX = "put_on_max"
    PUT_ON_AVG = "put_on_avg"
    CALL_ON_AVG = "call_on_avg"
    VANILLA_PUT = "vanilla_put"
    VANILLA_CALL = "vanilla_call"


_CALLS = {PayoffKind.CALL_ON_AVG, PayoffKind.VANILLA_CALL}
_AVG = {PayoffKind.PUT_ON_AVG, PayoffKind.CALL_ON_AVG}
_SCALAR = {PayoffKind.VANILLA_PUT, PayoffKind.VANILLA_CALL}


@dataclass(frozen=True)
class PayoffSpec:
    kind: PayoffKind
    strike: float
    weights: tuple | None = field(default=None)

    def __post_init__(self):
        kind = PayoffKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.strike < 0:
            raise ValueError(f"strike must be nonnegative, got {self.strike}")
        if kind in _AVG:
            if self.weights is None:
                raise ValueError("average payoffs need weights")
            w = tuple(float(b) for b in self.weights)
            if any(b < 0 or b > 1 for b in w) or abs(sum(w) - 1.0) > 1e-12:
                raise ValueError(f"weights must be a convex combination, got {w}")
            object.__setattr__(self, "weights", w)
        elif self.weights is not None:
            raise ValueError(f"{kind.value} takes no weights")

    @classmethod
    def equal_average(cls, kind, strike, d) -> "PayoffSpec":
        return cls(kind, strike, (1.0 / d,) * d)

    def check_dim(self, d: int) -> None:
        if self.kind in _SCALAR and d != 1:
            raise ValueError(f"{self.kind.value} is one-dimensional, got d={d}")
        if self.kind in _AVG and d != len(self.weights):
            raise ValueError(f"{len(self.weights)} weights for d={d}")

    def underlying(self, x) -> np.ndarray:
        """The aggregated price f(x) the strike is compared with."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            x = x[None]
        self.check_dim(x.shape[-1])
        if self.kind in _SCALAR:
            return np.exp(x[..., 0])
        if self.kind is PayoffKind.PUT_ON_MIN:
            return np.exp(x.min(axis=-1))
        if self.kind is PayoffKind.PUT_ON_MAX:
            return np.exp(x.max(axis=-1))
        return np.exp(x) @ np.asarray(self.weights)

    def evaluate(self, x, clip: bool = True):
        """g(x) at log prices x (last axis is the asset axis).

        With ``clip=False`` the unclipped form K - f or f - K is returned.
        """
        f = self.underlying(x)
        g = f - self.strike if self.kind in _CALLS else self.strike - f
        if clip:
            g = np.maximum(g, 0.0)
        return g[()] if np.ndim(g) == 0 else g


def evaluate_payoff(p: PayoffSpec, x) -> float:
    return p.evaluate(x)
