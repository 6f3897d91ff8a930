"""One-dimensional piecewise-harmonic interpolation and the operator

    K: f -> I( (e^{-rt} P_t (I(f) v c)) v g )

for Brownian motion with drift mu and volatility sigma.  Harmonic functions
of L = sigma^2/2 d^2 + mu d are spanned by 1 and exp(lam x) with
lam = -2 mu / sigma^2 (by 1 and x when mu = 0).  The interpolant is
harmonic between abscissas and continued harmonically beyond the ends.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from ..errors import IterationError, PreconditionError

_LINEAR_LAM = 1e-12


def harmonic_rate(mu: float, sigma: float) -> float:
    return -2.0 * mu / sigma ** 2


@dataclass
class HarmonicSpline1D:
    abscissas: np.ndarray
    a_coef: np.ndarray    # per piece, constant part
    b_coef: np.ndarray    # per piece, coefficient of the second basis function
    lam: float

    @property
    def linear(self) -> bool:
        return abs(self.lam) < _LINEAR_LAM

    def basis(self, x):
        x = np.asarray(x, float)
        return x if self.linear else np.exp(self.lam * x)

    @classmethod
    def interpolate(cls, abscissas, values, mu: float, sigma: float) -> "HarmonicSpline1D":
        a = np.asarray(abscissas, float)
        v = np.asarray(values, float)
        if a.ndim != 1 or len(a) < 2 or np.any(np.diff(a) <= 0):
            raise ValueError("need at least two strictly increasing abscissas")
        if v.shape != a.shape:
            raise ValueError("one value per abscissa")
        lam = harmonic_rate(mu, sigma)
        out = cls(a, np.empty(len(a) - 1), np.empty(len(a) - 1), lam)
        p = out.basis(a)
        b = (v[1:] - v[:-1]) / (p[1:] - p[:-1])
        out.a_coef[:] = v[:-1] - b * p[:-1]
        out.b_coef[:] = b
        return out

    @property
    def values(self) -> np.ndarray:
        return self(self.abscissas)

    def piece_of(self, x) -> np.ndarray:
        return np.clip(np.searchsorted(self.abscissas, x, side="right") - 1,
                       0, len(self.a_coef) - 1)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        i = self.piece_of(x)
        return self.a_coef[i] + self.b_coef[i] * self.basis(x)

    def pieces(self):
        """(lo, hi, A, B) over the whole line, outer pieces unbounded."""
        a = self.abscissas
        n = len(self.a_coef)
        for i in range(n):
            lo = -np.inf if i == 0 else a[i]
            hi = np.inf if i == n - 1 else a[i + 1]
            yield lo, hi, self.a_coef[i], self.b_coef[i]


def _split_at_level(lo, hi, A, B, c, spline):
    """Subintervals of [lo, hi] on which A + B phi is >= c or < c."""
    cuts = [lo, hi]
    if B != 0:
        target = (c - A) / B
        if spline.linear:
            cuts.append(target)
        elif target > 0:
            cuts.append(math.log(target) / spline.lam)
    cuts = sorted(x for x in set(cuts) if lo <= x <= hi)
    for u, v in zip(cuts[:-1], cuts[1:]):
        if v <= u:
            continue
        if np.isfinite(u) and np.isfinite(v):
            mid = 0.5 * (u + v)
        elif np.isfinite(u):
            mid = u + 1.0
        elif np.isfinite(v):
            mid = v - 1.0
        else:
            mid = 0.0
        phi = mid if spline.linear else math.exp(spline.lam * mid)
        yield u, v, (A + B * phi) >= c


def gaussian_expectation(spline: HarmonicSpline1D, x, drift_t: float, sd_t: float,
                         floor: float | None = None) -> np.ndarray:
    """E[F(x + Y)] with Y ~ N(drift_t, sd_t^2) and F = spline, or spline v floor.

    Closed form piece by piece: for Y' = x + Y ~ N(m, s^2) on [u, v],
    E[(A + B e^{lam Y'}) 1] = A (Phi(b) - Phi(a))
        + B exp(lam m + lam^2 s^2 / 2) (Phi(b - lam s) - Phi(a - lam s)).
    """
    x = np.atleast_1d(np.asarray(x, float))
    m = x + drift_t
    s = sd_t
    out = np.zeros_like(m)
    lam = spline.lam
    for lo, hi, A, B in spline.pieces():
        parts = [(lo, hi, True)] if floor is None else _split_at_level(lo, hi, A, B, floor, spline)
        for u, v, above in parts:
            za, zb = (u - m) / s, (v - m) / s
            mass = ndtr(zb) - ndtr(za)
            if not above:
                out += floor * mass
                continue
            out += A * mass
            if B == 0:
                continue
            if spline.linear:
                dens = (np.exp(-0.5 * np.where(np.isfinite(za), za, 0.0) ** 2) * np.isfinite(za)
                        - np.exp(-0.5 * np.where(np.isfinite(zb), zb, 0.0) ** 2) * np.isfinite(zb))
                out += B * (m * mass + s * dens / math.sqrt(2 * math.pi))
            else:
                out += B * np.exp(lam * m + 0.5 * (lam * s) ** 2) * (
                    ndtr(zb - lam * s) - ndtr(za - lam * s))
    return out


@dataclass
class KResult:
    spline: HarmonicSpline1D
    diffs: np.ndarray         # sup over abscissas of successive changes
    history: np.ndarray       # abscissa values per iterate, (n+1, m+1)
    monotone: bool
    bounded: bool


def apply_K(spline, g_vals, floor, mu, sigma, rate, t):
    cont = math.exp(-rate * t) * gaussian_expectation(
        spline, spline.abscissas, mu * t, sigma * math.sqrt(t), floor)
    return HarmonicSpline1D.interpolate(spline.abscissas, np.maximum(cont, g_vals), mu, sigma)


def iterate_K_1d(g, floor: float, dominating, abscissas, mu: float, sigma: float,
                 rate: float, t: float, tol: float = 1e-10,
                 max_iter: int = 100_000) -> KResult:
    """Monotone iteration of K from I(g v 0) to its minimal nonnegative fixed point.

    ``g`` and ``dominating`` are callables on log prices; ``floor`` is the
    constant c of the operator.
    """
    a = np.asarray(abscissas, float)
    g_vals = np.asarray(g(a), float)
    h_vals = np.asarray(dominating(a), float)
    if np.any(g_vals > h_vals):
        bad = a[g_vals > h_vals]
        raise PreconditionError(f"payoff exceeds the dominating function at {bad}")
    if np.any(g_vals < floor):
        raise PreconditionError("floor must not exceed the payoff on the abscissas")
    spline = HarmonicSpline1D.interpolate(a, np.maximum(g_vals, 0.0), mu, sigma)
    history = [spline.values]
    diffs = []
    for _ in range(max_iter):
        spline = apply_K(spline, g_vals, floor, mu, sigma, rate, t)
        history.append(spline.values)
        diffs.append(float(np.abs(history[-1] - history[-2]).max()))
        if diffs[-1] < tol:
            break
    else:
        raise IterationError(f"no convergence within {max_iter} iterations", diffs)
    hist = np.array(history)
    scale = max(1.0, float(np.abs(hist).max()))
    monotone = bool(np.all(np.diff(hist, axis=0) >= -1e-12 * scale))
    bounded = bool(np.all(hist <= h_vals + 1e-12 * scale))
    return KResult(spline, np.array(diffs), hist, monotone, bounded)
