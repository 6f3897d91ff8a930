"""Fixed points of the polynomial interpolation operator

    H_h: p -> interpolant of (e^{-rh} (p * nu)) v g at y_j(h) = -mu h + xi_j sqrt(h)

where (p * nu)(x) = E[p(x + mu h + sqrt(h) Z)] is Gaussian smoothing.
Polynomials are coefficient vectors in ascending order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from ..cubature import gaussian_moment


def gaussian_convolve_poly(coeffs, mu: float, h: float) -> np.ndarray:
    """Coefficients of x -> E[p(x + mu h + sqrt(h) Z)], Z standard normal.

    Uses E[(x + m + s Z)^k] = sum_j C(k, j) (x + m)^{k-j} s^j E[Z^j].
    """
    q = np.asarray(coeffs, float)
    m, s = mu * h, math.sqrt(h)
    out = np.zeros(max(len(q), 1))
    shift = np.array([m, 1.0])
    for k, qk in enumerate(q):
        if qk == 0:
            continue
        term = np.zeros(1)
        for j in range(0, k + 1, 2):
            base = P.polypow(shift, k - j) if k - j > 0 else np.ones(1)
            term = P.polyadd(term, math.comb(k, j) * s ** j * gaussian_moment((j,)) * base)
        out = P.polyadd(out, qk * term)
    out = np.asarray(out, float)
    res = np.zeros(len(q))
    res[:len(out)] = out[:len(q)]
    return res


def abscissas(xi, mu: float, h: float) -> np.ndarray:
    xi = np.asarray(xi, float)
    if len(np.unique(xi)) != len(xi):
        raise ValueError("abscissa seeds must be distinct")
    return -mu * h + xi * math.sqrt(h)


def interpolate(y, v) -> np.ndarray:
    return np.linalg.solve(np.vander(y, len(y), increasing=True), v)


@dataclass
class PolyState:
    coeffs: np.ndarray
    y: np.ndarray

    def __call__(self, x):
        return P.polyval(x, self.coeffs)


@dataclass
class PolyFixResult:
    state: PolyState
    converged: bool
    exercise: tuple              # per abscissa, True where the payoff is active
    iterations: int
    visited: set = field(default_factory=set)
    diffs: list = field(default_factory=list)
    residual: float = float("nan")


def apply_H(coeffs, y, g_vals, mu, r, h):
    cont = math.exp(-r * h) * P.polyval(y, gaussian_convolve_poly(coeffs, mu, h))
    exercise = tuple(bool(e) for e in g_vals >= cont)
    return interpolate(y, np.maximum(cont, g_vals)), exercise


def configuration_matrix(y, exercise, mu, r, h) -> np.ndarray:
    """Rows y^k at exercise abscissas, y^k - e^{-rh} (X^k * nu)(y) elsewhere."""
    m = len(y)
    V = np.vander(y, m, increasing=True)
    conv = np.empty_like(V)
    for k in range(m):
        e = np.zeros(m)
        e[k] = 1.0
        conv[:, k] = P.polyval(y, gaussian_convolve_poly(e, mu, h))
    A = V - math.exp(-r * h) * conv
    ex = np.asarray(exercise, bool)
    A[ex] = V[ex]
    return A


def solve_configuration(y, exercise, g_vals, mu, r, h) -> np.ndarray:
    A = configuration_matrix(y, exercise, mu, r, h)
    return np.linalg.solve(A, np.where(exercise, g_vals, 0.0))


def polyfix_H(g, m: int, xi, h: float, mu: float, r: float, tol: float = 1e-12,
              max_iter: int = 10_000) -> PolyFixResult:
    """Iterate H_h from the interpolant of g at y(h).

    Once the exercise pattern stops changing the fixed point of that
    affine map is solved for directly and accepted if it reproduces the
    same pattern.
    """
    if m < 1:
        raise ValueError("degree must be at least one")
    xi = np.asarray(xi, float)
    if len(xi) != m + 1:
        raise ValueError(f"need {m + 1} abscissa seeds for degree {m}")
    y = abscissas(xi, mu, h)
    g_vals = np.asarray(g(y), float)
    coeffs = interpolate(y, g_vals)
    visited, diffs = set(), []
    last, same = None, 0
    for it in range(1, max_iter + 1):
        new, ex = apply_H(coeffs, y, g_vals, mu, r, h)
        visited.add(ex)
        diffs.append(float(np.abs(new - coeffs).max()))
        coeffs = new
        same = same + 1 if ex == last else 0
        last = ex
        if diffs[-1] < tol:
            return _result(coeffs, y, g_vals, ex, mu, r, h, True, it, visited, diffs)
        if same >= 3:
            try:
                cand = solve_configuration(y, ex, g_vals, mu, r, h)
            except np.linalg.LinAlgError:
                continue
            img, ex2 = apply_H(cand, y, g_vals, mu, r, h)
            if ex2 == ex and np.abs(img - cand).max() <= 1e-9 * max(1.0, np.abs(cand).max()):
                return _result(cand, y, g_vals, ex, mu, r, h, True, it, visited, diffs)
    return _result(coeffs, y, g_vals, last, mu, r, h, False, max_iter, visited, diffs)


def _result(coeffs, y, g_vals, ex, mu, r, h, ok, it, visited, diffs):
    img, _ = apply_H(coeffs, y, g_vals, mu, r, h)
    res = float(np.abs(P.polyval(y, img) - P.polyval(y, coeffs)).max())
    return PolyFixResult(PolyState(coeffs, y), ok, ex, it, visited, diffs, res)


# --------------------------------------------------------- quadratic example

def polyfix_det_m2(xi0: float, xi1: float, xi2: float, r: float, h: float,
                   mu: float = 0.0) -> float:
    """det of the configuration matrix with the first two abscissas exercising."""
    xi = (xi0, xi1, xi2)
    y = abscissas(xi, mu, h)
    return float(np.linalg.det(configuration_matrix(y, (True, True, False), mu, r, h)))


def det_m2_expansion(xi0, xi1, xi2, r, h, extra_h2: bool = False) -> float:
    """Closed form of the same determinant at mu = 0.

    (1 - e^{-rh}) h^{3/2} V(xi) + e^{-rh} h^{3/2} (xi0 - xi1), where V is the
    Vandermonde-type determinant of the seeds.  With ``extra_h2`` the second
    smoothed moment is taken as x^2 + h + h^2, which adds
    e^{-rh} h^{5/2} (xi0 - xi1).
    """
    vd = xi1 * xi2 ** 2 + xi0 * xi1 ** 2 + xi0 ** 2 * xi2 - xi0 * xi2 ** 2 - xi1 ** 2 * xi2 - xi0 ** 2 * xi1
    e = math.exp(-r * h)
    out = (1 - e) * h ** 1.5 * vd + e * h ** 1.5 * (xi0 - xi1)
    if extra_h2:
        out += e * h ** 2.5 * (xi0 - xi1)
    return out
