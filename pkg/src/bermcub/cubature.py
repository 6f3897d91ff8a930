"""Cubature formulae for the standard Gaussian measure on R^d.

Points are stored as small integer vectors times a common scale so that
lattice keys built from them recombine exactly.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError

SQRT3 = math.sqrt(3.0)

# Block designs with block size k on d = 3k - 2 points in which every point
# lies in r blocks and every pair in lam blocks with r = 3 lam.  Full sign
# orbits over each block, scaled by sqrt(3), give degree-5 formulas.  The
# d = 7 design is the cyclic Fano plane {i, i+1, i+3} mod 7; the labelling
# matters once assets differ, since the formula is not symmetric under all
# coordinate permutations.
_DESIGNS = {
    1: [(0,)],
    4: list(itertools.combinations(range(4), 2)),
    7: [tuple(sorted((i % 7, (i + 1) % 7, (i + 3) % 7))) for i in range(7)],
    10: [(0, 1, 2, 8), (0, 1, 5, 9), (0, 2, 3, 9), (0, 3, 4, 7), (0, 4, 5, 6),
         (0, 6, 7, 8), (1, 2, 4, 6), (1, 3, 4, 8), (1, 3, 5, 7), (1, 6, 7, 9),
         (2, 3, 5, 6), (2, 4, 7, 9), (2, 5, 7, 8), (3, 6, 8, 9), (4, 5, 8, 9)],
}


@dataclass(frozen=True)
class CubatureFormula:
    int_points: np.ndarray   # (m, d) integers
    scale: float
    weights: np.ndarray      # (m,)
    degree: int
    name: str = ""

    def __post_init__(self):
        pts = np.asarray(self.int_points, dtype=np.int64)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(self.weights, dtype=float)
        if len(w) != len(pts):
            raise ValueError("one weight per point required")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "int_points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.int_points.shape[1]

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def points(self) -> np.ndarray:
        return self.scale * self.int_points

    @property
    def radius(self) -> int:
        """Largest integer coordinate magnitude, B."""
        return int(np.abs(self.int_points).max())

    def integrate(self, f) -> float:
        """Apply the formula to a vectorised f: (m, d) -> (m,)."""
        return float(self.weights @ np.asarray(f(self.points), dtype=float))


def gauss_1d_degree5() -> CubatureFormula:
    """Three-point rule {0, +-sqrt(3)} with weights {2/3, 1/6, 1/6}."""
    return CubatureFormula(np.array([[0], [1], [-1]]), SQRT3,
                           np.array([2 / 3, 1 / 6, 1 / 6]), 5, "gauss1d")


def victoir_degree5(d: int) -> CubatureFormula:
    """Degree-5 formula on sqrt(3){0,+-1}^d for d = 3k - 2.

    The origin carries the leftover mass and every block of the design
    contributes all 2^k sign patterns with one shared weight.  For d = 7
    this is the 57-point formula built on the Fano plane.
    """
    if d not in _DESIGNS:
        raise CapabilityError(
            f"degree-5 sign-orbit formula available for d in {sorted(_DESIGNS)}, got {d}")
    blocks = _DESIGNS[d]
    k = len(blocks[0])
    r = sum(1 for b in blocks if 0 in b)
    w = 1.0 / (3 * r * 2 ** k)
    pts = [np.zeros(d, dtype=np.int64)]
    for b in blocks:
        for signs in itertools.product((1, -1), repeat=k):
            p = np.zeros(d, dtype=np.int64)
            p[list(b)] = signs
            pts.append(p)
    weights = np.full(len(pts), w)
    weights[0] = 1.0 - w * (len(pts) - 1)
    return CubatureFormula(np.array(pts), SQRT3, weights, 5, f"victoir{d}")


def product_rule(base: CubatureFormula, d: int) -> CubatureFormula:
    """Tensor product of a one-dimensional rule with itself d times."""
    if base.dim != 1:
        raise ValueError("product rule needs a one-dimensional base")
    if d < 1:
        raise ValueError(f"d must be positive, got {d}")
    idx = np.array(list(itertools.product(range(base.size), repeat=d)))
    pts = base.int_points[idx, 0]
    weights = np.prod(base.weights[idx], axis=1)
    return CubatureFormula(pts, base.scale, weights, base.degree, f"product{d}")


# ------------------------------------------------------------- verification

def gaussian_moment(alpha) -> int:
    """E[prod x_i^alpha_i] under the standard Gaussian measure."""
    out = 1
    for a in alpha:
        if a % 2:
            return 0
        out *= math.prod(range(a - 1, 0, -2))
    return out


def monomials(d: int, max_degree: int):
    """All exponent tuples of total degree <= max_degree, by degree."""
    for deg in range(max_degree + 1):
        for combo in itertools.combinations_with_replacement(range(d), deg):
            alpha = [0] * d
            for i in combo:
                alpha[i] += 1
            yield tuple(alpha)


@dataclass
class ExactnessReport:
    max_error: float
    errors: dict     # exponent tuple -> absolute error

    def worst(self):
        return max(self.errors.items(), key=lambda kv: kv[1])


def verify_exactness(f: CubatureFormula, max_degree: int) -> ExactnessReport:
    pts = f.points
    errors = {}
    for alpha in monomials(f.dim, max_degree):
        vals = np.prod(pts ** np.asarray(alpha), axis=1)
        errors[alpha] = abs(math.fsum(f.weights * vals) - gaussian_moment(alpha))
    return ExactnessReport(max(errors.values()), errors)


def residue_classes_mod2(f: CubatureFormula) -> int:
    """Number of distinct integer point patterns modulo 2."""
    return len({tuple(p) for p in np.mod(f.int_points, 2)})
