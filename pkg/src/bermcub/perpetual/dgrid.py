"""Perpetual Bermudan values on a grid via D: f -> (c A f) v g."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..cubature import CubatureFormula
from ..errors import IterationError
from ..model import BlackScholes


@dataclass(frozen=True)
class Grid:
    """Uniform axis-aligned grid in log-price space."""

    lo: tuple
    hi: tuple
    n: tuple          # nodes per axis

    def __post_init__(self):
        for name in ("lo", "hi", "n"):
            object.__setattr__(self, name, tuple(np.atleast_1d(getattr(self, name)).tolist()))
        if not (len(self.lo) == len(self.hi) == len(self.n)):
            raise ValueError("lo, hi and n must have one entry per axis")
        if any(b <= a for a, b in zip(self.lo, self.hi)) or any(k < 2 for k in self.n):
            raise ValueError("each axis needs hi > lo and at least two nodes")

    @classmethod
    def around(cls, centre, half_width, step):
        centre = np.atleast_1d(np.asarray(centre, float))
        n = int(round(2 * half_width / step)) + 1
        return cls(tuple(centre - half_width), tuple(centre + half_width), (n,) * len(centre))

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple:
        return tuple(int(k) for k in self.n)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def steps(self) -> np.ndarray:
        return (np.asarray(self.hi) - np.asarray(self.lo)) / (np.asarray(self.n) - 1)

    def axes(self):
        return [np.linspace(a, b, k) for a, b, k in zip(self.lo, self.hi, self.shape)]

    def nodes(self) -> np.ndarray:
        """All nodes, C order, shape (size, d)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def interpolation_matrix(self, x) -> sp.csr_matrix:
        """Multilinear interpolation at points x, clamped to the grid box.

        Rows are nonnegative and sum to one, so the operator is a positive
        averaging map.
        """
        x = np.atleast_2d(np.asarray(x, float))
        lo, step, shape = np.asarray(self.lo), self.steps, np.asarray(self.shape)
        u = np.clip((x - lo) / step, 0.0, shape - 1)
        i0 = np.minimum(np.floor(u).astype(np.int64), shape - 2)
        frac = u - i0
        strides = np.array([int(np.prod(shape[a + 1:])) for a in range(self.dim)], dtype=np.int64)
        rows, cols, vals = [], [], []
        r = np.arange(len(x))
        for corner in itertools.product((0, 1), repeat=self.dim):
            c = np.asarray(corner)
            w = np.prod(np.where(c == 1, frac, 1.0 - frac), axis=1)
            rows.append(r)
            cols.append((i0 + c) @ strides)
            vals.append(w)
        m = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(len(x), self.size))
        return m.tocsr()


@dataclass
class GridFunction:
    grid: Grid
    values: np.ndarray   # flat, C order

    def __call__(self, x) -> np.ndarray:
        return self.grid.interpolation_matrix(x) @ self.values

    def reshaped(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)


def averaging_operator(grid: Grid, formula: CubatureFormula, model: BlackScholes,
                       h: float) -> sp.csr_matrix:
    """A f(x) = sum_j alpha_j f(x + mu h + sqrt(h) sigma xi_j), off-grid reads interpolated."""
    if formula.dim != grid.dim or model.dim != grid.dim:
        raise ValueError("grid, formula and model dimensions differ")
    nodes = grid.nodes()
    inc = model.drift * h + math.sqrt(h) * model.vol * formula.points
    A = None
    for w, dx in zip(formula.weights, inc):
        term = w * grid.interpolation_matrix(nodes + dx)
        A = term if A is None else A + term
    return A.tocsr()


def grid_margin(formula: CubatureFormula, model: BlackScholes, h: float) -> float:
    """Largest single-step displacement max_j |mu h + sqrt(h) sigma xi_j|."""
    inc = model.drift * h + math.sqrt(h) * model.vol * formula.points
    return float(np.abs(inc).max())


@dataclass
class DResult:
    q: GridFunction
    diffs: np.ndarray       # sup |q_{n+1} - q_n|
    ratios: np.ndarray      # diffs[n+1] / diffs[n]
    iterations: int
    monotone: bool          # every iterate dominated its predecessor
    residual: float         # sup |(c A q) v g - q|


def iterate_D(g, c: float, A, grid: Grid, tol: float = 1e-10,
              max_iter: int = 200_000) -> DResult:
    """Iterate q_{n+1} = (c A q_n) v g from q_0 = g v 0 until the step is below tol."""
    if not 0 < c < 1:
        raise ValueError(f"discount factor must lie in (0, 1), got {c}")
    g = np.asarray(g, float).ravel()
    q = np.maximum(g, 0.0)
    diffs = []
    monotone = True
    for _ in range(max_iter):
        nxt = np.maximum(c * (A @ q), g)
        step = nxt - q
        monotone &= bool(step.min() >= -1e-12 * max(1.0, np.abs(q).max()))
        diffs.append(float(np.abs(step).max()))
        q = nxt
        if diffs[-1] < tol:
            break
    else:
        raise IterationError(f"no convergence within {max_iter} iterations", diffs)
    diffs = np.array(diffs)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = diffs[1:] / diffs[:-1]
    residual = float(np.abs(np.maximum(c * (A @ q), g) - q).max())
    return DResult(GridFunction(grid, q), diffs, ratios, len(diffs), monotone, residual)


def exercise_region(q: GridFunction, g) -> np.ndarray:
    """Boolean mask of nodes where the value does not exceed the payoff."""
    return q.values <= np.asarray(g, float).ravel()


def mask_transitions(mask) -> int:
    """Number of True/False switches along a 1D mask."""
    m = np.asarray(mask, dtype=np.int8)
    return int(np.count_nonzero(np.diff(m)))
