"""Recombining lattice of cubature-point sums.

A node at level k is identified by the integer vector c obtained by summing
k integer cubature points.  Its log-price position is

    x0 + k * mu * h + sqrt(h) * sigma * scale * c

so the drift never enters the key.  Coordinates are packed into a single
int64 with a fixed radix, which makes successor keys additive: the key of
c + p_j is key(c) + delta_j.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cubature import CubatureFormula
from .errors import ResourceError

DENSE_MARK_LIMIT = 1 << 26
DEFAULT_NODE_BUDGET = 20_000_000


@dataclass(frozen=True)
class KeyCodec:
    """Bijection between bounded integer vectors and int64 keys."""

    dim: int
    bound: int   # |c_i| <= bound for every stored vector

    def __post_init__(self):
        if self.radix ** self.dim >= 2 ** 62:
            raise ResourceError(
                f"key space {self.radix}^{self.dim} does not fit in 64-bit keys")

    @property
    def radix(self) -> int:
        return 2 * self.bound + 1

    @property
    def powers(self) -> np.ndarray:
        return self.radix ** np.arange(self.dim, dtype=np.int64)

    @property
    def size(self) -> int:
        return self.radix ** self.dim

    def encode(self, coords) -> np.ndarray:
        c = np.asarray(coords, dtype=np.int64)
        if np.any(np.abs(c) > self.bound):
            raise ValueError("coordinates outside codec bound")
        return (c + self.bound) @ self.powers

    def delta(self, coords) -> np.ndarray:
        """Key increment of adding integer vectors (no offset)."""
        return np.asarray(coords, dtype=np.int64) @ self.powers

    def decode(self, keys) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.int64)
        out = np.empty(keys.shape + (self.dim,), dtype=np.int64)
        rest = keys.copy()
        for i in range(self.dim):
            out[..., i] = rest % self.radix - self.bound
            rest //= self.radix
        return out


@dataclass
class LevelMap:
    """Nodes of one time level with an optional value buffer."""

    level: int
    keys: np.ndarray        # sorted, unique
    codec: KeyCodec
    x0: np.ndarray
    drift_step: np.ndarray  # mu * h
    space_step: np.ndarray  # sqrt(h) * sigma * scale
    values: np.ndarray | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.keys)

    @property
    def coords(self) -> np.ndarray:
        return self.codec.decode(self.keys)

    def positions(self) -> np.ndarray:
        """Log-price vectors of the nodes, shape (n, d)."""
        return self.x0 + self.level * self.drift_step + self.space_step * self.coords

    def index(self, keys) -> np.ndarray:
        """Positions of ``keys`` in this level; every key must be present."""
        idx = np.searchsorted(self.keys, keys)
        idx_c = np.minimum(idx, len(self.keys) - 1)
        if np.any(self.keys[idx_c] != keys):
            raise KeyError(f"key not present at level {self.level}")
        return idx_c

    def lookup(self, coords) -> float:
        return float(self.values[self.index(self.codec.encode(coords))])


def successors(coords, f: CubatureFormula):
    """One (coords + p_j, alpha_j) pair per cubature point."""
    c = np.asarray(coords, dtype=np.int64)
    if c.shape != (f.dim,):
        raise ValueError(f"coordinate dimension {c.shape} does not match formula d={f.dim}")
    return [(c + p, float(w)) for p, w in zip(f.int_points, f.weights)]


def _next_keys(keys, deltas, codec):
    if codec.size <= DENSE_MARK_LIMIT:
        mark = np.zeros(codec.size, dtype=bool)
        chunk = max(1, 4_000_000 // max(len(keys), 1))
        for s in range(0, len(deltas), chunk):
            mark[(keys[:, None] + deltas[None, s:s + chunk]).ravel()] = True
        return np.flatnonzero(mark).astype(np.int64)
    out = np.empty(0, dtype=np.int64)
    for dlt in deltas:
        out = np.union1d(out, keys + dlt)
    return out


def build_levels(x0, f: CubatureFormula, N: int, h: float, drift=None, vol=None,
                 node_budget: int | None = DEFAULT_NODE_BUDGET) -> list[LevelMap]:
    """Levels 0..N of the recombined lattice started at x0."""
    if N < 0:
        raise ValueError(f"N must be nonnegative, got {N}")
    if not h > 0:
        raise ValueError(f"mesh must be positive, got {h}")
    d = f.dim
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (d,)).copy()
    drift = np.zeros(d) if drift is None else np.broadcast_to(np.asarray(drift, float), (d,))
    vol = np.ones(d) if vol is None else np.broadcast_to(np.asarray(vol, float), (d,))
    codec = KeyCodec(d, max(N, 1) * f.radius)
    deltas = codec.delta(f.int_points)
    common = dict(codec=codec, x0=x0, drift_step=drift * h,
                  space_step=math.sqrt(h) * vol * f.scale)
    keys = codec.encode(np.zeros((1, d), dtype=np.int64))
    levels = [LevelMap(0, keys, **common)]
    for k in range(1, N + 1):
        keys = _next_keys(keys, deltas, codec)
        if node_budget is not None and len(keys) > node_budget:
            raise ResourceError(
                f"level {k} has {len(keys)} nodes, budget is {node_budget}")
        levels.append(LevelMap(k, keys, **common))
    return levels


def node_bound(f: CubatureFormula, k: int) -> int:
    return (2 * k * f.radius + 1) ** f.dim
