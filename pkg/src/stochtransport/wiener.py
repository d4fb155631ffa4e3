"""Discrete Wiener noise on the time lattice.

Every stochastic object in the package is a deterministic function of one or
more of these lattices, so reproducibility reduces to the RNG contract here:
a counter-based Philox stream keyed by (seed, path_id). Streams for distinct
(seed, path_id) pairs are independent and do not depend on how many other
paths are drawn, which makes path-parallel Monte Carlo order-free.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError
from .grid import TimeGrid

__all__ = ["WienerLattice", "Perturbation", "generate", "generate_increments", "perturb"]


def _rng(seed: int, path_id: int) -> np.random.Generator:
    if seed < 0 or path_id < 0:
        raise DomainError("seed and path_id must be non-negative integers")
    # Philox takes a 128-bit key; splice the pair into disjoint 64-bit words.
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(path_id)))


@dataclass(frozen=True)
class WienerLattice:
    """Increments of a Brownian path over one TimeGrid.

    increments[i] ~ N(0, dt) covers the step [t_i, t_{i+1}]. The seed and
    path_id record how the base draw was produced; objects derived by
    perturbation keep them for provenance even though they no longer
    reproduce the (shifted) increments.
    """

    grid: TimeGrid
    seed: int
    path_id: int
    increments: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        if inc.shape != (self.grid.n,):
            raise DomainError(
                f"increments shape {inc.shape} does not match grid with n={self.grid.n}"
            )
        inc = inc.copy()
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    @property
    def values(self) -> np.ndarray:
        """Path values W_{t_k}, k = 0..n, with W_0 = 0."""
        out = np.empty(self.grid.n + 1)
        out[0] = 0.0
        np.cumsum(self.increments, out=out[1:])
        return out


def generate(grid: TimeGrid, seed: int, path_id: int = 0) -> WienerLattice:
    """Draw one Wiener lattice for (seed, path_id)."""
    inc = _rng(seed, path_id).standard_normal(grid.n) * np.sqrt(grid.dt)
    return WienerLattice(grid=grid, seed=seed, path_id=path_id, increments=inc)


def generate_increments(grid: TimeGrid, seed: int, path_ids) -> np.ndarray:
    """Increment matrix of shape (len(path_ids), n), one independent row per id.

    Row p depends only on (seed, path_ids[p]), never on the other rows, so any
    subset of paths can be regenerated in isolation.
    """
    path_ids = np.asarray(path_ids, dtype=np.int64)
    out = np.empty((path_ids.size, grid.n))
    root = np.sqrt(grid.dt)
    for row, pid in enumerate(path_ids):
        out[row] = _rng(seed, int(pid)).standard_normal(grid.n)
    out *= root
    return out


@dataclass(frozen=True)
class Perturbation:
    """Cameron–Martin style shift: add delta to the increment density on [a, b].

    The shift direction is h(t) = delta * measure([0, t] ∩ [a, b]), realized on
    the lattice by adding delta * dt to every increment whose step lies inside
    [a, b]. A step [t_i, t_{i+1}] counts as inside when both endpoints are
    (up to 1e-12 * T slack), which matches integrating the indicator 1_[a,b]
    against the step midpoints used everywhere else.
    """

    a: float
    b: float
    delta: float

    def __post_init__(self):
        if not (self.a < self.b):
            raise DomainError(f"need a < b, got [{self.a}, {self.b}]")

    def step_mask(self, grid: TimeGrid) -> np.ndarray:
        tol = 1e-12 * max(1.0, grid.T)
        if self.a < -tol or self.b > grid.T + tol:
            raise DomainError(f"[{self.a}, {self.b}] not inside [0, {grid.T}]")
        left = grid.points[:-1]
        right = grid.points[1:]
        return (left >= self.a - tol) & (right <= self.b + tol)

    def perturb(self, w: WienerLattice) -> WienerLattice:
        """Return a new lattice with the shifted increments; w is untouched."""
        mask = self.step_mask(w.grid)
        inc = w.increments.copy()
        inc[mask] += self.delta * w.grid.dt
        return replace(w, increments=inc)
