"""Regularized calculus on lattice paths.

Two estimators built from mollified increments of a path X on a TimeGrid:

* the symmetric integral  I(eps, Y, dX)(t) = int_0^t Y_s (X_{s+eps} - X_{s-eps}) / (2 eps) ds
* the bracket             [X, Y]_{eps, t}  = (1/eps) int_0^t (X_{s+eps} - X_s)(Y_{s+eps} - Y_s) ds

X is frozen outside the horizon (X_s := X_0 for s < 0 and X_s := X_T for
s > T), which makes both estimators total functions of grid data at the cost
of an O(eps) boundary layer; `interior_only` restricts the s-range to
[eps, t - eps] so the layer can be reported separately.  All time integrals
are left-endpoint Riemann sums with step dt, and eps must be an integer
multiple of dt so the difference quotients never interpolate.

`qv_certificate` turns the bracket into a decision: a path family has
vanishing quadratic variation when the mean bracket decays like a positive
power of eps.  The certificate fits the log-log slope across an
EpsilonSchedule and checks decay, which a Wiener path (bracket ~ t, slope 0)
must fail.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ResolutionError, SampleSizeError
from .grid import TimeGrid
from .noise import NoisePath


@dataclass(frozen=True)
class EpsilonSchedule:
    """Strictly decreasing ladder of regularization widths."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise DomainError("schedule must be a non-empty 1-d array")
        if np.any(v <= 0):
            raise DomainError("every eps must be positive")
        if np.any(np.diff(v) >= 0):
            raise DomainError("eps values must be strictly decreasing")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def dyadic(cls, grid: TimeGrid, k_min: int = 3, k_max: int = 8) -> "EpsilonSchedule":
        """T·2^-k for k = k_min .. k_max, validated against the grid."""
        if k_min >= k_max:
            raise DomainError("k_min must be below k_max")
        eps = np.array([grid.T * 2.0**-k for k in range(k_min, k_max + 1)])
        for e in eps:
            _eps_steps(grid, e)
        return cls(values=eps)

    def __len__(self):
        return self.values.size


def _eps_steps(grid: TimeGrid, eps: float) -> int:
    """eps as a whole number of grid steps, >= 2."""
    k = int(round(eps / grid.dt))
    if abs(k * grid.dt - eps) > 1e-9 * grid.dt:
        raise ResolutionError(f"eps={eps} is not an integer multiple of dt={grid.dt}")
    if k < 2:
        raise ResolutionError(f"eps={eps} must be at least 2*dt={2 * grid.dt}")
    return k


def _resolve_grid(grid: TimeGrid | None, *objs) -> TimeGrid:
    for obj in objs:
        if isinstance(obj, NoisePath):
            if grid is not None and obj.grid.key() != grid.key():
                raise DomainError("explicit grid disagrees with the path's grid")
            grid = obj.grid
    if grid is None:
        raise DomainError("plain arrays need an explicit grid")
    return grid


def _as_values(obj, grid: TimeGrid):
    """Accept a NoisePath or a plain array of values on grid points."""
    if isinstance(obj, NoisePath):
        if obj.grid.key() != grid.key():
            raise DomainError("paths live on different grids")
        return obj.values
    arr = np.asarray(obj, dtype=float)
    if arr.shape != (grid.n + 1,):
        raise DomainError(f"expected {grid.n + 1} values on grid points, got {arr.shape}")
    return arr


def symmetric_integral_eps(Y, X, eps: float, t: float, grid: TimeGrid | None = None,
                           interior_only: bool = False) -> float:
    """Mollified integral int_0^t Y_s dX_s at regularization width eps.

    Y may be a NoisePath or an array on grid points (e.g. a deterministic
    integrand); X supplies the increments.  With interior_only the s-range
    shrinks to [eps, t - eps], removing the frozen-boundary layer.
    """
    g = _resolve_grid(grid, X, Y)
    xv = _as_values(X, g)
    yv = _as_values(Y, g)
    k = _eps_steps(g, eps)
    K = g.index_of(t)
    idx = np.arange(K)
    if interior_only:
        idx = idx[(idx >= k) & (idx < K - k)]
        if idx.size == 0:
            raise ResolutionError("interior range [eps, t-eps] is empty at this eps")
    hi = np.minimum(idx + k, g.n)
    lo = np.maximum(idx - k, 0)
    quot = (xv[hi] - xv[lo]) / (2.0 * eps)
    return float(np.sum(yv[idx] * quot) * g.dt)


def covariation_eps(X, Y, eps: float, t: float, grid: TimeGrid | None = None) -> float:
    """Bracket estimator (1/eps) int_0^t (X_{s+eps}-X_s)(Y_{s+eps}-Y_s) ds."""
    g = _resolve_grid(grid, X, Y)
    xv = _as_values(X, g)
    yv = _as_values(Y, g)
    k = _eps_steps(g, eps)
    K = g.index_of(t)
    idx = np.arange(K)
    hi = np.minimum(idx + k, g.n)
    dx = xv[hi] - xv[idx]
    dy = yv[hi] - yv[idx]
    return float(np.sum(dx * dy) * g.dt / eps)


@dataclass(frozen=True)
class QVReport:
    """Per-eps bracket statistics plus the fitted decay slope."""

    eps: np.ndarray
    means: np.ndarray
    stderrs: np.ndarray
    slope: float
    target: float
    passed: bool
    t: float
    paths: int

    def summary(self) -> dict:
        return {
            "slope": self.slope,
            "target": self.target,
            "pass": bool(self.passed),
        }

    def rows(self) -> list[tuple[float, float, float]]:
        return [(float(e), float(m), float(s))
                for e, m, s in zip(self.eps, self.means, self.stderrs)]


def qv_certificate(values: np.ndarray, grid: TimeGrid, H: float,
                   schedule: EpsilonSchedule, t: float | None = None) -> QVReport:
    """Estimate E[X,X]_{eps,t} across the schedule and certify decay.

    values: (paths, n+1) matrix of path values on grid points.  Passes iff
    the fitted log-log slope lies within 0.1 of 2H - 1 and the mean bracket
    at the smallest eps is below the mean at the largest eps.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[1] != grid.n + 1:
        raise DomainError("values must be a (paths, n+1) matrix on grid points")
    if values.shape[0] < 100:
        raise SampleSizeError(f"need at least 100 paths, got {values.shape[0]}")
    if len(schedule) < 3:
        raise DomainError("slope fit needs at least 3 eps values")
    if t is None:
        t = grid.T
    K = grid.index_of(t)
    dt = grid.dt

    means = np.empty(len(schedule))
    stderrs = np.empty(len(schedule))
    for i, eps in enumerate(schedule.values):
        k = _eps_steps(grid, eps)
        idx = np.arange(K)
        hi = np.minimum(idx + k, grid.n)
        d = values[:, hi] - values[:, idx]
        per_path = np.sum(d * d, axis=1) * dt / eps
        means[i] = per_path.mean()
        stderrs[i] = per_path.std(ddof=1) / np.sqrt(per_path.size)

    slope = float(np.polyfit(np.log(schedule.values), np.log(means), 1)[0])
    target = 2.0 * H - 1.0
    passed = bool(abs(slope - target) <= 0.1 and means[-1] < means[0])
    return QVReport(eps=schedule.values.copy(), means=means, stderrs=stderrs,
                    slope=slope, target=target, passed=passed,
                    t=float(t), paths=values.shape[0])
