"""Pathwise characteristic flows driven by lattice noise.

Forward flow   X_{s,t}(x) = x + int_s^t b(u, X_{s,u}(x)) du + (Z_t - Z_s)
Backward flow  Y_{s,t}(x) = x - int_s^t b(r, Y_{r,t}(x)) dr - (Z_t - Z_s)

The noise is additive, so each lattice step adds the exact noise increment
and only the drift needs quadrature: an implicit trapezoidal step, solved by
fixed-point iteration to near machine tolerance.  Reading that step equation
backwards is exactly the forward step between the same two values, so the
discrete backward flow inverts the discrete forward flow to solver tolerance
rather than to O(dt) — the composition error is dominated by the iteration
cutoff, not the scheme.

The backward equation anchored at t is equivalent to the time-reversed
integral equation

    R(u) = x - int_0^u b(t - a, R(a)) da - (Z_t - Z_{t-u}),   u in [0, t],

which `picard_solve` attacks by global fixed-point iteration with trapezoidal
quadrature.  Its fixed point satisfies the same per-step equations as the
stepwise backward solver, so the two agree to iteration tolerance; tests and
calling code rely on that.

Zero-drift flows shortcut to pure translation by the noise increment, which
keeps them exact to the bit and reproducible per seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConvergenceError, DomainError, ResolutionError
from .grid import TimeGrid
from .noise import NoisePath

_FD_STEP = 1e-5
_FD_TOL = 1e-6
_STEP_TOL = 1e-13
_STEP_MAX_ITER = 60

_SAMPLE_T = np.array([0.0, 0.31, 0.64, 1.0])
_SAMPLE_X = np.linspace(-3.0, 3.0, 13)


@dataclass(frozen=True)
class DriftField:
    """A drift b(t, x) together with its spatial derivative and sup-norms.

    Both callables must broadcast over numpy arrays in x.  Consistency of
    b_prime with centered finite differences of b, and the claimed sup-norms,
    are validated on a fixed sample of (t, x) points at construction.
    """

    b: Callable
    b_prime: Callable
    sup_norm_b: float
    sup_norm_bprime: float
    name: str = ""

    def __post_init__(self):
        for t in _SAMPLE_T:
            bv = np.asarray(self.b(t, _SAMPLE_X), dtype=float)
            bp = np.asarray(self.b_prime(t, _SAMPLE_X), dtype=float)
            fd = (np.asarray(self.b(t, _SAMPLE_X + _FD_STEP))
                  - np.asarray(self.b(t, _SAMPLE_X - _FD_STEP))) / (2 * _FD_STEP)
            if np.max(np.abs(bp - fd)) > _FD_TOL:
                raise DomainError(
                    f"b_prime disagrees with finite differences of b "
                    f"(max gap {np.max(np.abs(bp - fd)):.2e} at t={t})")
            if np.max(np.abs(bv)) > self.sup_norm_b + 1e-9:
                raise DomainError(f"|b| exceeds declared sup norm {self.sup_norm_b} at t={t}")
            if np.max(np.abs(bp)) > self.sup_norm_bprime + 1e-9:
                raise DomainError(
                    f"|b_prime| exceeds declared sup norm {self.sup_norm_bprime} at t={t}")

    @property
    def is_zero(self) -> bool:
        return self.sup_norm_b == 0.0 and self.sup_norm_bprime == 0.0


def _check_times(grid: TimeGrid, s: float, t: float) -> tuple[int, int]:
    if s > t:
        raise DomainError(f"need s <= t, got s={s} > t={t}")
    return grid.index_of(s), grid.index_of(t)


def _solve_step(b: DriftField, t_new: float, rhs, x_guess, h: float):
    """Solve x = rhs + (h/2) * b(t_new, x) by fixed-point iteration."""
    x = np.asarray(x_guess, dtype=float)
    half = 0.5 * h
    for _ in range(_STEP_MAX_ITER):
        x_next = rhs + half * np.asarray(b.b(t_new, x), dtype=float)
        gap = np.max(np.abs(x_next - x))
        x = x_next
        if gap <= _STEP_TOL * (1.0 + np.max(np.abs(x))):
            return x
    raise ConvergenceError(
        f"drift step did not contract (h*sup|b'| = {h * b.sup_norm_bprime:.3g}); "
        "refine the grid")


def _forward_steps(b: DriftField, grid: TimeGrid, dz: np.ndarray, x0,
                   ks: int, kt: int, record: bool):
    """March x through steps ks..kt-1; dz[k] is the noise increment of step k."""
    pts = grid.points
    h = grid.dt
    x = np.asarray(x0, dtype=float)
    traj = [x] if record else None
    for k in range(ks, kt):
        f0 = np.asarray(b.b(pts[k], x), dtype=float)
        rhs = x + 0.5 * h * f0 + dz[k]
        x = _solve_step(b, pts[k + 1], rhs, x + h * f0 + dz[k], h)
        if record:
            traj.append(x)
    return np.array(traj) if record else x


def _backward_steps(b: DriftField, grid: TimeGrid, dz: np.ndarray, x_anchor,
                    ks: int, kt: int, record: bool):
    """March y down from the anchor at index kt to index ks."""
    pts = grid.points
    h = grid.dt
    y = np.asarray(x_anchor, dtype=float)
    traj = [y] if record else None
    for k in range(kt - 1, ks - 1, -1):
        f1 = np.asarray(b.b(pts[k + 1], y), dtype=float)
        rhs = y - 0.5 * h * f1 - dz[k]
        y = _solve_step(b, pts[k], rhs, y - h * f1 - dz[k], -h)
        if record:
            traj.append(y)
    if record:
        traj.reverse()
        return np.array(traj)
    return y


def forward_flow(b: DriftField, Z: NoisePath, x, s: float, t: float):
    """X_{s,t}(x): start at x at time s, integrate drift + noise up to t."""
    ks, kt = _check_times(Z.grid, s, t)
    if ks == kt:
        return np.asarray(x, dtype=float) + 0.0
    dz = np.diff(Z.values)
    if b.is_zero:
        return np.asarray(x, dtype=float) + (Z.values[kt] - Z.values[ks])
    return _forward_steps(b, Z.grid, dz, x, ks, kt, record=False)


def backward_flow(b: DriftField, Z: NoisePath, x, s: float, t: float):
    """Y_{s,t}(x): anchor at x at time t, integrate down to time s."""
    ks, kt = _check_times(Z.grid, s, t)
    if ks == kt:
        return np.asarray(x, dtype=float) + 0.0
    dz = np.diff(Z.values)
    if b.is_zero:
        return np.asarray(x, dtype=float) - (Z.values[kt] - Z.values[ks])
    return _backward_steps(b, Z.grid, dz, x, ks, kt, record=False)


def forward_trajectory(b: DriftField, Z: NoisePath, x, s: float, t: float):
    """X_{s,r}(x) for every grid time r in [s, t], stacked along axis 0."""
    ks, kt = _check_times(Z.grid, s, t)
    dz = np.diff(Z.values)
    if b.is_zero:
        base = np.asarray(x, dtype=float)
        inc = Z.values[ks:kt + 1] - Z.values[ks]
        return base[None, ...] + inc.reshape((-1,) + (1,) * base.ndim)
    return _forward_steps(b, Z.grid, dz, x, ks, kt, record=True)


def backward_trajectory(b: DriftField, Z: NoisePath, x, t: float):
    """Y_{r,t}(x) for every grid time r in [0, t]; row r is the state at r."""
    ks, kt = _check_times(Z.grid, 0.0, t)
    dz = np.diff(Z.values)
    if b.is_zero:
        base = np.asarray(x, dtype=float)
        inc = Z.values[kt] - Z.values[ks:kt + 1]
        return base[None, ...] - inc.reshape((-1,) + (1,) * base.ndim)
    return _backward_steps(b, Z.grid, dz, x, ks, kt, record=True)


def picard_solve(b: DriftField, Z: NoisePath, x: float, t: float, u: float,
                 tol: float | None = None, max_iter: int = 64,
                 warm_start: bool = False) -> tuple[float, int]:
    """Solve the time-reversed equation at reversed time u by Picard iteration.

    Iterates R(a) = x - int_0^u b(t-a, R(a)) da - (Z_t - Z_{t-u}) on the
    reversed lattice a = 0..u with trapezoidal quadrature, starting from
    R == x (or from x plus the noise term if warm_start).  Returns
    (R(u), iterations); the converged value does not depend on the start.
    """
    grid = Z.grid
    if u > t:
        raise DomainError(f"reversed time u={u} exceeds anchor t={t}")
    kt = grid.index_of(t)
    ku = grid.index_of(u)
    if tol is None:
        tol = 1e-10 * (1.0 + abs(x))
    if ku == 0:
        return float(x), 0

    # values of the reversed clock: a_j = j*dt, real time t - a_j
    rev_times = grid.points[kt] - grid.points[:ku + 1]
    z_term = -(Z.values[kt] - Z.values[kt - np.arange(ku + 1)])
    h = grid.dt

    R = x + z_term if warm_start else np.full(ku + 1, float(x))
    for it in range(1, max_iter + 1):
        drift = np.asarray(b.b(rev_times, R), dtype=float)
        if np.isscalar(drift) or drift.ndim == 0:
            drift = np.full(ku + 1, float(drift))
        # cumulative trapezoid of -b(t-a, R(a)) over the reversed lattice
        integral = np.concatenate(
            ([0.0], np.cumsum(0.5 * h * (drift[1:] + drift[:-1]))))
        R_next = x - integral + z_term
        gap = np.max(np.abs(R_next - R))
        R = R_next
        if gap < tol:
            return float(R[ku]), it
    raise ConvergenceError(
        f"no fixed point after {max_iter} iterations (last change {gap:.3e})")


@dataclass(frozen=True)
class FlowSolution:
    """Flow values on a time x space lattice, anchored at one end.

    Backward solutions cover grid times 0..anchor with the anchor as the
    last row; forward solutions start at the anchor as row 0.  The anchor
    row equals x_nodes exactly.  Rows must be strictly increasing across
    nodes — a violated ordering means the step map folded over, i.e. the
    grid is too coarse for this drift.
    """

    grid: TimeGrid
    x_nodes: np.ndarray
    values: np.ndarray
    direction: str
    anchor: float
    noise: NoisePath

    def __post_init__(self):
        nodes = np.asarray(self.x_nodes, dtype=float)
        if np.any(np.diff(nodes) <= 0):
            raise DomainError("x_nodes must be strictly increasing")
        if self.direction not in ("forward", "backward"):
            raise DomainError(f"unknown direction {self.direction!r}")
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[1] != nodes.size:
            raise DomainError("values must be (times, nodes)")
        ai = self.grid.index_of(self.anchor)
        if self.direction == "backward":
            if vals.shape[0] != ai + 1:
                raise DomainError("backward solution must cover every time up to the anchor")
            anchor_row = vals.shape[0] - 1
        else:
            if vals.shape[0] != self.grid.n - ai + 1:
                raise DomainError("forward solution must cover every time from the anchor on")
            anchor_row = 0
        if not np.array_equal(vals[anchor_row], nodes):
            raise DomainError("anchor row must equal x_nodes exactly")
        if np.any(np.diff(vals, axis=1) <= 0):
            raise ResolutionError(
                "flow values are not strictly increasing across nodes; "
                "the time step is too coarse for this drift")
        object.__setattr__(self, "x_nodes", nodes)
        object.__setattr__(self, "values", vals)

    def time_of_row(self, j: int) -> float:
        if self.direction == "backward":
            return float(self.grid.points[j])
        return float(self.grid.points[self.grid.index_of(self.anchor) + j])

    def rows(self) -> list[tuple[float, float, float, float, str, int]]:
        """(s, t, x, value, direction, path_id) tuples for serialization."""
        out = []
        pid = self.noise.source.path_id
        for j in range(self.values.shape[0]):
            tj = self.time_of_row(j)
            for i, xi in enumerate(self.x_nodes):
                if self.direction == "backward":
                    out.append((tj, self.anchor, float(xi),
                                float(self.values[j, i]), "backward", pid))
                else:
                    out.append((self.anchor, tj, float(xi),
                                float(self.values[j, i]), "forward", pid))
        return out


def inverse_flow_field(b: DriftField, Z: NoisePath, t: float,
                       x_nodes: np.ndarray) -> FlowSolution:
    """Y_{r,t}(x) for all grid times r <= t and all nodes, order-checked."""
    nodes = np.asarray(x_nodes, dtype=float)
    if np.any(np.diff(nodes) <= 0):
        raise DomainError("x_nodes must be sorted strictly increasing")
    traj = backward_trajectory(b, Z, nodes, t)
    return FlowSolution(grid=Z.grid, x_nodes=nodes, values=traj,
                        direction="backward", anchor=float(t), noise=Z)


# ---------------------------------------------------------------------------
# Ensemble variants: one spatial point, many noise paths at once.
# ---------------------------------------------------------------------------

def _ensemble_steps(b: DriftField, grid: TimeGrid, z_values: np.ndarray, x: float,
                    ks: int, kt: int, direction: str, record: bool):
    z_values = np.asarray(z_values, dtype=float)
    if z_values.ndim != 2 or z_values.shape[1] != grid.n + 1:
        raise DomainError("z_values must be (paths, n+1)")
    dz = np.diff(z_values, axis=1)
    paths = z_values.shape[0]
    if direction == "forward":
        if b.is_zero:
            inc = z_values[:, ks:kt + 1] - z_values[:, ks:ks + 1]
            out = x + inc.T
            return out if record else out[-1]
        state = np.zeros(paths) + np.asarray(x, dtype=float)
        traj = [state] if record else None
        pts, h = grid.points, grid.dt
        for k in range(ks, kt):
            f0 = np.asarray(b.b(pts[k], state), dtype=float)
            rhs = state + 0.5 * h * f0 + dz[:, k]
            state = _solve_step(b, pts[k + 1], rhs, state + h * f0 + dz[:, k], h)
            if record:
                traj.append(state)
        return np.array(traj) if record else state
    else:
        if b.is_zero:
            inc = z_values[:, kt:kt + 1] - z_values[:, ks:kt + 1]
            out = x - inc.T
            return out if record else out[0]
        state = np.zeros(paths) + np.asarray(x, dtype=float)
        traj = [state] if record else None
        pts, h = grid.points, grid.dt
        for k in range(kt - 1, ks - 1, -1):
            f1 = np.asarray(b.b(pts[k + 1], state), dtype=float)
            rhs = state - 0.5 * h * f1 - dz[:, k]
            state = _solve_step(b, pts[k], rhs, state - h * f1 - dz[:, k], -h)
            if record:
                traj.append(state)
        if record:
            traj.reverse()
            return np.array(traj)
        return state


def forward_ensemble(b: DriftField, grid: TimeGrid, z_values: np.ndarray,
                     x: float, s: float, t: float) -> np.ndarray:
    """X_{s,t}(x) per path for a (paths, n+1) matrix of noise values."""
    ks, kt = _check_times(grid, s, t)
    return _ensemble_steps(b, grid, z_values, x, ks, kt, "forward", record=False)


def backward_ensemble(b: DriftField, grid: TimeGrid, z_values: np.ndarray,
                      x: float, s: float, t: float) -> np.ndarray:
    """Y_{s,t}(x) per path."""
    ks, kt = _check_times(grid, s, t)
    return _ensemble_steps(b, grid, z_values, x, ks, kt, "backward", record=False)


def backward_ensemble_trajectory(b: DriftField, grid: TimeGrid,
                                 z_values: np.ndarray, x: float,
                                 t: float) -> np.ndarray:
    """Y_{r,t}(x) for all grid r <= t, per path: shape (kt+1, paths)."""
    ks, kt = _check_times(grid, 0.0, t)
    return _ensemble_steps(b, grid, z_values, x, ks, kt, "backward", record=True)
