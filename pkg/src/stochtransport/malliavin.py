"""First-variation (Malliavin) derivatives on the Wiener lattice.

On the discrete Wiener space spanned by the increments dW_i, the derivative
of a functional F at a point alpha inside step i is the coefficient of dW_i
in F, viewed as a step function of alpha:

rank 1:  D_alpha Z_t = K_H(t, m_i)                        (deterministic)
rank 2:  D_alpha Z_t = 2 d sum_j Lambda_t[i, j] dW_j      (order-1 chaos)

Both are exact derivatives of the values simulate_hermite produces, so
Cameron-Martin difference quotients close to first order in the shift with
no discretization gap: for rank 1 the quotient is independent of the shift
size, for rank 2 the remainder is exactly the quadratic term of the shift.

The inverse flow Y_{s,t}(x) satisfies a linear equation in the derivative:

    D_alpha Y_{s,t} = -int_s^t b'(u, Y_{u,t}) D_alpha Y_{u,t} du + DZ(s),
    DZ(u) := -(D_alpha Z_t - D_alpha Z_u),

solved here two independent ways that tests cross-check: forward
substitution on the time-reversed Volterra form (dY_integral_eq), and the
integrating-factor closed form (dY_closed_form, dY_profile)

    D_alpha Y_{s,t} = DZ(s)
        + int_s^t b'(r, Y_{r,t}) (D_alpha Z_t - D_alpha Z_r)
                   exp(-int_s^r b'(v, Y_{v,t}) dv) dr.

Density diagnostics follow the standard criterion: a functional whose
derivative has positive L^2([0,T]) norm on almost every path has an
absolutely continuous law.  density_bound_check evaluates the exponential
bracket that lower-bounds dY along the flow, and density_report inspects a
Monte Carlo sample for atoms and for vanishing derivative norms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import gaussian_kde

from .errors import (
    DomainError,
    NumericError,
    ResolutionError,
    SampleSizeError,
    StructuralViolationError,
    UnsupportedOrderError,
)
from .flow import DriftField, _check_times, backward_ensemble_trajectory, backward_trajectory
from .grid import TimeGrid
from .kernels import HermiteSpec, kernel_KH
from .noise import NoisePath, _fbm_weights, _window_plan, _window_scales, pair_matrix
from .wiener import WienerLattice

__all__ = [
    "MalliavinPath",
    "BoundCheckReport",
    "DensityReport",
    "dz_fbm",
    "dz_hermite",
    "dz_table",
    "dz_path",
    "dz_norm_ensemble",
    "dy_norm_ensemble",
    "increment_derivative",
    "dY_closed_form",
    "dY_integral_eq",
    "dY_profile",
    "du_chain",
    "mt_diagnostic",
    "density_bound_check",
    "density_report",
]

_UNIVERSAL_FLOOR = 1.0 - 0.5 * np.exp(-1.0)  # 1 + min of -x exp(-2x)
_FLOOR_SLACK = 1e-6


@dataclass(frozen=True)
class MalliavinPath:
    """A first-variation profile with its L^2 norm.

    axis "alpha": values[i] is D_alpha F for alpha in step i (length n);
    the squared norm is the exact integral of the step profile.
    axis "time": values[j] is the derivative of a trajectory at node j for
    one fixed alpha (any length up to n+1); the norm uses the trapezoid rule.
    """

    grid: TimeGrid
    values: np.ndarray
    target: str
    axis: str = "alpha"
    l2_norm_sq: float = field(init=False, default=0.0)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 1:
            raise DomainError("values must be one-dimensional")
        if self.axis == "alpha":
            if v.shape != (self.grid.n,):
                raise DomainError(
                    f"alpha profile needs one value per step, got {v.shape}")
            norm = float(np.sum(v * v) * self.grid.dt)
        elif self.axis == "time":
            if not 1 <= v.size <= self.grid.n + 1:
                raise DomainError("time profile does not fit on the grid")
            norm = float(np.trapezoid(v * v, dx=self.grid.dt))
        else:
            raise DomainError(f"unknown axis {self.axis!r}")
        object.__setattr__(self, "l2_norm_sq", norm)
        v.flags.writeable = False

    def rows(self) -> list[tuple[float, float]]:
        """(location, value) pairs for CSV output."""
        if self.axis == "alpha":
            locs = self.grid.midpoints
        else:
            locs = self.grid.points[: self.values.size]
        return [(float(a), float(v)) for a, v in zip(locs, self.values)]


def _step_of(grid: TimeGrid, alpha: float) -> int:
    """Index of the lattice step containing alpha (alpha in [0, T))."""
    if alpha < 0:
        raise DomainError(f"alpha={alpha} is negative")
    a = int(np.searchsorted(grid.points, alpha, side="right")) - 1
    return min(a, grid.n - 1)


def dz_fbm(t: float, alpha: float, H: float) -> float:
    """D_alpha of the rank-1 noise at time t: the kernel K_H(t, alpha).

    Deterministic (the noise is a Wiener integral of the kernel).  Zero for
    alpha >= t; alpha = 0 sits on the kernel singularity and is rejected.
    """
    if alpha == 0.0:
        raise DomainError("alpha = 0 is the kernel singularity")
    if alpha < 0:
        raise DomainError(f"alpha={alpha} is negative")
    if alpha >= t:
        return 0.0
    return kernel_KH(t, alpha, H)


def dz_hermite(w: WienerLattice, t: float, alpha: float, spec: HermiteSpec,
               nodes: int = 8) -> float:
    """D_alpha Z_t for the lattice noise driven by w.

    rank 1: the kernel value (independent of the path).  rank 2: the
    order-1 chaos sum 2 d (A_t @ dW)[a] over the step a containing alpha —
    the simulator's trace correction is deterministic and drops out — so
    difference quotients of simulated values close exactly.
    """
    if spec.q == 1:
        return dz_fbm(t, alpha, spec.H)
    if spec.q != 2:
        raise UnsupportedOrderError(f"rank {spec.q} not supported")
    if alpha < 0:
        raise DomainError(f"alpha={alpha} is negative")
    if alpha >= t:
        return 0.0
    k = w.grid.index_of(t)
    a = _step_of(w.grid, alpha)
    lam = pair_matrix(w.grid, spec, t, nodes=nodes)
    return float(2.0 * spec.d * (lam[a, :k] @ w.increments[:k]))


def dz_table(Z: NoisePath, nodes: int = 8) -> np.ndarray:
    """All lattice derivatives of one noise path: G[k, a] = D_alpha Z_{t_k}.

    Shape (n+1, n), row k supported on steps a < k.  rank 1 rows are the
    kernel weight rows; rank 2 rows are rebuilt by the same window
    quadrature as the simulator, accumulated incrementally so the whole
    table costs one extra pass over the path, O(nodes * n^2).
    """
    return _dz_table_raw(Z.grid, Z.spec, Z.driver, nodes)


def _dz_table_raw(grid: TimeGrid, spec: HermiteSpec, dW: np.ndarray,
                  nodes: int = 8) -> np.ndarray:
    n = grid.n
    G = np.zeros((n + 1, n))
    if spec.q == 1:
        G[1:] = _fbm_weights(grid.key(), spec.H)
        return G
    if spec.q != 2:
        raise UnsupportedOrderError(f"rank {spec.q} not supported")

    plan = _window_plan(grid.key(), spec.hp, spec.c, nodes)
    lam2 = _window_scales(grid.key(), spec.H, nodes)
    v = np.zeros(n)  # running A_{t_k} @ dW
    for l in range(n):
        F, w = plan.factor_rows(l)
        v[: l + 1] += lam2[l] * (F.T @ (w * (F @ dW[: l + 1])))
        G[l + 1] = 2.0 * spec.d * v
    return G


def dz_path(Z: NoisePath, t: float, nodes: int = 8) -> MalliavinPath:
    """The alpha-profile of D Z_t as a MalliavinPath."""
    k = Z.grid.index_of(t)
    G = dz_table(Z, nodes=nodes)
    return MalliavinPath(grid=Z.grid, values=G[k],
                         target=f"Z({t:g}) rank {Z.spec.q}")


def increment_derivative(Z: NoisePath, nodes: int = 8) -> Callable:
    """DZ(u, t, alpha) = D_alpha of the window term -(Z_t - Z_u), u <= t.

    u is calendar time and may be an array of lattice times; the result
    broadcasts.  Backed by the full lattice table, computed once.
    """
    G = dz_table(Z, nodes=nodes)
    grid = Z.grid
    dt = grid.dt

    def DZ(u, t: float, alpha: float):
        kt = grid.index_of(t)
        if alpha >= t:
            return np.zeros_like(np.asarray(u, dtype=float)) if np.ndim(u) else 0.0
        a = _step_of(grid, alpha)
        ku = np.rint(np.asarray(u, dtype=float) / dt).astype(int)
        if np.any(np.abs(np.asarray(u) - ku * dt) > 1e-9 * max(dt, 1.0)) or \
                np.any(ku < 0) or np.any(ku > kt):
            raise DomainError("u must be lattice times inside [0, t]")
        out = -(G[kt, a] - G[ku, a])
        return out if np.ndim(u) else float(out)

    return DZ


def _flow_rows(b: DriftField, Z: NoisePath, x: float, t: float,
               y_path: np.ndarray | None, kt: int) -> np.ndarray:
    """Values Y_{r,t}(x) on grid rows 0..kt, validated if supplied."""
    if y_path is None:
        return backward_trajectory(b, Z, x, t)
    y = np.asarray(y_path, dtype=float)
    if y.shape != (kt + 1,):
        raise DomainError(
            f"precomputed flow has shape {y.shape}, expected ({kt + 1},)")
    if y[kt] != x:
        raise DomainError("precomputed flow does not end at the anchor point")
    return y


def _cn_duhamel_weights(gam: np.ndarray, dt: float) -> np.ndarray:
    """Row vector w with S_m = w @ h for the trapezoid Volterra system.

    The system D_j = h_j - dt * trap(gam * D)_j has cumulative sums obeying
    S_j (1 + dt g_j / 2) = S_{j-1} (1 - dt g_{j-1} / 2)
                           + (g_{j-1} h_{j-1} + g_j h_j) / 2,
    whose explicit solution is a sum of the forcings propagated by
    Crank-Nicolson factors (the discrete integrating factor).  Returned are
    the coefficients of h_0..h_m in S_m, so D_m = h_m - dt * (w @ h)
    reproduces forward substitution to roundoff while converging to the
    continuum formula with exponential weights.
    """
    m = gam.size - 1
    c = 1.0 + 0.5 * dt * gam
    d = 1.0 - 0.5 * dt * gam
    if np.any(np.abs(c) < 0.5):
        raise ResolutionError("dt * |b'| too large for the discrete "
                              "integrating factor; refine the grid")
    # prop[i] = prod_{k=i}^{m} 1/c_k * prod_{k=i}^{m-1} d_k, the factor
    # carrying forcing f_i into S_m
    inv_c_rev = np.cumprod(1.0 / c[::-1])[::-1]          # prod_{k=i}^{m} 1/c_k
    d_rev = np.ones(m + 1)
    if m >= 1:
        d_rev[:m] = np.cumprod(d[m - 1::-1])[::-1]       # prod_{k=i}^{m-1} d_k
    prop = inv_c_rev * d_rev                             # index i = 1..m used
    # f_i = (g_{i-1} h_{i-1} + g_i h_i) / 2 spreads onto h_{i-1} and h_i
    w = np.zeros(m + 1)
    w[1:] += 0.5 * gam[1:] * prop[1:]
    w[:-1] += 0.5 * gam[:-1] * prop[1:]
    return w


def dY_closed_form(b: DriftField, Z: NoisePath, DZ: Callable, s: float,
                   t: float, alpha: float, x: float,
                   y_path: np.ndarray | None = None) -> float:
    """D_alpha Y_{s,t}(x) by the explicit integrating-factor formula.

    Evaluates the Duhamel solution of the same trapezoid-discretized
    Volterra system that dY_integral_eq solves sequentially, so the two
    routes agree to roundoff on any grid.  DZ must follow the
    increment_derivative convention; y_path optionally supplies the
    precomputed inverse flow on grid rows 0..index(t).
    """
    grid = Z.grid
    ks, kt = _check_times(grid, s, t)
    if alpha >= t:
        return 0.0
    h_s = float(DZ(s, t, alpha))
    if ks == kt or b.is_zero:
        return h_s
    y = _flow_rows(b, Z, x, t, y_path, kt)
    # reversed clock: j = 0..m maps to calendar time t - j*dt
    rev = grid.points[kt:ks - 1:-1] if ks > 0 else grid.points[kt::-1]
    yrev = y[kt:ks - 1:-1] if ks > 0 else y[kt::-1]
    gam = np.asarray(b.b_prime(rev, yrev), dtype=float)
    if gam.ndim == 0:
        gam = np.full(rev.size, float(gam))
    h = np.asarray(DZ(rev, t, alpha), dtype=float)
    w = _cn_duhamel_weights(gam, grid.dt)
    return float(h[-1] - grid.dt * (w @ h))


def dY_profile(b: DriftField, Z: NoisePath, s: float, t: float, x: float,
               nodes: int = 8, y_path: np.ndarray | None = None) -> MalliavinPath:
    """The whole alpha-profile of D Y_{s,t}(x) in one vectorized pass."""
    grid = Z.grid
    ks, kt = _check_times(grid, s, t)
    G = dz_table(Z, nodes=nodes)
    target = f"Y({s:g},{t:g})({x:g})"
    base = -(G[kt] - G[ks])
    if ks == kt or b.is_zero:
        return MalliavinPath(grid=grid, values=base, target=target)
    y = _flow_rows(b, Z, x, t, y_path, kt)
    times = grid.points[ks:kt + 1]
    gam = np.asarray(b.b_prime(times, y[ks:kt + 1]), dtype=float)
    if gam.ndim == 0:
        gam = np.full(times.size, float(gam))
    B = np.concatenate(([0.0], np.cumsum(0.5 * grid.dt * (gam[1:] + gam[:-1]))))
    cvec = gam * np.exp(-B)
    wtr = np.full(times.size, grid.dt)
    wtr[0] *= 0.5
    wtr[-1] *= 0.5
    cw = cvec * wtr
    values = base + G[kt] * cw.sum() - cw @ G[ks:kt + 1]
    return MalliavinPath(grid=grid, values=values, target=target)


def dz_norm_ensemble(grid: TimeGrid, spec: HermiteSpec, dW: np.ndarray,
                     t: float, nodes: int = 8) -> np.ndarray:
    """||D Z_t||^2_{L^2} per path for a (paths, n) matrix of increments.

    rank 1 is deterministic (one value broadcast); rank 2 is one GEMM
    against the cached pair matrix.
    """
    dW = np.asarray(dW, dtype=float)
    if dW.ndim != 2 or dW.shape[1] != grid.n:
        raise DomainError(f"increments shape {dW.shape} does not match the grid")
    k = grid.index_of(t)
    if spec.q == 1:
        M = np.zeros(grid.n)
        if k > 0:
            M[:] = _fbm_weights(grid.key(), spec.H)[k - 1]
        return np.full(dW.shape[0], float(np.sum(M * M) * grid.dt))
    if spec.q != 2:
        raise UnsupportedOrderError(f"rank {spec.q} not supported")
    if k == 0:
        return np.zeros(dW.shape[0])
    lam = pair_matrix(grid, spec, t, nodes=nodes)
    rows = 2.0 * spec.d * (dW @ lam)
    return np.sum(rows * rows, axis=1) * grid.dt


def dy_norm_ensemble(b: DriftField, grid: TimeGrid, spec: HermiteSpec,
                     z_values: np.ndarray, s: float, t: float, x: float,
                     dW: np.ndarray | None = None,
                     nodes: int = 8) -> np.ndarray:
    """||D Y_{s,t}(x)||^2_{L^2} per path, by the profile formula.

    z_values is the (paths, n+1) noise ensemble.  rank 1 shares one
    derivative table across paths, so the whole ensemble reduces to a
    single GEMM; rank 2 needs the driving increments dW and rebuilds the
    table path by path (quadratic in n per path).
    """
    z = np.asarray(z_values, dtype=float)
    if z.ndim != 2 or z.shape[1] != grid.n + 1:
        raise DomainError(f"ensemble shape {z.shape} does not match the grid")
    P = z.shape[0]
    ks, kt = _check_times(grid, s, t)
    if spec.q == 2 and dW is None:
        raise DomainError("rank-2 ensembles need the driving increments dW")
    if spec.q == 1:
        G = _dz_table_raw(grid, spec, np.empty((0,)), nodes)
        base = -(G[kt] - G[ks])
        if ks == kt or b.is_zero:
            return np.full(P, float(np.sum(base * base) * grid.dt))
        cw = _ensemble_flow_weights(b, grid, z, ks, kt, x)  # (m+1, P)
        V = base[None, :] + cw.sum(axis=0)[:, None] * G[kt][None, :] \
            - cw.T @ G[ks:kt + 1]
        return np.sum(V * V, axis=1) * grid.dt
    if spec.q != 2:
        raise UnsupportedOrderError(f"rank {spec.q} not supported")
    dW = np.asarray(dW, dtype=float)
    if dW.shape != (P, grid.n):
        raise DomainError("dW must pair with z_values row by row")
    if ks != kt and not b.is_zero:
        cw = _ensemble_flow_weights(b, grid, z, ks, kt, x)
    else:
        cw = None
    out = np.empty(P)
    for p in range(P):
        G = _dz_table_raw(grid, spec, dW[p], nodes)
        base = -(G[kt] - G[ks])
        if cw is None:
            V = base
        else:
            V = base + cw[:, p].sum() * G[kt] - cw[:, p] @ G[ks:kt + 1]
        out[p] = np.sum(V * V) * grid.dt
    return out


def _ensemble_flow_weights(b: DriftField, grid: TimeGrid, z: np.ndarray,
                           ks: int, kt: int, x: float) -> np.ndarray:
    """Trapezoid-weighted b' e^{-int b'} along the inverse flow, per path."""
    traj = backward_ensemble_trajectory(b, grid, z, x, grid.points[kt])
    rows = traj[ks:kt + 1]  # (m+1, paths)
    times = grid.points[ks:kt + 1]
    gam = np.asarray(
        [np.broadcast_to(np.asarray(b.b_prime(tj, rows[j]), dtype=float),
                         rows[j].shape)
         for j, tj in enumerate(times)])
    B = np.zeros_like(gam)
    B[1:] = np.cumsum(0.5 * grid.dt * (gam[1:] + gam[:-1]), axis=0)
    cvec = gam * np.exp(-B)
    wtr = np.full(times.size, grid.dt)
    wtr[0] *= 0.5
    wtr[-1] *= 0.5
    return cvec * wtr[:, None]


def dY_integral_eq(b: DriftField, Z: NoisePath, DZ: Callable, t: float,
                   alpha: float, x: float, tol: float = 1e-10) -> MalliavinPath:
    """D_alpha of the time-reversed state, all reversed times u in [0, t].

    Solves the linear Volterra equation by forward substitution with
    trapezoidal quadrature; entry j is D_alpha Y_{t - u_j, t}(x).  The
    solve is direct; tol bounds the a-posteriori residual of the discrete
    system (a roundoff guard, not an iteration control).
    """
    grid = Z.grid
    kt = grid.index_of(t)
    target = f"R({t:g},{x:g}) alpha={alpha:g}"
    # h_j = DZ over the window [t - u_j, t]
    rev = grid.points[kt::-1]  # calendar times t - u_j
    h = np.asarray(DZ(rev, t, alpha), dtype=float)
    if kt == 0 or b.is_zero:
        return MalliavinPath(grid=grid, values=h, target=target, axis="time")
    y = backward_trajectory(b, Z, x, t)
    gam = np.asarray(b.b_prime(rev, y[::-1]), dtype=float)
    if gam.ndim == 0:
        gam = np.full(rev.size, float(gam))
    dt = grid.dt
    pivots = 1.0 + 0.5 * dt * gam
    if np.any(np.abs(pivots) < 0.5):
        raise ResolutionError("dt * |b'| too large for the Volterra solve; "
                              "refine the grid")
    D = np.zeros(kt + 1)
    D[0] = h[0]  # = 0 by adaptedness
    running = 0.5 * gam[0] * D[0]
    for j in range(1, kt + 1):
        D[j] = (h[j] - dt * running) / pivots[j]
        running += gam[j] * D[j]
    gd = gam * D
    trap = np.concatenate(([0.0], np.cumsum(0.5 * dt * (gd[1:] + gd[:-1]))))
    residual = float(np.max(np.abs(D + trap - h)))
    if residual > tol * (1.0 + float(np.max(np.abs(h)))):
        raise NumericError(
            f"Volterra residual {residual:.3e} above tolerance {tol:.1e}")
    return MalliavinPath(grid=grid, values=D, target=target, axis="time")


def du_chain(u0, Y_value: float, dY: MalliavinPath) -> MalliavinPath:
    """Chain rule: D u = u0'(Y) * D Y, with the norm recomputed."""
    slope = float(u0.u0_prime(Y_value))
    return MalliavinPath(grid=dY.grid, values=slope * dY.values,
                         target=f"u0'(Y)*[{dY.target}]", axis=dY.axis)


def mt_diagnostic(grid: TimeGrid, spec: HermiteSpec, times=None,
                  nodes: int = 8) -> float:
    """max over a probe (u, t) grid of E ||D(Z_t - Z_u)||^2.

    Deterministic:  rank 1 uses kernel-row differences, rank 2 the exact
    identity E ||D(Z_t - Z_u)||^2 = 4 d^2 dt^2 ||Lambda_t - Lambda_u||_F^2.
    Diagnostic only; the probe grid defaults to the eighths of [0, T].
    """
    if times is None:
        idx = np.unique(np.round(np.linspace(0, grid.n, 9)).astype(int))
        times = grid.points[idx]
    k_probe = sorted({grid.index_of(t) for t in np.atleast_1d(times)})
    worst = 0.0
    if spec.q == 1:
        M = np.zeros((grid.n + 1, grid.n))
        M[1:] = _fbm_weights(grid.key(), spec.H)
        for i, ku in enumerate(k_probe):
            for kt in k_probe[i:]:
                val = grid.dt * float(np.sum((M[kt] - M[ku]) ** 2))
                worst = max(worst, val)
        return worst
    if spec.q != 2:
        raise UnsupportedOrderError(f"rank {spec.q} not supported")
    lams = {k: pair_matrix(grid, spec, grid.points[k], nodes=nodes)
            for k in k_probe if k > 0}
    lams[0] = 0.0
    for i, ku in enumerate(k_probe):
        for kt in k_probe[i:]:
            diff = lams[kt] - lams[ku]
            val = 4.0 * spec.d**2 * grid.dt**2 * float(np.sum(diff * diff))
            worst = max(worst, val)
    return worst


@dataclass(frozen=True)
class BoundCheckReport:
    """Per-path values of the exponential flow bracket and its floors."""

    s: float
    t: float
    x: float
    paths: int
    brackets: np.ndarray
    floor_condition: float
    floor_universal: float
    passed: bool

    @property
    def min_bracket(self) -> float:
        return float(np.min(self.brackets))

    def to_dict(self) -> dict:
        q = np.quantile(self.brackets, [0.0, 0.05, 0.5, 1.0])
        return {
            "s": self.s, "t": self.t, "x": self.x, "paths": self.paths,
            "min_bracket": q[0], "q05_bracket": q[1],
            "median_bracket": q[2], "max_bracket": q[3],
            "floor_condition": self.floor_condition,
            "floor_universal": self.floor_universal,
            "passed": self.passed,
        }


def density_bound_check(b: DriftField, grid: TimeGrid, z_values: np.ndarray,
                        s: float, t: float, x: float,
                        strict: bool = True) -> BoundCheckReport:
    """Evaluate the flow bracket 1 + int_s^t b' e^{-int_s^u b'} du per path.

    The bracket multiplies the noise derivative in dY and must stay
    positive for the density criterion; with f(m) = -m exp(-2m) it is
    asserted to exceed both 1 + f(||b'||_inf (t-s)) - 1e-6 and the
    universal constant 1 - e^{-1}/2.  Those floors hold when the drift
    slope integral along the flow stays above about -0.169; strict=True
    raises StructuralViolationError on violation, strict=False only
    reports (for drifts that genuinely sit below the floor).
    """
    z = np.asarray(z_values, dtype=float)
    if z.ndim != 2 or z.shape[1] != grid.n + 1:
        raise DomainError(f"ensemble shape {z.shape} does not match the grid")
    if z.shape[0] < 100:
        raise SampleSizeError(f"need at least 100 paths, got {z.shape[0]}")
    ks, kt = _check_times(grid, s, t)
    if ks == kt:
        brackets = np.ones(z.shape[0])
    else:
        traj = backward_ensemble_trajectory(b, grid, z, x, t)  # (kt+1, paths)
        rows = traj[ks:kt + 1]
        times = grid.points[ks:kt + 1]
        gam = np.asarray(
            [np.broadcast_to(np.asarray(b.b_prime(tj, rows[j]), dtype=float),
                             rows[j].shape)
             for j, tj in enumerate(times)])
        dt = grid.dt
        B = np.zeros_like(gam)
        B[1:] = np.cumsum(0.5 * dt * (gam[1:] + gam[:-1]), axis=0)
        integrand = gam * np.exp(-B)
        brackets = 1.0 + np.trapezoid(integrand, dx=dt, axis=0)

    m_bar = b.sup_norm_bprime * (t - s)
    floor_condition = 1.0 - m_bar * np.exp(-2.0 * m_bar) - _FLOOR_SLACK
    passed = bool(np.min(brackets) > max(floor_condition, _UNIVERSAL_FLOOR))
    report = BoundCheckReport(
        s=float(s), t=float(t), x=float(x), paths=z.shape[0],
        brackets=brackets, floor_condition=float(floor_condition),
        floor_universal=float(_UNIVERSAL_FLOOR), passed=passed,
    )
    if strict and not passed:
        raise StructuralViolationError(
            f"flow bracket fell to {report.min_bracket:.6f}, below its floor "
            f"{max(floor_condition, _UNIVERSAL_FLOOR):.6f} "
            "(drift slope too negative, or a solver inconsistency)")
    return report


@dataclass(frozen=True)
class DensityReport:
    """KDE summary plus the two density-criterion diagnostics."""

    count: int
    bandwidth: float
    x_grid: np.ndarray
    density: np.ndarray
    mass: float
    max_cdf_jump: float
    min_norm_sq: float
    norm_quantiles: dict
    passed: bool

    def __post_init__(self):
        if not 0.99 <= self.mass <= 1.01:
            raise NumericError(
                f"KDE mass {self.mass:.4f} outside [0.99, 1.01]; widen the grid")
        if self.min_norm_sq < 0:
            raise DomainError("derivative norms cannot be negative")

    def to_dict(self) -> dict:
        return {
            "count": self.count, "bandwidth": self.bandwidth,
            "mass": self.mass, "max_cdf_jump": self.max_cdf_jump,
            "min_norm_sq": self.min_norm_sq,
            "norm_quantiles": dict(self.norm_quantiles),
            "passed": self.passed,
        }


def density_report(samples: np.ndarray, norms: np.ndarray,
                   bandwidth_rule="silverman") -> DensityReport:
    """Atom and degeneracy diagnostics for a Monte Carlo sample.

    samples are realizations of the target functional, norms the matching
    per-path ||DF||^2 values.  Flags: the largest empirical-CDF jump must
    not exceed 3/sqrt(N) (no atoms) and every norm must be positive
    (derivative criterion).  bandwidth_rule is any scipy KDE bw_method.
    """
    samples = np.asarray(samples, dtype=float)
    norms = np.asarray(norms, dtype=float)
    if samples.ndim != 1 or norms.shape != samples.shape:
        raise DomainError("samples and norms must be matching 1-d arrays")
    N = samples.size
    if N < 1000:
        raise SampleSizeError(f"need at least 1000 samples, got {N}")

    kde = gaussian_kde(samples, bw_method=bandwidth_rule)
    bw = float(np.sqrt(kde.covariance[0, 0]))
    x_grid = np.linspace(samples.min() - 5 * bw, samples.max() + 5 * bw, 801)
    density = kde(x_grid)
    mass = float(np.trapezoid(density, x_grid))

    _, counts = np.unique(samples, return_counts=True)
    max_jump = float(counts.max()) / N
    min_norm = float(np.min(norms))
    qlv = [0.0, 0.01, 0.05, 0.25, 0.5]
    quants = {f"q{int(100 * p):02d}": float(v)
              for p, v in zip(qlv, np.quantile(norms, qlv))}
    passed = max_jump <= 3.0 / np.sqrt(N) and min_norm > 0.0
    return DensityReport(
        count=N, bandwidth=bw, x_grid=x_grid, density=density, mass=mass,
        max_cdf_jump=max_jump, min_norm_sq=min_norm, norm_quantiles=quants,
        passed=passed,
    )
