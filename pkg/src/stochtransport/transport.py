"""Transport solutions by characteristics, and their weak-form verification.

The solution of  du + b(t,x) dx u + dx u d°Z = 0,  u(0,·) = u0  is the
composition u(t, x) = u0(Y_{0,t}(x)) with Y the inverse characteristic flow.
`solve_transport` evaluates that composition pointwise.

`solution_field` tabulates u(s, x) for every grid time s <= t on a spatial
node set by evolving one forward mesh of characteristics and inverting it by
monotone interpolation: the forward flow maps a fine start mesh y_j to
X_{0,s}(y_j), strictly increasing in y_j, so Y_{0,s}(x) is read off by
interpolating x back onto the start mesh.  One O(n * mesh) sweep replaces
n * nodes backward solves; the interpolation error is O(mesh spacing^2),
far below the weak-form tolerances this feeds.

`weak_form_residual` checks the distributional identity

    int u(t)phi = int u0 phi + int_0^t int u b phi' dx ds
                + int_0^t int u b' phi dx ds + int_0^t [int u phi' dx] d°Z_s

with trapezoidal space/time quadrature and the mollified-increment estimator
for the d°Z term, and reports the four right-hand terms, the left side, and
their mismatch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, NumericError
from .flow import DriftField, _forward_steps, backward_ensemble, backward_flow
from .grid import TimeGrid
from .noise import HermiteSpec, NoisePath, simulate_ensemble
from .rv import symmetric_integral_eps

_FD_STEP = 1e-5
_FD_TOL = 1e-6
_SAMPLE_X = np.linspace(-4.0, 4.0, 17)


@dataclass(frozen=True)
class InitialDatum:
    """Initial profile u0 with derivative and an optional slope floor.

    lower_bound_sq_derivative is a claimed constant C >= 0 with
    (u0'(x))^2 >= C; both the derivative and the floor are spot-checked at
    construction.
    """

    u0: Callable
    u0_prime: Callable
    lower_bound_sq_derivative: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.lower_bound_sq_derivative < 0:
            raise DomainError("slope floor must be nonnegative")
        vals = np.asarray(self.u0(_SAMPLE_X), dtype=float)
        der = np.asarray(self.u0_prime(_SAMPLE_X), dtype=float)
        fd = (np.asarray(self.u0(_SAMPLE_X + _FD_STEP))
              - np.asarray(self.u0(_SAMPLE_X - _FD_STEP))) / (2 * _FD_STEP)
        if np.max(np.abs(der - fd)) > _FD_TOL:
            raise DomainError("u0_prime disagrees with finite differences of u0")
        if self.lower_bound_sq_derivative > 0:
            if np.min(der**2) < self.lower_bound_sq_derivative - 1e-12:
                raise DomainError(
                    f"(u0')^2 dips below the claimed floor "
                    f"{self.lower_bound_sq_derivative} (min {np.min(der**2):.4f})")
        if vals.shape != _SAMPLE_X.shape:
            raise DomainError("u0 must broadcast elementwise over arrays")


@dataclass(frozen=True)
class TestFunction:
    """Compactly supported smooth test function with analytic derivative."""

    __test__ = False  # not a pytest class, despite the name

    phi: Callable
    phi_prime: Callable
    support: tuple[float, float]
    name: str = ""

    def __post_init__(self):
        a, b = self.support
        if a >= b:
            raise DomainError("support must be a nonempty interval")
        margin = np.array([a, b, a - 0.01 * (b - a), b + 0.01 * (b - a)])
        if np.max(np.abs(np.asarray(self.phi(margin), dtype=float))) > 1e-12:
            raise DomainError("phi must vanish at and outside its support edges")
        xs = np.linspace(a + 0.05 * (b - a), b - 0.05 * (b - a), 17)
        fd = (np.asarray(self.phi(xs + _FD_STEP))
              - np.asarray(self.phi(xs - _FD_STEP))) / (2 * _FD_STEP)
        if np.max(np.abs(np.asarray(self.phi_prime(xs)) - fd)) > _FD_TOL:
            raise DomainError("phi_prime disagrees with finite differences of phi")

    @classmethod
    def bump(cls, center: float = 0.0, radius: float = 1.0) -> "TestFunction":
        """exp(-1/(1-z^2)) on |z| < 1 with z = (x-center)/radius, else 0."""
        c, r = float(center), float(radius)

        def phi(x):
            z = (np.asarray(x, dtype=float) - c) / r
            out = np.zeros_like(z)
            inside = np.abs(z) < 1.0
            zi = z[inside]
            out[inside] = np.exp(-1.0 / (1.0 - zi * zi))
            return out

        def phi_prime(x):
            z = (np.asarray(x, dtype=float) - c) / r
            out = np.zeros_like(z)
            inside = np.abs(z) < 1.0
            zi = z[inside]
            w = 1.0 - zi * zi
            out[inside] = np.exp(-1.0 / w) * (-2.0 * zi / (w * w)) / r
            return out

        return cls(phi=phi, phi_prime=phi_prime, support=(c - r, c + r),
                   name=f"bump({c},{r})")


def solve_transport(u0: InitialDatum, b: DriftField, Z: NoisePath,
                    t: float, x) -> float:
    """u(t, x) = u0(Y_{0,t}(x)), evaluated by one backward solve."""
    return u0.u0(backward_flow(b, Z, x, 0.0, t))


def sample_solution(u0: InitialDatum, b: DriftField, spec: HermiteSpec,
                    grid: TimeGrid, t: float, x: float, paths: int,
                    seed: int) -> np.ndarray:
    """i.i.d. samples of u(t, x), one per driving path id 0..paths-1."""
    if paths < 1:
        raise DomainError("need at least one path")
    Z = simulate_ensemble(grid, spec, seed=seed, path_ids=range(paths))
    y = backward_ensemble(b, grid, Z, x, 0.0, t)
    return np.asarray(u0.u0(y), dtype=float)


def solution_field(u0: InitialDatum, b: DriftField, Z: NoisePath, t: float,
                   x_nodes: np.ndarray, mesh_dx: float | None = None,
                   pad: float | None = None) -> np.ndarray:
    """u(s, x) for every grid time s <= t and x in x_nodes.

    Built from one forward characteristic mesh; returns shape
    (grid index of t + 1, len(x_nodes)).
    """
    nodes = np.asarray(x_nodes, dtype=float)
    if np.any(np.diff(nodes) <= 0):
        raise DomainError("x_nodes must be strictly increasing")
    grid = Z.grid
    kt = grid.index_of(t)
    if mesh_dx is None:
        mesh_dx = float(np.min(np.diff(nodes))) if nodes.size > 1 else grid.dt
    if pad is None:
        swing = float(np.max(np.abs(Z.values[: kt + 1])))
        pad = swing + b.sup_norm_b * t + 0.5
    y_mesh = np.arange(nodes[0] - pad, nodes[-1] + pad + mesh_dx, mesh_dx)

    dz = np.diff(Z.values)
    if b.is_zero:
        shift = Z.values[: kt + 1] - Z.values[0]
        traj = y_mesh[None, :] + shift[:, None]
    else:
        traj = _forward_steps(b, grid, dz, y_mesh, 0, kt, record=True)

    out = np.empty((kt + 1, nodes.size))
    for j in range(kt + 1):
        row = traj[j]
        if row[0] > nodes[0] or row[-1] < nodes[-1]:
            raise NumericError("characteristic mesh does not cover the nodes; "
                               "increase pad")
        if np.any(np.diff(row) <= 0):
            raise NumericError("forward mesh lost monotonicity; refine the grid")
        out[j] = u0.u0(np.interp(nodes, row, y_mesh))
    return out


@dataclass(frozen=True)
class WeakFormReport:
    """The four right-hand terms of the weak identity and their mismatch."""

    t: float
    eps: float
    dt: float
    dx: float
    lhs: float
    terms: tuple[float, float, float, float]
    residual: float
    relative_residual: float

    def to_dict(self) -> dict:
        return {
            "t": self.t, "eps": self.eps, "dt": self.dt, "dx": self.dx,
            "lhs": self.lhs, "terms": list(self.terms),
            "residual": self.residual,
            "relative_residual": self.relative_residual,
        }


def weak_form_residual(u0: InitialDatum, b: DriftField, Z: NoisePath,
                       phi: TestFunction, t: float, eps: float,
                       x_quadrature: np.ndarray,
                       u_field: np.ndarray | None = None) -> WeakFormReport:
    """Evaluate both sides of the weak identity at time t.

    x_quadrature must contain phi's support padded by at least one cell.
    u_field optionally reuses a precomputed solution_field table (it is the
    expensive part and does not depend on eps).
    """
    x = np.asarray(x_quadrature, dtype=float)
    if np.any(np.diff(x) <= 0):
        raise DomainError("x_quadrature must be strictly increasing")
    a_s, b_s = phi.support
    cell = float(np.max(np.diff(x)))
    if x[0] > a_s - cell or x[-1] < b_s + cell:
        raise DomainError("x_quadrature must cover the support padded by one cell")

    grid = Z.grid
    kt = grid.index_of(t)
    if u_field is None:
        u_field = solution_field(u0, b, Z, t, x)
    if u_field.shape != (kt + 1, x.size):
        raise DomainError("u_field has the wrong shape for this grid/node set")

    phi_x = np.asarray(phi.phi(x), dtype=float)
    dphi_x = np.asarray(phi.phi_prime(x), dtype=float)

    lhs = float(np.trapezoid(u_field[kt] * phi_x, x))
    term1 = float(np.trapezoid(np.asarray(u0.u0(x), dtype=float) * phi_x, x))

    times = grid.points[: kt + 1]
    bx = np.asarray([b.b(tj, x) for tj in times], dtype=float)
    bpx = np.asarray([b.b_prime(tj, x) for tj in times], dtype=float)
    inner2 = np.trapezoid(u_field * bx * dphi_x[None, :], x, axis=1)
    inner3 = np.trapezoid(u_field * bpx * phi_x[None, :], x, axis=1)
    term2 = float(np.trapezoid(inner2, times))
    term3 = float(np.trapezoid(inner3, times))

    g = np.zeros(grid.n + 1)
    g[: kt + 1] = np.trapezoid(u_field * dphi_x[None, :], x, axis=1)
    term4 = symmetric_integral_eps(g, Z, eps, t)

    rhs = term1 + term2 + term3 + term4
    residual = abs(lhs - rhs)
    scale = max(abs(lhs), *(abs(v) for v in (term1, term2, term3, term4)))
    return WeakFormReport(
        t=float(t), eps=float(eps), dt=grid.dt, dx=cell, lhs=lhs,
        terms=(term1, term2, term3, term4), residual=residual,
        relative_residual=residual / scale if scale > 0 else residual,
    )
