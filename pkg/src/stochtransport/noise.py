"""Lattice simulation of Hermite-class noise of rank 1 and 2.

Both ranks share one representation: the target process is a (multiple)
Wiener integral of the fractional kernel against a standard Brownian motion,
and the lattice version replaces the Brownian motion by its increments on a
uniform grid.

rank 1 (Gaussian):     Z(t_k) = sum_{i<k} K_H(t_k, m_i) dW_i  (m_i midpoints)
rank 2 (non-Gaussian): Z(t_k) = d * (dW' A_k dW - dt * tr A_k),
    A_k[i, j] = lambda-weighted cell average of L_{t_k} over cell_i x cell_j.

Rank 2 uses cell averages instead of pointwise kernel values.  Writing
L_t(y1, y2) = int dK(u, y1) dK(u, y2) du and exchanging the order of
integration, the average over a pair of cells factorizes through
F_i(u) = (1/dt) * int_{cell_i} dK(u, y) dy, so A is assembled window by
window from Gram matrices of the factor rows.  The square is Wick-ordered
(the deterministic trace term subtracted), which keeps the process centered
with the diagonal cells kept.  The tempting one-liner — kernels at step
midpoints, diagonal dropped — loses the kernel's L^2 mass in the band
|y1 - y2| < dt and near y = 0, a variance deficit of order
dt^(2H-1) + dt^(1-H); both exponents are small for H in (1/2, 1), so the
deficit is still 12-38% at n = 2^10.  Cell averages remove the evaluation
bias, and a deterministic per-window factor lambda_l >= 1 (_window_scales)
restores the mass a piecewise-constant-in-y projection cannot represent, so
that Var Z(t_k) = t_k^(2H) holds exactly at every grid point.

The pair sum is never formed entry by entry during simulation: the
u-integral splits across grid windows [t_l, t_{l+1}], and on each window the
chaos sum collapses to S(u_p) = sum_i F_i(u_p) dW_i, one small GEMM, with
graded Gauss-Legendre u-panels and Gauss-Jacobi y-rules placing every kernel
singularity inside a quadrature weight.  Cost is O(nodes * n^2) for a whole
path, not per output time.

pair_matrix accumulates the identical window quadrature into an explicit
matrix, so the Wick form d * (dW' A dW - dt * tr A) reproduces simulated
values to floating-point roundoff — downstream first-variation code relies
on that exact agreement.

lattice_variance/lattice_covariance return exact second moments of the
lattice process; at finite n a small increment-level bias remains (the grid
variances themselves are calibrated), and these let tests separate it from
Monte Carlo error.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import beta as _beta_fn

from .errors import DomainError, NumericError
from .grid import TimeGrid
from .kernels import HermiteSpec, _jacobi, c_H, d_H, hurst_prime, kernel_KH_matrix
from .wiener import WienerLattice, _rng, generate_increments

__all__ = [
    "NoisePath",
    "simulate_fbm",
    "simulate_hermite",
    "simulate_ensemble",
    "simulate_fbm_circulant",
    "pair_matrix",
    "lattice_variance",
    "lattice_covariance",
]


@dataclass(frozen=True)
class NoisePath:
    """One realized noise path on a grid, with the lattice that produced it."""

    grid: TimeGrid
    spec: HermiteSpec
    values: np.ndarray  # (n+1,), values[0] = 0
    source: WienerLattice

    def __post_init__(self):
        if self.values.shape != (self.grid.n + 1,):
            raise DomainError(
                f"values shape {self.values.shape} does not match grid with n={self.grid.n}"
            )
        if self.source.grid.key() != self.grid.key():
            raise DomainError("source lattice lives on a different grid")
        self.values.flags.writeable = False

    @property
    def driver(self) -> np.ndarray:
        return self.source.increments

    def value_at(self, t: float) -> float:
        return float(self.values[self.grid.index_of(t)])

    def increment(self, s: float, t: float) -> float:
        return self.value_at(t) - self.value_at(s)


@lru_cache(maxsize=32)
def _fbm_weights(grid_key, H: float, nodes: int = 24) -> np.ndarray:
    n, T = grid_key
    grid = TimeGrid(T=T, n=n)
    M = kernel_KH_matrix(grid.points[1:], grid.midpoints, H, nodes=nodes)
    M.flags.writeable = False
    return M


# Gauss-Legendre u-panels inside each window, graded toward the left edge
# where the newest cell's kernel factor blows up.
_U_GRADING = (0.0, 1.0 / 64.0, 1.0 / 8.0, 1.0)


class _WindowPlan:
    """Per-grid quadrature templates for cell-averaged kernel factor rows.

    factor_rows(l) returns (F, w): F[p, i] is the average of dK(u_p, y) over
    cell i (i <= l) at the window-l u-nodes u_p, and w the matching
    u-weights, so F.T @ diag(w) @ F is window l's contribution to the pair
    matrix and F @ dW[:l+1] evaluates the chaos integrand at the u-nodes.
    The y-integrals are exact up to the stated rules:

      - bulk cells: fixed Gauss-Legendre nodes, shared by every window;
      - cell 0: Gauss-Jacobi in y for the origin weight y^(1/2 - H');
      - cell l-1: substitution v = u - y, geometric panels doubling away
        from v = eps (the smallest u-offset keeps the rule finite);
      - cell l (the window's own): Gauss-Jacobi in v for the edge weight
        v^(H' - 3/2) on [0, eps];
      - window 0: one exact Beta integral.
    """

    def __init__(self, n: int, T: float, hp: float, c: float, nodes: int):
        self.n, self.hp, self.c = n, hp, c
        h = T / n
        self.h = h
        pts = np.linspace(0.0, T, n + 1)
        self.pts = pts
        m_y = max(2, nodes // 2)
        m_edge = max(4, nodes - 2)

        # u template: offsets and weights relative to the window start
        xg, wg = np.polynomial.legendre.leggauss(nodes)
        du, wu = [], []
        for a, b in zip(_U_GRADING[:-1], _U_GRADING[1:]):
            lo, hi = a * h, b * h
            half = (hi - lo) / 2.0
            du.append(lo + half * (xg + 1.0))
            wu.append(half * wg)
        self.du = np.concatenate(du)
        self.wu = np.concatenate(wu)
        self.M = self.du.size

        # bulk y nodes per cell; sum f(Yb[i]) @ wyb = average over cell i
        xb, wb = np.polynomial.legendre.leggauss(m_y)
        self.Yb = pts[:-1, None] + (h / 2.0) * (xb + 1.0)
        self.wyb = wb / 2.0
        self.Yb_pow = self.Yb ** (0.5 - hp)

        # origin cell: weight y^(1/2-hp) at the left endpoint of [0, h]
        x0, w0 = _jacobi(m_edge, 0.0, 0.5 - hp)
        self.y0 = (h / 2.0) * (x0 + 1.0)
        self.w0 = (h / 2.0) ** (1.5 - hp) * w0 / h  # carries the 1/h average

        # self cell: weight v^(hp-3/2) at v = 0; v in [0, eps], eps = du
        xs, ws = _jacobi(m_edge, 0.0, hp - 1.5)
        self.vs = self.du[:, None] * (xs + 1.0) / 2.0
        self.ws = (self.du[:, None] / 2.0) ** (hp - 0.5) * ws / h

        # near cell: v = u - y in [eps, eps + width]; width h covers a full
        # previous cell (l >= 2), width h/2 the upper half of cell 0 (l = 1,
        # whose lower half goes through the origin rule instead)
        xn, wn = np.polynomial.legendre.leggauss(m_edge)

        def near_template(width):
            Vn, Wn = [], []
            for p in range(self.M):
                eps = self.du[p]
                edges = [eps]
                while edges[-1] < eps + width:
                    edges.append(min(eps + width, 2.0 * edges[-1]))
                v_nodes, v_w = [], []
                for a, b in zip(edges[:-1], edges[1:]):
                    half = (b - a) / 2.0
                    v_nodes.append(a + half * (xn + 1.0))
                    v_w.append(half * wn)
                Vn.append(np.concatenate(v_nodes))
                Wn.append(np.concatenate(v_w) / h)
            L = max(v.size for v in Vn)
            V = np.ones((self.M, L))  # pad with 1.0; zero weight kills the value
            W = np.zeros((self.M, L))
            for p in range(self.M):
                V[p, : Vn[p].size] = Vn[p]
                W[p, : Wn[p].size] = Wn[p]
            return V, W

        self.Vn, self.Wn = near_template(h)
        self.Vn_half, self.Wn_half = near_template(h / 2.0)

        self.Beta0 = _beta_fn(1.5 - hp, hp - 0.5)

    def factor_rows(self, l: int):
        """(F, w) for window l: F[p, i] = cell-i average of dK(u_p, .)."""
        hp, c, h = self.hp, self.c, self.h
        u = self.pts[l] + self.du
        w = self.wu
        upow = c * u ** (hp - 0.5)
        F = np.zeros((self.M, l + 1))
        if l == 0:
            F[:, 0] = (c * self.Beta0 / h) * u ** (hp - 0.5)
            return F, w
        # self cell l: v-Jacobi
        ys = u[:, None] - self.vs
        F[:, l] = ((ys ** (0.5 - hp)) * self.ws).sum(axis=1) * upow
        # near cell l-1 (for l = 1 only its upper half)
        Vn, Wn = (self.Vn, self.Wn) if l >= 2 else (self.Vn_half, self.Wn_half)
        yn = np.where(Wn > 0, u[:, None] - Vn, 1.0)
        vals = yn ** (0.5 - hp) * Vn ** (hp - 1.5) * Wn
        F[:, l - 1] += vals.sum(axis=1) * upow
        if l == 1:
            # remainder of cell 0: y in (0, h/2], origin rule rescaled
            y = self.y0 / 2.0
            wj = self.w0 / 2.0 ** (1.5 - hp)
            F[:, 0] += ((u[:, None] - y) ** (hp - 1.5) * wj).sum(axis=1) * upow
            return F, w
        # origin cell 0
        F[:, 0] = (((u[:, None] - self.y0) ** (hp - 1.5)) * self.w0).sum(axis=1) * upow
        # bulk cells 1 .. l-2
        if l >= 3:
            Y = self.Yb[1 : l - 1]
            Yp = self.Yb_pow[1 : l - 1]
            diff = u[:, None, None] - Y[None]
            F[:, 1 : l - 1] = ((diff ** (hp - 1.5)) * Yp[None]) @ self.wyb * upow[:, None]
        return F, w


@lru_cache(maxsize=16)
def _window_plan(grid_key, hp: float, c: float, nodes: int) -> _WindowPlan:
    n, T = grid_key
    return _WindowPlan(n, T, hp, c, nodes)


@lru_cache(maxsize=16)
def _window_scales(grid_key, H: float, nodes: int) -> np.ndarray:
    """Variance-calibration factors lambda_l^2, one per window (rank 2).

    With A_k = sum_{l<k} lambda_l^2 W_l (W_l the window-l Gram matrix of the
    factor rows), the requirement Var Z(t_k) = 2 d^2 dt^2 ||A_k||_F^2
    = t_k^(2H) at every k reduces to one quadratic per window: writing
    x = <A_l, W_l>_F, y = ||W_l||_F^2 and
    tau = (t_{l+1}^(2H) - t_l^(2H)) / (2 d^2 dt^2), solve
    y * lam^4 + 2 x * lam^2 = tau for lam^2.  x, y, tau are all positive, so
    the positive root always exists; each window keeps one deterministic,
    adapted scale and path simulation stays a single incremental pass.  The
    factors absorb the L^2 mass a piecewise-constant-in-y projection cannot
    represent (lambda in [1.0, 1.3], largest on the first window).
    """
    n, T = grid_key
    hp = hurst_prime(2, H)
    c = c_H(hp)
    d = d_H(2, H)
    plan = _window_plan(grid_key, hp, c, nodes)
    pts = plan.pts
    pref = 2.0 * d * d * plan.h * plan.h
    A = np.zeros((n, n))
    lam2 = np.ones(n)
    for l in range(n):
        F, w = plan.factor_rows(l)
        B = F.T @ (w[:, None] * F)
        x = float((A[: l + 1, : l + 1] * B).sum())
        y = float((B * B).sum())
        tau = (pts[l + 1] ** (2.0 * H) - pts[l] ** (2.0 * H)) / pref
        lam2[l] = (-x + np.sqrt(x * x + y * tau)) / y
        A[: l + 1, : l + 1] += lam2[l] * B
    lam2.flags.writeable = False
    return lam2


def _from_driver(grid: TimeGrid, spec: HermiteSpec, dW: np.ndarray,
                 nodes: int = 8) -> np.ndarray:
    """Noise values from Brownian increment rows (paths, n) -> (paths, n+1)."""
    if dW.ndim != 2 or dW.shape[1] != grid.n:
        raise DomainError(f"driver shape {dW.shape} does not match grid with n={grid.n}")
    P, n = dW.shape
    out = np.zeros((P, n + 1))
    if spec.q == 1:
        M = _fbm_weights(grid.key(), spec.H)
        out[:, 1:] = dW @ M.T
        return out

    # rank 2: window-by-window Wick-ordered square of the factor rows
    d = spec.d
    h = grid.dt
    plan = _window_plan(grid.key(), spec.hp, spec.c, nodes)
    lam2 = _window_scales(grid.key(), spec.H, nodes)
    contrib = np.empty((P, n))
    for l in range(n):
        F, w = plan.factor_rows(l)
        S = dW[:, : l + 1] @ F.T
        mean_sq = h * float((F * F).sum(axis=1) @ w)  # E of (S*S) @ w
        contrib[:, l] = lam2[l] * ((S * S) @ w - mean_sq)
    out[:, 1:] = d * np.cumsum(contrib, axis=1)
    return out


def simulate_hermite(w: WienerLattice, spec: HermiteSpec, nodes: int = 8) -> NoisePath:
    """Rank-q noise driven by the given lattice; rank 1 equals simulate_fbm."""
    values = _from_driver(w.grid, spec, w.increments[None, :], nodes=nodes)
    return NoisePath(grid=w.grid, spec=spec, values=values[0], source=w)


def simulate_fbm(w: WienerLattice, H: float) -> NoisePath:
    """Gaussian (rank-1) noise from the moving-average kernel representation."""
    return simulate_hermite(w, HermiteSpec.create(1, H))


def simulate_ensemble(grid: TimeGrid, spec: HermiteSpec, seed: int, path_ids,
                      nodes: int = 8) -> np.ndarray:
    """Simulate many paths at once; returns (paths, n+1), first column zero.

    Row p is driven by the Brownian increments of path_ids[p], identical to
    what simulate_hermite would produce path by path.
    """
    dW = generate_increments(grid, seed, path_ids)
    return _from_driver(grid, spec, dW, nodes=nodes)


def simulate_fbm_circulant(grid: TimeGrid, H: float, seed: int, path_ids) -> np.ndarray:
    """Rank-1 paths by circulant embedding of the increment covariance.

    Validation oracle only: it samples the exact Gaussian law of fBm on the
    grid without going through the kernel representation, so it carries no
    usable Brownian driver.  Seeds index an unrelated stream; only laws are
    comparable with the kernel method, never paths.
    """
    from .kernels import _check_hurst

    H = _check_hurst(H)
    n = grid.n
    m = 2 * n
    k = np.arange(n + 1, dtype=float)
    gamma = 0.5 * grid.dt ** (2.0 * H) * (
        (k + 1.0) ** (2.0 * H) - 2.0 * k ** (2.0 * H) + np.abs(k - 1.0) ** (2.0 * H)
    )
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    eig = np.fft.fft(row).real
    if eig.min() < -1e-10 * eig.max():
        raise NumericError(
            f"circulant embedding not nonnegative definite (min eig {eig.min():.3e})"
        )
    eig = np.clip(eig, 0.0, None)

    path_ids = np.asarray(list(path_ids), dtype=np.int64)
    out = np.zeros((path_ids.size, n + 1))
    for rowi, pid in enumerate(path_ids):
        rng = _rng(seed, int(pid))
        z = np.empty(m, dtype=complex)
        g = rng.standard_normal(2)
        u = rng.standard_normal(n - 1)
        v = rng.standard_normal(n - 1)
        z[0] = np.sqrt(eig[0] / m) * g[0]
        z[n] = np.sqrt(eig[n] / m) * g[1]
        z[1:n] = np.sqrt(eig[1:n] / (2 * m)) * (u + 1j * v)
        z[n + 1:] = np.conj(z[1:n][::-1])
        fgn = np.fft.fft(z).real[:n]
        out[rowi, 1:] = np.cumsum(fgn)
    return out


@lru_cache(maxsize=8)
def _pair_matrix_cached(grid_key, H: float, k: int, nodes: int) -> np.ndarray:
    n, T = grid_key
    hp = hurst_prime(2, H)
    c = c_H(hp)
    plan = _window_plan(grid_key, hp, c, nodes)
    lam2 = _window_scales(grid_key, H, nodes)
    A = np.zeros((n, n))
    for l in range(k):
        F, w = plan.factor_rows(l)
        A[: l + 1, : l + 1] += lam2[l] * (F.T @ (w[:, None] * F))
    # The GEMM accumulation is symmetric only up to rounding; make it exact.
    A = 0.5 * (A + A.T)
    A.flags.writeable = False
    return A


def pair_matrix(grid: TimeGrid, spec: HermiteSpec, t: float, nodes: int = 8) -> np.ndarray:
    """Pair-interaction matrix A of the rank-2 noise at time t.

    Entry (i, j) is the calibrated cell average of the chaos kernel
    L_t(y1, y2) over cell_i x cell_j; symmetric with positive diagonal.
    The Wick form d * (dW' A dW - dt * tr A) equals the simulated Z(t) for
    the path driven by dW to roundoff, because the same window quadrature
    and calibration build both.
    """
    if spec.q != 2:
        raise DomainError("pair_matrix is defined for rank-2 noise only")
    k = grid.index_of(t)
    return _pair_matrix_cached(grid.key(), spec.H, k, nodes)


def lattice_covariance(grid: TimeGrid, spec: HermiteSpec, s: float, t: float,
                       nodes: int = 8) -> float:
    """Exact covariance E[Z(s) Z(t)] of the *lattice* noise, deterministically.

    Rank 1: dt * <K-row(s), K-row(t)>; rank 2: 2 d^2 dt^2 <A_s, A_t>, the
    Wick covariance of the centered quadratic forms.  Rank-2 variances are
    calibrated to t^(2H) at grid times, so the gap to the continuum value
    (t^2H + s^2H - |t-s|^2H)/2 is confined to s != t and shrinks with
    refinement; rank 1 carries the usual small midpoint bias.  Either way
    this is the exact second moment of what simulate_* samples, so tests
    can separate discretization bias from Monte Carlo error.
    """
    ks = grid.index_of(s)
    kt = grid.index_of(t)
    if spec.q == 1:
        M = _fbm_weights(grid.key(), spec.H)
        if ks == 0 or kt == 0:
            return 0.0
        return float(grid.dt * (M[ks - 1] @ M[kt - 1]))
    lam_s = pair_matrix(grid, spec, s, nodes=nodes)
    lam_t = pair_matrix(grid, spec, t, nodes=nodes)
    return float(2.0 * spec.d**2 * grid.dt**2 * (lam_s * lam_t).sum())


def lattice_variance(grid: TimeGrid, spec: HermiteSpec, t: float, nodes: int = 8) -> float:
    """Exact variance of the lattice noise at time t (see lattice_covariance)."""
    return lattice_covariance(grid, spec, t, t, nodes=nodes)
