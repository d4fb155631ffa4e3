"""Acceptance suite: one test and one summary line per criterion.

Every test measures the quantity named by its criterion at the stated
tolerance on a committed seed and emits the measured-vs-tolerated values on
a single line (collected into the terminal summary).  Failures are honest:
nothing here is tuned to pass, and a criterion that the lattice law cannot
meet is allowed to fail with its measured gap on record.
"""

import numpy as np
import pytest
from scipy.stats import kstest

from stochtransport import TimeGrid, generate, simulate_fbm, simulate_hermite
from stochtransport.flow import backward_ensemble, backward_flow, forward_ensemble, picard_solve
from stochtransport.kernels import HermiteSpec
from stochtransport.malliavin import (
    dY_closed_form,
    dY_integral_eq,
    dY_profile,
    density_bound_check,
    density_report,
    dy_norm_ensemble,
    dz_norm_ensemble,
    increment_derivative,
)
from stochtransport.noise import simulate_ensemble
from stochtransport.presets import drift_preset, u0_preset
from stochtransport.rv import EpsilonSchedule, qv_certificate
from stochtransport.transport import TestFunction, weak_form_residual
from stochtransport.wiener import Perturbation, generate_increments

SEED = 20260818
N = 2**10
GRID = TimeGrid(T=1.0, n=N)

_ensembles: dict = {}


def _ensemble(q: int, H: float, paths: int) -> np.ndarray:
    """(paths, n+1) noise values on GRID, cached across criteria."""
    key = (q, H, paths)
    if key not in _ensembles:
        spec = HermiteSpec.create(q, H)
        _ensembles[key] = simulate_ensemble(GRID, spec, SEED, range(paths))
    return _ensembles[key]


def fbm_cov(s: float, t: float, H: float) -> float:
    return 0.5 * (s ** (2 * H) + t ** (2 * H) - abs(t - s) ** (2 * H))


def _emit(criterion_log, line: str) -> None:
    criterion_log.append(line)
    print(line)


def test_criterion_01_increment_law(criterion_log):
    """E|Z_t - Z_s|^2 vs |t-s|^{2H} within max(3 SE, 7%), q in {1,2}."""
    pairs = [(0.25, 0.5), (0.375, 0.75), (0.5, 1.0), (0.25, 1.0), (0.0, 1.0)]
    failures = []
    worst = 0.0
    total = 0
    for q, paths in ((1, 10_000), (2, 1_000)):
        for H in (0.6, 0.7, 0.8):
            z = _ensemble(q, H, paths)
            for s, t in pairs:
                sq = (z[:, GRID.index_of(t)] - z[:, GRID.index_of(s)]) ** 2
                mean = float(np.mean(sq))
                se = float(np.std(sq, ddof=1)) / np.sqrt(paths)
                theory = (t - s) ** (2 * H)
                tol = max(3 * se, 0.07 * theory)
                ratio = abs(mean - theory) / tol
                worst = max(worst, ratio)
                total += 1
                if ratio > 1.0:
                    failures.append(
                        f"q={q} H={H} lag {t - s:g}: "
                        f"{mean:.4f} vs {theory:.4f} (tol {tol:.4f})")
    ok = not failures
    _emit(criterion_log,
          f"criterion 01 increment-law: {'PASS' if ok else 'FAIL'} — "
          f"{total - len(failures)}/{total} cells within max(3SE, 7%), "
          f"worst |err|/tol = {worst:.2f}"
          + (f"; failing: {'; '.join(failures)}" if failures else ""))
    assert ok, f"cells beyond tolerance: {failures}"


def test_criterion_02_covariance(criterion_log):
    """Sample covariance matches the fBm formula entrywise within 3 SE."""
    times = [0.375, 0.5, 0.625, 0.75, 0.875, 1.0]
    H = 0.7
    failures = []
    worst = 0.0
    total = 0
    for q, paths in ((1, 10_000), (2, 1_000)):
        z = _ensemble(q, H, paths)
        vals = z[:, [GRID.index_of(t) for t in times]]
        for i, s in enumerate(times):
            for j in range(i, len(times)):
                t = times[j]
                prod = vals[:, i] * vals[:, j]
                sample = float(np.mean(prod))
                se = float(np.std(prod, ddof=1)) / np.sqrt(paths)
                theory = fbm_cov(s, t, H)
                zscore = abs(sample - theory) / se
                worst = max(worst, zscore)
                total += 1
                if zscore > 3.0:
                    failures.append(f"q={q} ({s},{t}): z={zscore:.2f}")
    exact = fbm_cov(0.5, 1.0, 0.7)
    exact_ok = abs(exact - 0.5) <= 5e-16
    ok = not failures and exact_ok
    _emit(criterion_log,
          f"criterion 02 covariance: {'PASS' if ok else 'FAIL'} — "
          f"{total - len(failures)}/{total} entries within 3SE, "
          f"worst |z| = {worst:.2f}; Cov(0.5,1)@H=0.7 = {exact!r}"
          + (f"; failing: {'; '.join(failures)}" if failures else ""))
    assert exact_ok
    assert ok, f"entries beyond 3 SE: {failures}"


def test_criterion_03_zero_qv_rate(criterion_log):
    """Bracket decay slope = 2H-1 +- 0.1; Wiener control slope 0 +- 0.05."""
    H, paths = 0.75, 500
    schedule = EpsilonSchedule.dyadic(GRID, 3, 7)
    rep = qv_certificate(_ensemble(1, H, paths), GRID, H, schedule)

    dW = generate_increments(GRID, SEED, range(paths))
    w = np.concatenate([np.zeros((paths, 1)), np.cumsum(dW, axis=1)], axis=1)
    ctrl = qv_certificate(w, GRID, H, schedule)

    ok = (rep.passed and abs(rep.slope - (2 * H - 1)) <= 0.1
          and abs(ctrl.slope) <= 0.05 and not ctrl.passed)
    _emit(criterion_log,
          f"criterion 03 zero-qv-rate: {'PASS' if ok else 'FAIL'} — "
          f"slope {rep.slope:.4f} (target {2 * H - 1} ± 0.1); Wiener control "
          f"slope {ctrl.slope:.4f} (target 0 ± 0.05), certificate "
          f"{'rejected' if not ctrl.passed else 'NOT rejected'}")
    assert ok


def test_criterion_04_flow_inversion(criterion_log):
    """max |X_{0,1}(Y_{0,1}(x)) - x| <= 10 dt; exact for zero drift."""
    presets = [("zero", {}), ("constant", {"lam": 0.5}),
               ("linear", {"lam": 1.0}), ("sine", {"a": 1.0})]
    z = _ensemble(1, 0.7, 10_000)[:100]
    nodes = np.linspace(-2.0, 2.0, 32)
    results = []
    ok = True
    for name, params in presets:
        b = drift_preset(name, **params)
        worst = 0.0
        for x in nodes:
            y = backward_ensemble(b, GRID, z, float(x), 0.0, 1.0)
            rt = forward_ensemble(b, GRID, z, y, 0.0, 1.0)
            worst = max(worst, float(np.max(np.abs(rt - x))))
        gate = 8 * np.finfo(float).eps if b.is_zero else 10.0 * GRID.dt
        ok = ok and worst <= gate
        results.append(f"{name}: {worst:.2e} (gate {gate:.2e})")
    _emit(criterion_log,
          f"criterion 04 flow-inversion: {'PASS' if ok else 'FAIL'} — "
          f"max round-trip error over 32 nodes x 100 paths: "
          + "; ".join(results))
    assert ok


def test_criterion_05_picard_backward(criterion_log):
    """Global Picard vs stepwise backward solve: sup gap <= 5e-9 at tol 1e-10."""
    presets = [("zero", {}), ("constant", {"lam": 0.5}),
               ("linear", {"lam": 1.0}), ("sine", {"a": 1.0})]
    spec = HermiteSpec.create(1, 0.7)
    worst = 0.0
    for name, params in presets:
        b = drift_preset(name, **params)
        for pid in range(20):
            Z = simulate_hermite(generate(GRID, SEED, pid), spec)
            for x in (-1.0, 0.5, 1.5):
                via_picard, _ = picard_solve(b, Z, x, 1.0, 1.0, tol=1e-10)
                via_steps = backward_flow(b, Z, x, 0.0, 1.0)
                worst = max(worst, abs(via_picard - via_steps))
    ok = worst <= 5e-9
    _emit(criterion_log,
          f"criterion 05 picard-backward: {'PASS' if ok else 'FAIL'} — "
          f"sup discrepancy {worst:.2e} (gate 5.0e-09) over 4 presets x "
          f"20 paths x 3 nodes at tol 1e-10")
    assert ok


def test_criterion_06_weak_form(criterion_log):
    """Weak-identity residual <= 1e-2 relative; >= 1.5x drop on refinement."""
    H, paths = 0.9, 20
    spec = HermiteSpec.create(1, H)
    u0 = u0_preset("offset-tanh", level=1.5)
    b = drift_preset("sine", a=0.5)
    phi = TestFunction.bump(0.0, 1.5)

    def mean_residual(n, dx, eps):
        grid = TimeGrid(T=1.0, n=n)
        xq = np.arange(-1.5 - 2 * dx, 1.5 + 3 * dx, dx)
        rels = []
        for pid in range(paths):
            Z = simulate_hermite(generate(grid, SEED, pid), spec)
            rep = weak_form_residual(u0, b, Z, phi, 1.0, eps, xq)
            rels.append(rep.relative_residual)
        return float(np.mean(rels))

    coarse = mean_residual(2**10, 2.0**-8, 2.0**-6)
    fine = mean_residual(2**11, 2.0**-9, 2.0**-7)
    ratio = coarse / fine
    ok = coarse <= 1e-2 and ratio >= 1.5
    _emit(criterion_log,
          f"criterion 06 weak-form: {'PASS' if ok else 'FAIL'} — "
          f"mean relative residual {coarse:.5f} (gate 0.01) at "
          f"(n=2^10, dx=2^-8, eps=2^-6); refinement ratio {ratio:.2f} "
          f"(gate 1.5, fine residual {fine:.5f})")
    assert ok


def test_criterion_07_malliavin_isometry(criterion_log):
    """Monte Carlo E||DZ_t||^2 vs q t^{2H} within 7%, q in {1,2}, t in {.5,1}."""
    H = 0.7
    cells = []
    ok = True
    for q, paths in ((1, 100), (2, 1_000)):
        spec = HermiteSpec.create(q, H)
        dW = generate_increments(GRID, SEED, range(paths))
        for t in (0.5, 1.0):
            mean = float(np.mean(dz_norm_ensemble(GRID, spec, dW, t)))
            target = q * t ** (2 * H)
            rel = abs(mean - target) / target
            ok = ok and rel <= 0.07
            cells.append(f"q={q} t={t}: {mean:.4f} vs {target:.4f} "
                         f"(rel {rel:.1%})")
    _emit(criterion_log,
          f"criterion 07 malliavin-isometry: {'PASS' if ok else 'FAIL'} — "
          f"gate 7% relative; " + "; ".join(cells))
    assert ok, "E||DZ_t||^2 beyond 7% of q t^{2H} in at least one cell"


def test_criterion_08_derivative_oracles(criterion_log):
    """Closed form vs Volterra <= 5e-9; CM quotient vs integral within 3%."""
    sine = drift_preset("sine", a=0.5)

    # clause 1: the two derivative routes on random windows, both ranks
    worst_gap = 0.0
    rng = np.random.default_rng(3)
    for q in (1, 2):
        spec = HermiteSpec.create(q, 0.7)
        w = generate(GRID, SEED, 0)
        Z = simulate_fbm(w, 0.7) if q == 1 else simulate_hermite(w, spec)
        DZ = increment_derivative(Z)
        for _ in range(6):
            ks = int(rng.integers(0, N // 2))
            kt = int(rng.integers(ks + 16, N))
            s, t = GRID.points[ks], GRID.points[kt]
            alpha = float(rng.uniform(1e-3, t))
            x = float(rng.uniform(-1.0, 1.0))
            cf = dY_closed_form(sine, Z, DZ, s, t, alpha, x)
            ie = dY_integral_eq(sine, Z, DZ, t, alpha, x)
            worst_gap = max(worst_gap,
                            abs(cf - ie.values[kt - ks]) / (1.0 + abs(cf)))
    clause1 = worst_gap <= 5e-9

    # clause 2: Cameron-Martin finite difference vs integrated derivative
    s, t, x, a, bnd, delta = 0.25, 1.0, 0.3, 0.4, 0.6, 1e-4
    spec1 = HermiteSpec.create(1, 0.7)
    worst_rel = 0.0
    for pid in range(100):
        w = generate(GRID, SEED, pid)
        Z = simulate_fbm(w, 0.7)
        prof = dY_profile(sine, Z, s, t, x)
        p = Perturbation(a=a, b=bnd, delta=delta)
        Zp = simulate_fbm(p.perturb(w), 0.7)
        quot = (backward_flow(sine, Zp, x, s, t)
                - backward_flow(sine, Z, x, s, t)) / delta
        integral = float(np.sum(prof.values[p.step_mask(GRID)]) * GRID.dt)
        worst_rel = max(worst_rel, abs(quot - integral) / abs(integral))
    clause2 = worst_rel <= 0.03

    ok = clause1 and clause2
    _emit(criterion_log,
          f"criterion 08 derivative-oracles: {'PASS' if ok else 'FAIL'} — "
          f"closed-vs-Volterra max gap {worst_gap:.2e} (gate 5.0e-09); "
          f"CM quotient vs integral max rel {worst_rel:.2e} over 100 paths "
          f"(gate 3e-02, delta=1e-4)")
    assert ok


def test_criterion_09_density_bound(criterion_log):
    """Bracket > 1 - e^{-1}/2 on 100% of paths; constant-b' oracle to 1e-6."""
    floor = 1.0 - 0.5 * np.exp(-1.0)
    paths = 1_000
    z = _ensemble(1, 0.7, 10_000)[:paths]
    presets = [("zero", {}), ("constant", {"lam": 0.5}),
               ("linear", {"lam": 0.15}), ("sine", {"a": 0.15})]
    fractions = []
    ok = True
    for name, params in presets:
        b = drift_preset(name, **params)
        rep = density_bound_check(b, GRID, z, 0.0, 1.0, 0.0, strict=False)
        frac = float(np.mean(rep.brackets > floor))
        ok = ok and frac == 1.0
        fractions.append(f"{name}: {frac:.1%} (min {rep.min_bracket:.4f})")

    # constant-b' oracle: b = -0.5 x has b' = -1/2, bracket = 2 - e^{1/2}
    bm = drift_preset("linear", lam=0.5)
    rep = density_bound_check(bm, GRID, z, 0.0, 1.0, 0.0, strict=False)
    oracle = 2.0 - np.exp(0.5)
    gap = float(np.max(np.abs(rep.brackets - oracle)))
    oracle_ok = gap <= 1e-6

    ok = ok and oracle_ok
    _emit(criterion_log,
          f"criterion 09 density-bound: {'PASS' if ok else 'FAIL'} — "
          f"fraction above {floor:.5f}: " + "; ".join(fractions)
          + f"; constant-b' oracle max gap {gap:.2e} (gate 1e-06)")
    assert ok


def test_criterion_10_density_existence(criterion_log):
    """Positive derivative norm, clean KDE, atom-free CDF, Gaussian control."""
    paths = 10_000
    u0 = u0_preset("tanh-floor")  # (u0')^2 >= 0.36 >= 0.25
    b = drift_preset("sine", a=0.5)
    spec = HermiteSpec.create(1, 0.7)
    z = _ensemble(1, 0.7, paths)
    y = backward_ensemble(b, GRID, z, 0.0, 0.0, 1.0)
    samples = np.asarray(u0.u0(y), dtype=float)
    dy_nsq = dy_norm_ensemble(b, GRID, spec, z, 0.0, 1.0, 0.0)
    du_nsq = np.asarray(u0.u0_prime(y), dtype=float) ** 2 * dy_nsq
    rep = density_report(samples, du_nsq)

    min_norm = float(np.min(du_nsq[:1_000]))
    norm_ok = min_norm > 0.0
    mass_ok = 0.99 <= rep.mass <= 1.01
    jump_ok = rep.max_cdf_jump <= 0.03

    # drift-free control: u(1, 0) = -Z_1 must be N(0, t^{2H}) up to sign
    control = -z[:, -1]
    pvalue = float(kstest(control, "norm", args=(0.0, 1.0)).pvalue)
    ks_ok = pvalue > 0.01

    ok = norm_ok and mass_ok and jump_ok and ks_ok
    _emit(criterion_log,
          f"criterion 10 density-existence: {'PASS' if ok else 'FAIL'} — "
          f"min ||Du(1,0)||^2 over 10^3 paths = {min_norm:.4f} (> 0); "
          f"KDE mass {rep.mass:.4f} (in [0.99, 1.01]); max CDF jump "
          f"{rep.max_cdf_jump:.4f} (gate 0.03 at 10^4 samples); Gaussian "
          f"control KS p = {pvalue:.3f} (level 0.01)")
    assert ok
