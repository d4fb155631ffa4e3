"""Forward/backward characteristics, the Picard route, and field solutions."""

import numpy as np
import pytest

from stochtransport import (
    ConvergenceError,
    DomainError,
    ResolutionError,
    TimeGrid,
    generate,
    simulate_ensemble,
    simulate_fbm,
    HermiteSpec,
)
from stochtransport.flow import (
    DriftField,
    FlowSolution,
    backward_ensemble,
    backward_ensemble_trajectory,
    backward_flow,
    backward_trajectory,
    forward_ensemble,
    forward_flow,
    forward_trajectory,
    inverse_flow_field,
    picard_solve,
)


def _zero():
    return DriftField(b=lambda t, x: 0.0 * np.asarray(x),
                      b_prime=lambda t, x: 0.0 * np.asarray(x),
                      sup_norm_b=0.0, sup_norm_bprime=0.0, name="zero")


def _sine(amp=0.5):
    return DriftField(b=lambda t, x: amp * np.sin(x),
                      b_prime=lambda t, x: amp * np.cos(x),
                      sup_norm_b=amp, sup_norm_bprime=amp, name="sine")


def _linear(c=-1.0):
    return DriftField(b=lambda t, x: c * np.asarray(x, dtype=float),
                      b_prime=lambda t, x: c + 0.0 * np.asarray(x),
                      sup_norm_b=abs(c) * 8.0, sup_norm_bprime=abs(c), name="linear")


def _const(lam=0.8):
    return DriftField(b=lambda t, x: lam + 0.0 * np.asarray(x),
                      b_prime=lambda t, x: 0.0 * np.asarray(x),
                      sup_norm_b=abs(lam), sup_norm_bprime=0.0, name="const")


def _noise(n=1024, seed=7, path_id=3, H=0.7):
    grid = TimeGrid(T=1.0, n=n)
    return simulate_fbm(generate(grid, seed=seed, path_id=path_id), H)


def test_drift_field_validates_derivative():
    with pytest.raises(DomainError):
        DriftField(b=lambda t, x: np.sin(x),
                   b_prime=lambda t, x: np.sin(x),  # wrong on purpose
                   sup_norm_b=1.0, sup_norm_bprime=1.0)


def test_drift_field_validates_bounds():
    with pytest.raises(DomainError):
        DriftField(b=lambda t, x: np.sin(x), b_prime=lambda t, x: np.cos(x),
                   sup_norm_b=0.5, sup_norm_bprime=1.0)
    with pytest.raises(DomainError):
        DriftField(b=lambda t, x: np.sin(x), b_prime=lambda t, x: np.cos(x),
                   sup_norm_b=1.0, sup_norm_bprime=0.5)


def test_zero_drift_is_exact_translation():
    z = _noise()
    b = _zero()
    x = 0.7
    assert forward_flow(b, z, x, 0.0, 1.0) == x + (z.values[-1] - z.values[0])
    assert backward_flow(b, z, x, 0.25, 0.75) == x - (z.value_at(0.75) - z.value_at(0.25))


def test_identity_at_coincident_times():
    z = _noise()
    for b in (_zero(), _sine()):
        assert forward_flow(b, z, 1.3, 0.5, 0.5) == 1.3
        assert backward_flow(b, z, 1.3, 0.5, 0.5) == 1.3


def test_constant_drift_integrates_exactly():
    z = _noise()
    b = _const(0.8)
    x = 0.7
    got = forward_flow(b, z, x, 0.25, 1.0)
    want = x + 0.8 * 0.75 + (z.values[-1] - z.value_at(0.25))
    assert abs(got - want) < 1e-12


def test_linear_drift_against_variation_of_constants():
    """b = -x has the explicit solution x e^{-(t-s)} + int e^{-(t-u)} dZ_u;
    the rough integral is evaluated by summation by parts + trapezoid."""
    z = _noise()
    pts = z.grid.points
    x = 0.7
    integrand = z.values * np.exp(-(1.0 - pts))
    rough = z.values[-1] - np.exp(-1.0) * z.values[0] - np.trapezoid(integrand, pts)
    oracle = x * np.exp(-1.0) + rough
    got = forward_flow(_linear(-1.0), z, x, 0.0, 1.0)
    assert abs(got - oracle) < 20.0 * z.grid.dt**2


def test_forward_inverts_backward():
    z = _noise()
    for b in (_sine(), _linear(-1.0), _const(1.0)):
        for x in (-1.2, 0.0, 0.8):
            y = backward_flow(b, z, x, 0.0, 1.0)
            assert abs(forward_flow(b, z, y, 0.0, 1.0) - x) < 1e-10


def test_forward_cocycle():
    z = _noise()
    b = _sine()
    x = 0.4
    direct = forward_flow(b, z, x, 0.0, 1.0)
    via = forward_flow(b, z, forward_flow(b, z, x, 0.0, 0.5), 0.5, 1.0)
    assert abs(direct - via) < 1e-10


def test_rejects_reversed_time_order():
    z = _noise()
    with pytest.raises(DomainError):
        forward_flow(_zero(), z, 0.0, 0.75, 0.25)


def test_trajectories_cover_grid():
    z = _noise(n=256)
    b = _sine()
    traj = forward_trajectory(b, z, 0.3, 0.0, 1.0)
    assert traj.shape == (257,)
    assert traj[0] == 0.3
    assert traj[-1] == forward_flow(b, z, 0.3, 0.0, 1.0)

    back = backward_trajectory(b, z, 0.3, 1.0)
    assert back.shape == (257,)
    assert back[-1] == 0.3
    assert back[0] == backward_flow(b, z, 0.3, 0.0, 1.0)


def test_zero_drift_trajectory_is_translated_noise():
    z = _noise(n=128)
    traj = forward_trajectory(_zero(), z, 0.5, 0.0, 1.0)
    assert np.array_equal(traj, 0.5 + z.values - z.values[0])


def test_picard_zero_drift_immediate():
    z = _noise(n=256)
    val, iters = picard_solve(_zero(), z, 0.4, 1.0, 0.75)
    want = 0.4 - (z.values[-1] - z.value_at(0.25))
    assert val == pytest.approx(want, abs=1e-14)
    assert iters <= 2


def test_picard_matches_backward_flow():
    z = _noise()
    x = 0.4
    for b in (_sine(), _linear(-1.0), _const(0.8)):
        for (s, t) in [(0.0, 1.0), (0.25, 0.75)]:
            val, _ = picard_solve(b, z, x, t, t - s, tol=1e-10)
            assert abs(val - backward_flow(b, z, x, s, t)) < 5e-9


def test_picard_iteration_count_in_contraction_regime():
    z = _noise()
    b = _sine(0.5)
    u = 0.75
    tol = 1e-10
    _, iters = picard_solve(b, z, 0.4, 1.0, u, tol=tol)
    bound = int(np.ceil(np.log(tol) / np.log(b.sup_norm_bprime * u))) + 1
    assert iters <= bound


def test_picard_start_independence():
    z = _noise()
    b = _sine()
    cold, _ = picard_solve(b, z, 0.4, 1.0, 1.0, tol=1e-12)
    warm, _ = picard_solve(b, z, 0.4, 1.0, 1.0, tol=1e-12, warm_start=True)
    assert abs(cold - warm) < 5e-12


def test_picard_argument_and_convergence_errors():
    z = _noise(n=256)
    with pytest.raises(DomainError):
        picard_solve(_zero(), z, 0.0, 0.5, 0.75)
    with pytest.raises(ConvergenceError):
        picard_solve(_sine(), z, 0.0, 1.0, 1.0, tol=1e-14, max_iter=2)


def test_inverse_flow_field_monotone_and_invertible():
    grid = TimeGrid(T=1.0, n=1024)
    b = _sine()
    nodes = np.linspace(-2.0, 2.0, 32)
    for pid in range(5):
        z = simulate_fbm(generate(grid, seed=11, path_id=pid), 0.7)
        sol = inverse_flow_field(b, z, 1.0, nodes)
        assert np.all(np.diff(sol.values, axis=1) > 0)
        assert np.array_equal(sol.values[-1], nodes)
        back = sol.values[0]  # Y_{0,1}(nodes)
        forward_again = np.array([forward_flow(b, z, y, 0.0, 1.0) for y in back])
        assert np.max(np.abs(forward_again - nodes)) < 10 * grid.dt


def test_flow_solution_rejects_order_violations():
    grid = TimeGrid(T=1.0, n=4)
    z = simulate_fbm(generate(grid, seed=1, path_id=0), 0.7)
    nodes = np.array([0.0, 1.0])
    good = np.tile(nodes, (5, 1))
    FlowSolution(grid=grid, x_nodes=nodes, values=good, direction="backward",
                 anchor=1.0, noise=z)
    bad = good.copy()
    bad[2] = [1.0, 0.0]
    with pytest.raises(ResolutionError):
        FlowSolution(grid=grid, x_nodes=nodes, values=bad, direction="backward",
                     anchor=1.0, noise=z)
    with pytest.raises(DomainError):
        FlowSolution(grid=grid, x_nodes=nodes, values=good + 0.5,
                     direction="backward", anchor=1.0, noise=z)


def test_flow_solution_rows_shape():
    grid = TimeGrid(T=1.0, n=8)
    z = simulate_fbm(generate(grid, seed=1, path_id=0), 0.7)
    sol = inverse_flow_field(_zero(), z, 1.0, np.array([-1.0, 0.0, 1.0]))
    rows = sol.rows()
    assert len(rows) == 9 * 3
    s, t, x, val, direction, pid = rows[0]
    assert direction == "backward" and t == 1.0 and pid == 0


def test_ensemble_matches_pointwise_flows():
    grid = TimeGrid(T=1.0, n=256)
    spec = HermiteSpec.create(1, 0.7)
    Z = simulate_ensemble(grid, spec, seed=23, path_ids=range(6))
    b = _sine()
    x = 0.3
    fw = forward_ensemble(b, grid, Z, x, 0.0, 1.0)
    bw = backward_ensemble(b, grid, Z, x, 0.25, 1.0)
    for i in range(6):
        z = simulate_fbm(generate(grid, seed=23, path_id=i), 0.7)
        assert abs(fw[i] - forward_flow(b, z, x, 0.0, 1.0)) < 1e-12
        assert abs(bw[i] - backward_flow(b, z, x, 0.25, 1.0)) < 1e-12


def test_ensemble_trajectory_shape_and_anchor():
    grid = TimeGrid(T=1.0, n=128)
    spec = HermiteSpec.create(1, 0.8)
    Z = simulate_ensemble(grid, spec, seed=2, path_ids=range(4))
    traj = backward_ensemble_trajectory(_sine(), grid, Z, 0.1, 1.0)
    assert traj.shape == (129, 4)
    assert np.all(traj[-1] == 0.1)
