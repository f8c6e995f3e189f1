"""Hard-constrained QP solutions, active-set gains, and piece discovery."""

import numpy as np
import pytest

from smoothmpc.core import (
    box_constraints,
    build_condensed,
    clip_problem,
    double_integrator_problem,
    residuals,
    LinearSystem,
    StageCost,
)
from smoothmpc.errors import DegenerateActiveSetError, InfeasibleError
from smoothmpc.explicit import (
    ActiveSet,
    PieceTableEvaluator,
    discover_pieces,
    enumerate_nonsingular_sigmas,
    gain_for_sigma,
    max_gain_norm,
    pi_mpc,
    solve_qp,
    state_grid,
)
from smoothmpc.qp import dual_ascent_qp


@pytest.fixture(scope="module")
def di_qp():
    sys_, cost, cons = double_integrator_problem()
    return build_condensed(sys_, cost, cons)


@pytest.fixture(scope="module")
def clip_qp():
    sys_, cost, cons = clip_problem()
    return build_condensed(sys_, cost, cons)


def kkt_ok(qp, x0, sol, tol=1e-8):
    stat = qp.H @ sol.u_star - qp.F.T @ x0 + qp.G.T @ sol.multipliers
    res = residuals(qp, x0, sol.u_star)
    comp = sol.multipliers * res
    scale = 1.0 + np.linalg.norm(qp.F.T @ x0)
    return (np.linalg.norm(stat) <= tol * scale and res.min() >= -tol * 10
            and sol.multipliers.min() >= -tol and np.abs(comp).max() <= tol * 10 * scale)


def test_interior_case_unconstrained(di_qp):
    x0 = np.array([0.05, 0.02])
    sol = solve_qp(di_qp, x0)
    assert sol.sigma.popcount == 0
    assert np.abs(sol.u_star - np.linalg.solve(di_qp.H, di_qp.F.T @ x0)).max() <= 1e-9
    assert kkt_ok(di_qp, x0, sol)


def test_clip_saturation(clip_qp):
    x0 = np.array([4.0])
    sol = solve_qp(clip_qp, x0)
    assert abs(sol.u_star[0] + 1.0) <= 1e-10
    assert sol.sigma.popcount == 1
    # brute force over a u grid agrees
    us = np.linspace(-1, 1, 200001)
    vals = 0.5 * clip_qp.H[0, 0] * us ** 2 - x0[0] * clip_qp.F[0, 0] * us
    assert abs(us[np.argmin(vals)] - sol.u_star[0]) <= 1e-4


def test_saturated_point_cross_checked_by_dual_oracle(di_qp):
    # (8, 2) from the original description is infeasible here; (5, 2) saturates
    x0 = np.array([5.0, 2.0])
    sol = solve_qp(di_qp, x0)
    assert abs(sol.u_star[0] + 1.0) <= 1e-9
    u_oracle = dual_ascent_qp(di_qp.H, -(di_qp.F.T @ x0), di_qp.G,
                              di_qp.bounds_rhs(x0), max_iter=400_000)
    assert np.abs(sol.u_star - u_oracle).max() <= 1e-6
    assert kkt_ok(di_qp, x0, sol)


def test_kkt_on_random_states(di_qp):
    rng = np.random.default_rng(5)
    done = 0
    while done < 25:
        x0 = rng.uniform(-8, 8, size=2)
        try:
            sol = solve_qp(di_qp, x0)
        except InfeasibleError:
            continue
        assert kkt_ok(di_qp, x0, sol)
        done += 1


def test_infeasible_state_certificate(di_qp):
    with pytest.raises(InfeasibleError) as exc:
        solve_qp(di_qp, np.array([8.0, 2.0]))
    y = exc.value.certificate
    assert y is not None and y.min() >= 0
    assert np.linalg.norm(di_qp.G.T @ y) <= 1e-6 * max(1.0, np.linalg.norm(y))
    assert y @ di_qp.bounds_rhs(np.array([8.0, 2.0])) < 0


def test_gain_sigma_zero_is_unconstrained(di_qp):
    piece = gain_for_sigma(di_qp, ActiveSet(np.zeros(60, dtype=bool)))
    assert np.abs(piece.K - np.linalg.solve(di_qp.H, di_qp.F.T)).max() <= 1e-12
    assert np.abs(piece.k).max() == 0.0


def test_gain_matches_solver(di_qp):
    rng = np.random.default_rng(23)
    done = 0
    while done < 20:
        x0 = rng.uniform(-7, 7, size=2)
        try:
            sol = solve_qp(di_qp, x0)
        except InfeasibleError:
            continue
        piece = gain_for_sigma(di_qp, sol.sigma)
        assert np.abs(piece.control(x0) - sol.u_star).max() <= 1e-8
        done += 1


def test_gain_overfull_sigma_raises(di_qp):
    sigma = np.zeros(60, dtype=bool)
    sigma[:11] = True  # more active rows than inputs
    with pytest.raises(DegenerateActiveSetError):
        gain_for_sigma(di_qp, ActiveSet(sigma))


def test_pi_mpc_origin_and_affinity(di_qp):
    assert np.abs(pi_mpc(di_qp, np.zeros(2))).max() <= 1e-10
    x = np.array([0.04, 0.01])  # interior piece
    u1 = pi_mpc(di_qp, x)
    u2 = pi_mpc(di_qp, 2.0 * x)
    assert np.abs(2.0 * u1 - u2).max() <= 1e-9  # affine with zero offset near origin


def test_discovery_clip_three_pieces(clip_qp):
    grid = state_grid([-5.0], [5.0], 201)
    coll = discover_pieces(clip_qp, grid)
    assert coll.n_pieces == 3


def test_discovery_unconstrained_single_piece():
    sys_, cost, cons = double_integrator_problem(state_bound=1e6, input_bound=1e6)
    qp = build_condensed(sys_, cost, cons)
    coll = discover_pieces(qp, state_grid([-10, -10], [10, 10], 21))
    assert coll.n_pieces == 1
    assert coll.pieces[0].sigma.popcount == 0


def test_discovery_methods_agree(di_qp):
    grid = state_grid([-10, -10], [10, 10], 101)
    fast = discover_pieces(di_qp, grid, method="assign")
    slow = discover_pieces(di_qp, grid, method="per-point")
    assert fast.n_pieces == slow.n_pieces
    assert fast.n_infeasible == slow.n_infeasible
    fast_keys = sorted(p.gain_key() for p in fast.pieces)
    slow_keys = sorted(p.gain_key() for p in slow.pieces)
    assert fast_keys == slow_keys
    assert fast.occupancy.sum() == slow.occupancy.sum() == fast.n_feasible


def test_piecewise_affine_consistency(di_qp):
    coll = discover_pieces(di_qp, state_grid([-10, -10], [10, 10], 41))
    rng = np.random.default_rng(31)
    table = PieceTableEvaluator(di_qp, coll)
    checked = 0
    while checked < 40:
        x = rng.uniform(-8, 8, size=2)
        try:
            sol = solve_qp(di_qp, x)
        except InfeasibleError:
            continue
        assert np.abs(table(x) - sol.u_star[:1]).max() <= 1e-7
        checked += 1


def test_lipschitz_bound_over_pieces(di_qp):
    coll = discover_pieces(di_qp, state_grid([-10, -10], [10, 10], 41))
    L = max_gain_norm(di_qp, [p.sigma for p in coll.pieces])
    rng = np.random.default_rng(37)
    pairs = 0
    while pairs < 30:
        x = rng.uniform(-6, 6, size=2)
        y = x + rng.uniform(-0.5, 0.5, size=2)
        try:
            ux = solve_qp(di_qp, x).u_star
            uy = solve_qp(di_qp, y).u_star
        except InfeasibleError:
            continue
        assert np.linalg.norm(ux - uy) <= L * np.linalg.norm(x - y) * (1 + 1e-7) + 1e-9
        pairs += 1


def test_piece_csv_export(tmp_path, clip_qp):
    coll = discover_pieces(clip_qp, state_grid([-5.0], [5.0], 101))
    path = tmp_path / "pieces.csv"
    coll.to_csv(path)
    rows = path.read_text().strip().splitlines()
    assert rows[0] == "sigma,K_row_major,k,occupancy"
    assert len(rows) == 1 + coll.n_pieces


def test_enumerate_nonsingular_small():
    sys_, cost, cons = clip_problem()
    qp = build_condensed(sys_, cost, cons)
    sigmas = enumerate_nonsingular_sigmas(qp)
    # 1 input, 4 rows: empty set plus each single row is nonsingular
    assert ActiveSet(np.zeros(4, dtype=bool)) in sigmas
    assert all(s.popcount <= 1 for s in sigmas)
    assert len(sigmas) == 5
