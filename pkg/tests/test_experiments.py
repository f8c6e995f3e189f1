"""Workbench machinery: polygon, experts, sweeps, matched levels."""

import numpy as np
import pytest

from smoothmpc.config import default_config
from smoothmpc.errors import InfeasibleError
from smoothmpc.experiments import (
    Workbench,
    bounds_sweep,
    feasible_polygon,
    imitation_run,
    matched_levels,
    slice_smoothness,
)
from smoothmpc.explicit import solve_qp
from smoothmpc.mlp import TrainConfig


@pytest.fixture(scope="module")
def bench():
    return Workbench.from_config(default_config(), resolution=101)


def test_polygon_contains_exactly_the_feasible_set(bench):
    poly = bench.projector
    rng = np.random.default_rng(0)
    inside_checked = outside_checked = 0
    for _ in range(300):
        x = rng.uniform(-12, 12, size=2)
        feasible = True
        try:
            solve_qp(bench.qp, x)
        except InfeasibleError:
            feasible = False
        said = bool(poly.inside(x[None, :])[0])
        if feasible:
            assert said or _near_boundary(poly, x)
            inside_checked += 1
        else:
            assert (not said) or _near_boundary(poly, x)
            outside_checked += 1
    assert inside_checked > 30 and outside_checked > 30


def _near_boundary(poly, x, tol=1e-6):
    p = poly(np.array(x, dtype=float)[None, :])[0]
    return np.linalg.norm(p - x) <= tol or _dist_to_edges(poly, x) <= tol


def _dist_to_edges(poly, x):
    W = x[None, :] - poly.vertices
    t = np.clip(np.einsum("ej,ej->e", W, poly.edges) / np.einsum("ej,ej->e", poly.edges, poly.edges), 0, 1)
    proj = poly.vertices + t[:, None] * poly.edges
    return float(np.min(np.linalg.norm(x[None, :] - proj, axis=1)))


def test_projection_is_idempotent_and_feasible(bench):
    rng = np.random.default_rng(1)
    X = rng.uniform(-30, 30, size=(200, 2))
    P = bench.projector(X)
    assert np.all(bench.projector.inside(P, margin=-1e-9))
    P2 = bench.projector(P)
    assert np.abs(P2 - P).max() <= 1e-9
    # projections of feasible points are identities
    F = bench.sample_initial_states(50, seed=3)
    assert np.abs(bench.projector(F) - F).max() == 0.0
    # projected points solve as feasible QPs (slight shrink guards roundoff)
    for p in P[::40]:
        solve_qp(bench.qp, p * (1 - 1e-9))


def test_sample_initial_states_deterministic_and_feasible(bench):
    a = bench.sample_initial_states(25, seed=7)
    b = bench.sample_initial_states(25, seed=7)
    assert np.array_equal(a, b)
    assert np.abs(a).max() <= 8.0
    for x in a[:5]:
        solve_qp(bench.qp, x)


def test_barrier_expert_matches_policy(bench):
    expert = bench.barrier_expert(0.5)
    x = np.array([3.0, -1.0])
    from smoothmpc.barrier import pi_barrier

    assert np.allclose(expert(x), pi_barrier(expert.bp, x))
    J = expert.jacobian(x)
    assert J.shape == (1, 2)


def test_randomized_expert_total_on_infeasible_states(bench):
    expert = bench.randomized_expert(2.0, n_samples=200, seed=0)
    u = expert(np.array([14.0, 0.0]))  # outside the feasible set
    assert np.all(np.isfinite(u))


def test_slice_smoothness_refines_narrow_feature():
    # kink of width ~1e-3 must be resolved from a 0.25 coarse grid
    def jac(x):
        return np.array([[np.tanh(x[0] / 1e-3)]])

    out = slice_smoothness(jac, np.zeros(1), np.ones(1), span=2.0,
                           coarse_h=0.25, min_h=2e-4)
    # max derivative of tanh(s/w) is 1/w
    assert out["L1"] >= 0.5 / 1e-3
    assert out["L0"] <= 1.0 + 1e-9


def test_matched_levels_interpolation():
    rows = [{"kind": "barrier", "param": e, "L1_max": 1.0 / e} for e in (0.1, 1.0, 10.0)]
    rows += [{"kind": "randomized", "param": s, "L1_max": 2.0 / s} for s in (0.05, 0.5, 5.0, 50.0)]
    levels = matched_levels(rows, n_levels=3)
    assert len(levels) == 3
    for eta, sigma, l1 in levels:
        assert abs(2.0 / sigma - l1) / l1 <= 1e-9  # exact on the power law


def test_bounds_sweep_negative_control(bench):
    rows, reports, _ = bounds_sweep(bench, [0.1], n_states=3, seed=1,
                                    corrupt="error_upper", with_hessian=False)
    assert any(not r.satisfied and r.name == "error_upper" for r in reports)
    rows2, reports2, _ = bounds_sweep(bench, [0.1], n_states=3, seed=1, with_hessian=False)
    assert all(r.satisfied for r in reports2)


def test_imitation_run_smoke(bench, tmp_path):
    cfg = TrainConfig(steps=120, batch_size=64, width=16)
    expert = bench.barrier_expert(1.0)
    out = imitation_run(bench, expert, expert.jacobian, N=3, K=6, train_cfg=cfg,
                        seed=0, n_eval=3, artifact_dir=tmp_path, tag="t")
    assert np.isfinite(out["mean_traj_error"])
    assert out["n_eval_failures"] == 0
    assert (tmp_path / "dataset_t.csv").exists()
    assert (tmp_path / "curve_t.csv").exists()
    assert len((tmp_path / "dataset_t.csv").read_text().strip().splitlines()) == 1 + 3 * 6


def test_bounds_sweep_skips_nonpositive_eta(bench):
    rows, reports, skipped = bounds_sweep(bench, [0.0, 0.1], n_states=2, seed=1,
                                          with_hessian=False)
    assert skipped == [(0.0, "barrier weight must be positive")]
    assert all(r["eta"] == 0.1 for r in rows)


def test_small_smoothing_approaches_explicit_metrics(bench):
    from smoothmpc.experiments import expert_smoothness

    explicit_met = expert_smoothness(bench.table.jacobian, feature_scale=0.02)
    b_exp = bench.barrier_expert(1e-4)
    met_b = expert_smoothness(b_exp.jacobian, feature_scale=0.02)
    assert abs(met_b["L0_max"] - explicit_met["L0_max"]) <= 0.05 * explicit_met["L0_max"]
    r_exp = bench.randomized_expert(1e-3, n_samples=400, seed=0)
    met_r = expert_smoothness(lambda x: r_exp.jacobian(x, h=1e-4), feature_scale=0.02)
    assert abs(met_r["L0_max"] - explicit_met["L0_max"]) <= 0.05 * explicit_met["L0_max"]
