"""Benchmark pipeline: experts, smoothness sweeps, bound sweeps, imitation runs.

Everything here is a deterministic function of (config, seed). The
explicit law is evaluated through the discovered piece table; the
feasible state set (a polygon for 2-D states) is recovered once from
support LPs and reused for projection and rejection sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

from .barrier import (
    BarrierProblem,
    barrier_hessian,
    barrier_jacobian,
    make_barrier_problem,
    solve_barrier,
    tensor_spectral_norm,
)
from .bounds import (
    BoundReport,
    NotApplicableError,
    directional_bounds,
    error_upper,
    first_residual_lower_bound,
    hessian_upper_bound,
    normalized_min_residual,
    quadratic_lipschitz,
    residual_lower_bound,
)
from .core import CondensedQP, build_condensed, feasible_radii, load_problem
from .errors import InfeasibleError
from .explicit import PieceTableEvaluator, c_constant, discover_pieces, max_gain_norm, state_grid
from .mlp import TrainConfig, train_imitator
from .simulate import ImitationDataset, imitation_error, rollout, sample_dataset
from .smoothing import RandomizedPolicy, SmoothingConfig

__all__ = [
    "Workbench",
    "BarrierExpert",
    "feasible_polygon",
    "PolygonProjector",
    "slice_smoothness",
    "smoothness_sweep",
    "bounds_sweep",
    "imitation_experiment",
    "matched_levels",
]


def feasible_polygon(qp: CondensedQP, n_directions: int = 720) -> np.ndarray:
    """Vertices (counterclockwise) of the feasible 2-D state set.

    The set {x : exists u with G u <= w + P x} is a polygon; its support
    points in ``n_directions`` directions are vertices, recovered exactly
    by a convex hull once every vertex is some direction's argmax.
    """
    if qp.d_x != 2:
        raise ValueError("polygon recovery requires a 2-D state")
    A_ub = np.hstack([-qp.P, qp.G])
    pts = []
    for th in np.linspace(0.0, 2.0 * np.pi, n_directions, endpoint=False):
        c = np.zeros(2 + qp.n)
        c[0], c[1] = -np.cos(th), -np.sin(th)
        res = linprog(c, A_ub=A_ub, b_ub=qp.w, bounds=[(None, None)] * (2 + qp.n),
                      method="highs")
        if not res.success:
            raise RuntimeError(f"support LP failed: {res.message}")
        pts.append(res.x[:2])
    pts = np.array(pts)
    hull = ConvexHull(pts)
    return pts[hull.vertices]


class PolygonProjector:
    """Euclidean projection onto a convex polygon, vectorized over points."""

    def __init__(self, vertices: np.ndarray):
        self.vertices = np.asarray(vertices, dtype=float)
        self.edges = np.roll(self.vertices, -1, axis=0) - self.vertices
        self._edge_norm2 = np.einsum("ij,ij->i", self.edges, self.edges)

    def inside(self, X: np.ndarray, margin: float = 0.0) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        W = X[:, None, :] - self.vertices[None, :, :]
        cross = self.edges[None, :, 0] * W[:, :, 1] - self.edges[None, :, 1] * W[:, :, 0]
        return np.all(cross >= margin, axis=1)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = X.copy()
        todo = ~self.inside(X)
        if not todo.any():
            return out
        P = X[todo]
        W = P[:, None, :] - self.vertices[None, :, :]
        t = np.einsum("pej,ej->pe", W, self.edges) / self._edge_norm2[None, :]
        t = np.clip(t, 0.0, 1.0)
        proj = self.vertices[None, :, :] + t[:, :, None] * self.edges[None, :, :]
        d2 = np.sum((P[:, None, :] - proj) ** 2, axis=2)
        best = np.argmin(d2, axis=1)
        out[todo] = proj[np.arange(P.shape[0]), best]
        return out


class BarrierExpert:
    """Barrier control law with its analytic first-input Jacobian."""

    def __init__(self, bp: BarrierProblem):
        self.bp = bp

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return solve_barrier(self.bp, x).u_eta[: self.bp.qp.d_u]

    def eval_batch(self, X: np.ndarray, fallback: str = "nan") -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full((X.shape[0], self.bp.qp.d_u), np.nan)
        for i, x in enumerate(X):
            try:
                out[i] = self(x)
            except InfeasibleError:
                pass
        return out

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        sol = solve_barrier(self.bp, x)
        return barrier_jacobian(self.bp, sol, x)[: self.bp.qp.d_u]


@dataclass
class Workbench:
    """Shared problem data for the benchmark commands."""

    qp: CondensedQP
    sys: object
    cost: object
    cons: object
    table: PieceTableEvaluator
    projector: PolygonProjector
    outer_radius: float
    gain_sigmas: list
    state_halfwidth: float = 10.0

    @classmethod
    def from_config(cls, config: dict, resolution: int = 201) -> "Workbench":
        sys_, cost, cons = load_problem(config)
        qp = build_condensed(sys_, cost, cons)
        half = float(np.max(np.asarray(config["constraints"].get("state_box", 10.0))))
        grid = state_grid([-half] * qp.d_x, [half] * qp.d_x, resolution)
        coll = discover_pieces(qp, grid)
        table = PieceTableEvaluator(qp, coll)
        projector = PolygonProjector(feasible_polygon(qp)) if qp.d_x == 2 else None
        R = feasible_radii(qp, np.zeros(qp.d_x)).R
        return cls(qp=qp, sys=sys_, cost=cost, cons=cons, table=table,
                   projector=projector, outer_radius=R,
                   gain_sigmas=[p.sigma for p in coll.pieces],
                   state_halfwidth=half)

    def barrier_expert(self, eta: float) -> BarrierExpert:
        return BarrierExpert(make_barrier_problem(self.qp, eta, outer_radius=self.outer_radius))

    def randomized_expert(self, sigma: float, n_samples: int = 1500,
                          seed: int = 0, distribution: str = "gaussian") -> RandomizedPolicy:
        cfg = SmoothingConfig(sigma=sigma, distribution=distribution,
                              n_samples=n_samples, seed=seed)
        return RandomizedPolicy(self.table, cfg, projector=self.projector)

    def sample_initial_states(self, n: int, seed: int, shrink: float = 0.8) -> np.ndarray:
        """Uniform over the shrunken state box, rejected into the feasible set."""
        rng = np.random.default_rng(seed)
        box = shrink * self.state_halfwidth
        out = []
        while len(out) < n:
            cand = rng.uniform(-box, box, size=(4 * n, self.qp.d_x))
            keep = self.projector.inside(cand, margin=1e-9)
            out.extend(cand[keep][: n - len(out)])
        return np.array(out)


# --- smoothness measurement -------------------------------------------------

def slice_smoothness(jac_fn, anchor: np.ndarray, direction: np.ndarray,
                     span: float, coarse_h: float, min_h: float,
                     peaks: int = 3) -> dict:
    """Max Jacobian norm and Jacobian variation along one state-space line.

    Scans coarsely, then repeatedly refines windows around the largest
    variation peaks (quartering the step) until the step reaches ``min_h``
    or the estimate stabilizes; this resolves features much narrower than
    the coarse grid without a global fine grid. Points where the Jacobian
    is unavailable (outside the feasible set) are skipped.
    """
    anchor = np.asarray(anchor, dtype=float)
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)

    def scan(ss):
        jacs = []
        for s in ss:
            try:
                jacs.append(np.atleast_2d(jac_fn(anchor + s * direction)))
            except InfeasibleError:
                jacs.append(None)
        L0_loc = max((float(np.linalg.norm(J, 2)) for J in jacs if J is not None),
                     default=0.0)
        cand = []
        for i in range(len(jacs) - 1):
            if jacs[i] is None or jacs[i + 1] is None:
                continue
            ratio = float(np.linalg.norm(jacs[i + 1] - jacs[i], 2)) / (ss[i + 1] - ss[i])
            cand.append((0.5 * (ss[i] + ss[i + 1]), ratio))
        return L0_loc, cand

    ss = np.arange(-span, span + coarse_h / 2, coarse_h)
    L0, cand = scan(ss)
    cand.sort(key=lambda t: -t[1])
    L1 = cand[0][1] if cand else 0.0
    centers = [c for c, _ in cand[:peaks]]

    h = coarse_h
    while h / 4.0 >= min_h and centers:
        h_new = h / 4.0
        improved = 0.0
        new_centers = []
        for c in centers:
            ss_loc = np.arange(c - 2.5 * h, c + 2.5 * h + h_new / 2, h_new)
            L0_loc, cand_loc = scan(ss_loc)
            L0 = max(L0, L0_loc)
            if cand_loc:
                cand_loc.sort(key=lambda t: -t[1])
                improved = max(improved, cand_loc[0][1])
                new_centers.append(cand_loc[0][0])
        if improved <= L1 * 1.05 and h <= coarse_h / 16.0:
            L1 = max(L1, improved)
            break
        L1 = max(L1, improved)
        centers = new_centers
        h = h_new
    return {"L0": L0, "L1": L1}


_DEFAULT_SLICES = ((np.array([0.0, 1.5]), np.array([1.0, 0.0])),
                   (np.array([0.0, -3.0]), np.array([1.0, 0.0])),
                   (np.array([2.0, 0.0]), np.array([0.0, 1.0])))


def expert_smoothness(jac_fn, feature_scale: float, span: float = 7.0,
                      slices=_DEFAULT_SLICES) -> dict:
    """Smoothness along the benchmark's probe slices, resolved to feature_scale."""
    coarse_h = 0.25
    min_h = float(np.clip(feature_scale / 4.0, 1e-4, coarse_h))
    L0 = L1 = 0.0
    for anchor, direction in slices:
        out = slice_smoothness(jac_fn, anchor, direction, span, coarse_h, min_h)
        L0 = max(L0, out["L0"])
        L1 = max(L1, out["L1"])
    return {"L0_max": L0, "L1_max": L1}


def _sup_error(policy, reference, pts: np.ndarray) -> float:
    a = policy.eval_batch(pts) if hasattr(policy, "eval_batch") else np.array([policy(x) for x in pts])
    b = reference.eval_batch(pts) if hasattr(reference, "eval_batch") else np.array([reference(x) for x in pts])
    ok = ~(np.any(np.isnan(a), axis=1) | np.any(np.isnan(b), axis=1))
    return float(np.max(np.linalg.norm(a[ok] - b[ok], axis=1)))


def _pmap(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


class _SmoothnessTask:
    """Picklable per-parameter smoothness measurement (one sweep row)."""

    def __init__(self, bench, n_samples, seed):
        self.bench = bench
        self.n_samples = n_samples
        self.seed = seed

    def __call__(self, item):
        kind, param = item
        bench = self.bench
        pts = bench.sample_initial_states(400, seed=self.seed + 17)
        probe = np.array([2.0, 0.5])
        projected = float("nan")
        if kind == "barrier":
            expert = bench.barrier_expert(param)
            # the Jacobian transition width scales like sqrt(eta)
            scale = float(np.clip(0.1 * math.sqrt(param), 2e-3, 0.25))
            met = expert_smoothness(expert.jacobian, feature_scale=scale)
            hess = tensor_spectral_norm(barrier_hessian(expert.bp, probe))
        else:
            expert = bench.randomized_expert(param, n_samples=self.n_samples, seed=self.seed)
            h_fd = max(param / 20.0, 1e-4)
            met = expert_smoothness(lambda x: expert.jacobian(x, h=h_fd),
                                    feature_scale=param)
            hess = float("nan")
            from .smoothing import draw_noise

            rng = np.random.default_rng(self.seed)
            W = draw_noise(expert.cfg.distribution, expert.cfg.n_samples, pts.shape[1], rng)
            samples = (pts[:, None, :] + param * W[None, :, :]).reshape(-1, pts.shape[1])
            projected = float(1.0 - bench.projector.inside(samples).mean())
        return {"kind": kind, "param": param, "L0_max": met["L0_max"],
                "L1_max": met["L1_max"], "sup_error": _sup_error(expert, bench.table, pts),
                "hessian_norm": hess, "projected_fraction": projected}


def smoothness_sweep(bench: Workbench, eta_grid, sigma_grid,
                     n_samples: int = 1500, seed: int = 0, jobs: int = 1) -> list:
    """L0/L1/sup-error rows for barrier and randomized experts.

    Barrier rows also carry the analytic solution-Hessian norm at a probe
    state. Both families use the same adaptive slice protocol, so the
    numbers are comparable across expert kinds.
    """
    tasks = [("barrier", float(e)) for e in eta_grid] + \
            [("randomized", float(s)) for s in sigma_grid]
    return _pmap(_SmoothnessTask(bench, n_samples, seed), tasks, jobs)


def matched_levels(rows: list, n_levels: int = 5) -> list:
    """Pair (eta, sigma) at equal Jacobian-variation smoothness.

    Interpolates log sigma against log L1 over the monotone part of the
    randomized sweep and evaluates it at the barrier etas whose L1 falls
    inside the overlap. Returns [(eta, sigma, L1), ...], increasing eta.
    """
    bar = sorted([(r["param"], r["L1_max"]) for r in rows if r["kind"] == "barrier"])
    ran = sorted([(r["param"], r["L1_max"]) for r in rows if r["kind"] == "randomized"])
    if not bar or not ran:
        raise ValueError("need both barrier and randomized sweep rows")
    rs, rl = zip(*ran)
    rs, rl = np.array(rs), np.array(rl)
    order = np.argsort(rl)
    lo, hi = rl.min(), rl.max()
    out = []
    for eta, l1 in bar:
        if not (lo <= l1 <= hi):
            continue
        sigma = float(np.exp(np.interp(np.log(l1), np.log(rl[order]), np.log(rs[order]))))
        out.append((float(eta), sigma, float(l1)))
    if not out:
        raise ValueError("no overlapping smoothness levels between the expert families")
    if len(out) > n_levels:
        idx = np.linspace(0, len(out) - 1, n_levels).round().astype(int)
        out = [out[i] for i in idx]
    return out


# --- bound sweep -------------------------------------------------------------

def bounds_sweep(bench: Workbench, eta_grid, n_states: int = 50, seed: int = 0,
                 corrupt: str | None = None, with_hessian: bool = True) -> tuple:
    """Evaluate every bound calculator against solver measurements.

    Returns (rows, reports, skipped) where skipped lists (eta, reason) for
    grid entries the barrier problem is undefined at (eta <= 0).
    ``corrupt`` deliberately breaks one constant ("error_upper" shrinks
    the global error bound) as a negative control for violation detection.
    """
    skipped = [(float(e), "barrier weight must be positive") for e in eta_grid if e <= 0]
    eta_grid = [float(e) for e in eta_grid if e > 0]
    qp = bench.qp
    K0 = np.linalg.solve(qp.H, qp.F.T)
    L = max_gain_norm(qp, bench.gain_sigmas)
    C = c_constant(qp, bench.gain_sigmas)
    states = bench.sample_initial_states(4 * n_states, seed=seed)
    rows, reports = [], []
    kept = 0
    row_ok = np.linalg.norm(qp.G, axis=1) >= 1.0 - 1e-12
    from .explicit import solve_qp

    for x0 in states:
        if kept >= n_states:
            break
        try:
            rad = feasible_radii(qp, x0)
            if rad.r < 5e-2:  # keep the Newton stencil inside the interior
                continue
            u_star = solve_qp(qp, x0).u_star
        except InfeasibleError:
            continue
        kept += 1
        for eta in eta_grid:
            bp = make_barrier_problem(qp, float(eta), outer_radius=bench.outer_radius)
            sol = solve_barrier(bp, x0)
            err = float(np.linalg.norm(sol.u_eta - u_star))
            ctx = {"x0": tuple(np.round(x0, 6)), "eta": float(eta)}
            eb = error_upper(bp)
            if corrupt == "error_upper":
                eb *= 1e-6
            reports.append(BoundReport.check("error_upper", err, eb, ctx))
            res_lb = residual_lower_bound(bp, x0, u_star, K0, radii=rad)
            min_phi = float(sol.phi[row_ok].min())
            reports.append(BoundReport.check("residual_floor", res_lb, min_phi, ctx))
            L_q = quadratic_lipschitz(qp, x0, rad.R_center)
            first = first_residual_lower_bound(bp, x0, L_q, radii=rad)
            reports.append(BoundReport.check("first_residual_floor", first,
                                             normalized_min_residual(qp, x0, sol.u_eta), ctx))
            try:
                db = directional_bounds(bp, x0, u_star, K0, radii=rad)
                gap = float(db.a @ (sol.u_eta - u_star))
                reports.append(BoundReport.check("directional_lower", db.lower,
                                                 gap * (1 + 1e-9) + 1e-15, ctx))
                reports.append(BoundReport.check("directional_upper", gap, db.upper, ctx))
                dir_lo, dir_hi = db.lower, db.upper
            except NotApplicableError:
                gap = float("nan")
                dir_lo = dir_hi = float("nan")
            jac = barrier_jacobian(bp, sol, x0)
            hess_norm = float("nan")
            hess_bound = float("nan")
            if with_hessian:
                hess_norm = tensor_spectral_norm(barrier_hessian(bp, x0))
                hess_bound = hessian_upper_bound(bp, x0, L, C, u_star=u_star, K0=K0, radii=rad)
                reports.append(BoundReport.check("hessian_upper", hess_norm, hess_bound, ctx))
            rows.append({
                "x0_0": x0[0], "x0_1": x0[1] if qp.d_x > 1 else 0.0, "eta": float(eta),
                "gap_norm": err, "error_upper": eb, "min_residual": min_phi,
                "residual_floor": res_lb, "first_residual_floor": first,
                "directional_gap": gap, "directional_lower": dir_lo,
                "directional_upper": dir_hi, "jacobian_norm": float(np.linalg.norm(jac, 2)),
                "hessian_norm": hess_norm, "hessian_upper": hess_bound,
                "newton_iters": sol.newton_iters,
            })
    return rows, reports, skipped


# --- imitation ---------------------------------------------------------------

def imitation_run(bench: Workbench, expert, jacobian_fn, N: int, K: int,
                  train_cfg: TrainConfig, seed: int, n_eval: int = 20,
                  artifact_dir=None, tag: str = "") -> dict:
    """Dataset -> train -> evaluate for one expert and one seed.

    With ``artifact_dir`` set, the dataset and the training curve are
    written as CSV files named by ``tag`` (each run owns its own paths).
    """

    def sampler(rng):
        return bench.sample_initial_states(1, int(rng.integers(0, 2 ** 31)))[0]

    ds = sample_dataset(bench.sys, expert, sampler, N=N, K=K, seed=seed,
                        jacobian_fn=jacobian_fn)
    cfg = TrainConfig(**{**train_cfg.__dict__, "seed": seed})
    policy, curves = train_imitator(ds, cfg, halfwidths=[bench.state_halfwidth] * bench.qp.d_x)
    if artifact_dir is not None:
        import csv as _csv
        from pathlib import Path

        base = Path(artifact_dir)
        base.mkdir(parents=True, exist_ok=True)
        ds.to_csv(base / f"dataset_{tag}.csv")
        with open(base / f"curve_{tag}.csv", "w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["step", "train_loss"])
            for i, v in enumerate(curves["train"]):
                writer.writerow([i, f"{v:.12g}"])
            writer.writerow([])
            writer.writerow(["val_step", "val_loss"])
            for s, v in curves["val"]:
                writer.writerow([int(s), f"{v:.12g}"])
    eval_states = bench.sample_initial_states(n_eval, seed=seed + 10_000)
    res = imitation_error(bench.sys, expert, policy, eval_states, K)
    finite = np.isfinite(res["max_traj_error"])
    mean_err = float(np.mean(res["max_traj_error"][finite])) if finite.any() else float("inf")
    return {
        "mean_traj_error": mean_err,
        "max_traj_error": float(np.max(res["max_traj_error"])),
        "sup_policy_error": res["sup_policy_error"],
        "final_train_loss": float(curves["train"][-1]) if curves["train"].size else float("nan"),
        "n_eval_failures": int((~finite).sum()),
    }


class _ImitationTask:
    """Picklable (expert kind, level, seed) -> result row."""

    def __init__(self, bench, N, K, train_cfg, n_samples, n_eval, artifact_dir=None):
        self.bench = bench
        self.N, self.K = N, K
        self.train_cfg = train_cfg
        self.n_samples = n_samples
        self.n_eval = n_eval
        self.artifact_dir = artifact_dir

    def __call__(self, item):
        kind, param, l1, seed = item
        if kind == "barrier":
            expert = self.bench.barrier_expert(param)
        else:
            expert = self.bench.randomized_expert(param, n_samples=self.n_samples,
                                                  seed=seed)
        out = imitation_run(self.bench, expert, expert.jacobian, self.N, self.K,
                            self.train_cfg, seed, n_eval=self.n_eval,
                            artifact_dir=self.artifact_dir,
                            tag=f"{kind}_{param:g}_s{seed}")
        return {"expert": kind, "param": param, "matched_L1": l1, "seed": seed, **out}


def imitation_experiment(bench: Workbench, levels: list, N: int, K: int,
                         train_cfg: TrainConfig, seeds, n_samples: int = 800,
                         n_eval: int = 20, jobs: int = 1, artifact_dir=None) -> list:
    """The full comparison: both expert families at matched smoothness levels."""
    tasks = []
    for eta, sigma, l1 in levels:
        for seed in seeds:
            tasks.append(("barrier", float(eta), float(l1), int(seed)))
            tasks.append(("randomized", float(sigma), float(l1), int(seed)))
    return _pmap(_ImitationTask(bench, N, K, train_cfg, n_samples, n_eval, artifact_dir),
                 tasks, jobs)
