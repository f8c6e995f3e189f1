"""Recentered log-barrier MPC: Newton solver, closed-form Jacobian, and
the convex-combination structure of the solution map.

The barrier program replaces the hard constraints of the condensed QP by

    V_eta(x0, u) = 0.5 u^T H u - x0^T F u - eta * [sum_i log phi_i(x0, u) - d^T u],

with phi = P x0 + w - G u and the recentering vector d chosen so that the
minimizer at x0 = 0 is exactly u = 0. Rows of G that are identically zero
contribute a u-independent constant to the barrier; they are validated for
strict positivity and excluded from the Newton system.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import CondensedQP, feasible_radii
from .errors import InfeasibleError, NewtonConvergenceError
from .explicit import gain_for_sigma
from .matrixops import all_sigmas, is_singular_submatrix
from .qp import farkas_certificate

__all__ = [
    "BarrierProblem",
    "BarrierSolution",
    "recentering_vector",
    "make_barrier_problem",
    "solve_barrier",
    "barrier_jacobian",
    "convex_combination",
    "ConvexCombination",
    "barrier_hessian",
    "tensor_spectral_norm",
    "pi_barrier",
]

GRAD_TOL_FACTOR = 1e-10
MAX_NEWTON_ITERS = 200
LINESEARCH_ACCEPT = 0.25
LINESEARCH_SHRINK = 0.5


def recentering_vector(qp: CondensedQP) -> np.ndarray:
    """Gradient of sum_i log phi_i(0, u) at u = 0, i.e. d = -G^T (1/w).

    Requires w > 0 componentwise (the origin strictly inside the
    constraint set at x0 = 0); this makes u = 0 the barrier minimizer at
    the origin for every eta.
    """
    if np.any(qp.w <= 0):
        raise InfeasibleError("origin is not strictly feasible: some w_i <= 0")
    return -(qp.G.T @ (1.0 / qp.w))


@dataclass(frozen=True)
class BarrierProblem:
    """Condensed QP plus barrier weight, recentering vector, and the
    self-concordance parameter nu = 20(m + R^2 ||d||^2) of the recentered
    barrier, with R the origin-centered outer radius at x0 = 0."""

    qp: CondensedQP
    eta: float
    d: np.ndarray
    nu: float

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("barrier weight eta must be positive")
        d = np.ascontiguousarray(self.d, dtype=float)
        d.setflags(write=False)
        object.__setattr__(self, "d", d)

    def with_eta(self, eta: float) -> "BarrierProblem":
        return BarrierProblem(qp=self.qp, eta=float(eta), d=self.d, nu=self.nu)


def make_barrier_problem(qp: CondensedQP, eta: float,
                         outer_radius: float | None = None) -> BarrierProblem:
    """Assemble the barrier program; computes R at x0 = 0 unless supplied."""
    d = recentering_vector(qp)
    if outer_radius is None:
        outer_radius = feasible_radii(qp, np.zeros(qp.d_x)).R
    nu = 20.0 * (qp.m + outer_radius ** 2 * float(d @ d))
    return BarrierProblem(qp=qp, eta=float(eta), d=d, nu=nu)


@dataclass(frozen=True)
class BarrierSolution:
    """Strict-interior minimizer with Newton diagnostics.

    ``phi`` holds all m residuals (positive, including rows of G that are
    identically zero). ``decrements`` is the Newton-decrement history of
    the main phase.
    """

    u_eta: np.ndarray
    phi: np.ndarray
    newton_iters: int
    grad_norm: float
    decrements: tuple
    jacobian: np.ndarray | None = None


def _strict_start(qp: CondensedQP, b: np.ndarray, active: np.ndarray) -> np.ndarray:
    """Chebyshev center of the rows that actually constrain u."""
    from scipy.optimize import linprog

    G = qp.G[active]
    norms = np.linalg.norm(G, axis=1)
    n = qp.n
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([G, norms[:, None]])
    res = linprog(c, A_ub=A_ub, b_ub=b[active], bounds=[(None, None)] * n + [(0, None)],
                  method="highs")
    if res.status == 2 or not res.success:
        raise InfeasibleError("no strictly feasible input sequence",
                              certificate=farkas_certificate(qp.G, b))
    if res.x[n] <= 0:
        raise InfeasibleError("constraint polytope has empty interior")
    return res.x[:n]


def _newton(u, value, grad, hess, phi_of, max_iter, tol, record=None):
    """Two-phase Newton: Armijo-damped far out, pure steps near the optimum.

    The pure phase (Newton decrement below 0.25) backtracks only to stay
    inside the domain; Armijo tests there would drown in floating-point
    cancellation of the objective. Returns the best iterate seen.
    """
    best_u, best_g = u, float(np.linalg.norm(grad(u)))
    for it in range(1, max_iter + 1):
        g = grad(u)
        gnorm = float(np.linalg.norm(g))
        if gnorm < best_g:
            best_u, best_g = u, gnorm
        if gnorm <= tol:
            return u, gnorm, it - 1
        Hm = hess(u)
        try:
            p = -np.linalg.solve(Hm, g)
        except np.linalg.LinAlgError:
            p = -np.linalg.lstsq(Hm, g, rcond=None)[0]
        decrement2 = float(-g @ p)
        if record is not None:
            record.append(np.sqrt(max(decrement2, 0.0)))
        if decrement2 <= 0:
            return best_u, best_g, it - 1
        t = 1.0
        if np.sqrt(decrement2) <= 0.25:
            while t > 1e-14 and np.min(phi_of(u + t * p), initial=np.inf) <= 0:
                t *= LINESEARCH_SHRINK
        else:
            f0 = value(u)
            slope = float(g @ p)
            while t > 1e-14:
                cand = u + t * p
                if np.min(phi_of(cand), initial=np.inf) > 0 and \
                        value(cand) <= f0 + LINESEARCH_ACCEPT * t * slope:
                    break
                t *= LINESEARCH_SHRINK
        if t <= 1e-14:
            return best_u, best_g, it
        u = u + t * p
    gnorm = float(np.linalg.norm(grad(u)))
    if gnorm < best_g:
        best_u, best_g = u, gnorm
    return best_u, best_g, max_iter


def solve_barrier(bp: BarrierProblem, x0: np.ndarray,
                  want_jacobian: bool = False,
                  max_iter: int = MAX_NEWTON_ITERS) -> BarrierSolution:
    """Minimize the barrier objective at x0 to gradient tolerance.

    Initialization follows a phase-I damped Newton on the pure recentered
    barrier from the Chebyshev center (guaranteeing strict feasibility
    independent of eta) before switching to the full objective. Raises
    InfeasibleError when no strict interior exists and
    NewtonConvergenceError when 200 iterations do not reach tolerance.
    """
    qp = bp.qp
    eta = bp.eta
    x0 = np.asarray(x0, dtype=float)
    b = qp.bounds_rhs(x0)
    row_norms = np.linalg.norm(qp.G, axis=1)
    active = row_norms > 0.0
    if np.any(b[~active] <= 0.0):
        raise InfeasibleError("a residual that no input affects is non-positive at x0")

    G = qp.G[active]
    ba = b[active]
    d = bp.d
    Fx = qp.F.T @ x0
    g_scale = 1.0 + float(np.linalg.norm(Fx))
    tol = GRAD_TOL_FACTOR * g_scale

    def phi_of(u):
        return ba - G @ u

    u = _strict_start(qp, b, active)

    # phase I: approach the analytic center of the recentered barrier
    def bval(u):
        return float(-np.sum(np.log(phi_of(u))) + d @ u)

    def bgrad(u):
        return G.T @ (1.0 / phi_of(u)) + d

    def bhess(u):
        r = 1.0 / phi_of(u)
        return (G * (r ** 2)[:, None]).T @ G

    u, _, _ = _newton(u, bval, bgrad, bhess, phi_of, max_iter=30, tol=1e-8)

    # main phase: full objective
    def value(u):
        return float(0.5 * u @ qp.H @ u - Fx @ u
                     + eta * (-np.sum(np.log(phi_of(u))) + d @ u))

    def grad(u):
        return qp.H @ u - Fx + eta * (G.T @ (1.0 / phi_of(u)) + d)

    def hess(u):
        r = 1.0 / phi_of(u)
        return qp.H + eta * (G * (r ** 2)[:, None]).T @ G

    decs: list = []
    u, gnorm, iters = _newton(u, value, grad, hess, phi_of, max_iter=max_iter,
                              tol=min(tol, 1e-12 * g_scale), record=decs)
    if gnorm > tol:
        # phi near zero is computed as a difference of O(b) quantities, so
        # the gradient cannot be evaluated below this cancellation floor;
        # accept iterates that are converged up to it
        phi = phi_of(u)
        scale_i = np.abs(ba) + np.abs(G @ u)
        floor = np.finfo(float).eps * eta * float(
            np.linalg.norm(G, axis=1) @ (scale_i / phi ** 2))
        if gnorm > max(tol, 2.0 * floor):
            raise NewtonConvergenceError(
                f"Newton stalled at gradient norm {gnorm:.3e} (tol {tol:.3e})",
                last_iterate=u, grad_norm=gnorm, iters=iters)

    phi_full = b - qp.G @ u
    sol = BarrierSolution(u_eta=u, phi=phi_full, newton_iters=iters,
                          grad_norm=gnorm, decrements=tuple(decs))
    if want_jacobian:
        jac = barrier_jacobian(bp, sol, x0)
        sol = BarrierSolution(u_eta=u, phi=phi_full, newton_iters=iters,
                              grad_norm=gnorm, decrements=tuple(decs), jacobian=jac)
    return sol


def barrier_jacobian(bp: BarrierProblem, sol: BarrierSolution, x0: np.ndarray) -> np.ndarray:
    """Closed-form sensitivity of the barrier minimizer to the state.

    du_eta/dx0 = H^{-1} [F^T - G^T (G H^{-1} G^T + eta^{-1} Phi^2)^{-1}
    (G H^{-1} F^T - P)] with Phi = Diag(phi) at the solution. The inner
    matrix is positive definite whenever all residuals are positive.
    """
    qp = bp.qp
    phi = np.asarray(sol.phi, dtype=float)
    if np.any(phi <= 0):
        raise ValueError("barrier Jacobian requires strictly positive residuals")
    Hinv_GT = np.linalg.solve(qp.H, qp.G.T)
    M = qp.G @ Hinv_GT + np.diag(phi ** 2 / bp.eta)
    cond = np.linalg.cond(M)
    if cond > 1e14:
        warnings.warn(f"barrier Jacobian system is ill-conditioned (cond={cond:.2e})",
                      RuntimeWarning)
    GHF = qp.G @ np.linalg.solve(qp.H, qp.F.T)
    X = np.linalg.solve(M, GHF - qp.P)
    return np.linalg.solve(qp.H, qp.F.T - qp.G.T @ X)


@dataclass(frozen=True)
class ConvexCombination:
    """Normalized active-set weights reconstructing the barrier Jacobian."""

    weights: dict
    reconstructed: np.ndarray
    log_normalizer: float


def convex_combination(bp: BarrierProblem, sol: BarrierSolution,
                       x0: np.ndarray, max_m: int = 20) -> ConvexCombination:
    """Expand the barrier Jacobian as a convex combination of hard gains.

    Enumerates all active sets sigma with nonsingular Gram submatrix,
    weighting K_sigma by h_sigma proportional to
    det([G H^{-1} G^T]_sigma) * prod_{i not in sigma} (phi_i^2 / eta),
    computed in log space. Requires m <= ``max_m``.
    """
    qp = bp.qp
    if qp.m > max_m:
        raise ValueError(f"refusing 2^{qp.m} active-set enumeration (limit m <= {max_m})")
    phi = np.asarray(sol.phi, dtype=float)
    Hinv_GT = np.linalg.solve(qp.H, qp.G.T)
    gram = qp.G @ Hinv_GT
    log_c = np.log(phi ** 2 / bp.eta)

    entries = []
    for s in all_sigmas(qp.m):
        if int(s.sum()) > qp.n:
            continue
        if is_singular_submatrix(gram, s):
            continue
        sub = gram[np.ix_(s, s)]
        logdet = 0.0 if sub.shape[0] == 0 else float(np.linalg.slogdet(sub)[1])
        logh = logdet + float(log_c[~s].sum())
        entries.append((s, logh))
    logs = np.array([lh for _, lh in entries])
    top = logs.max()
    raw = np.exp(logs - top)
    total = raw.sum()
    recon = np.zeros((qp.n, qp.d_x))
    weights = {}
    for (s, _), wgt in zip(entries, raw / total):
        piece = gain_for_sigma(qp, s)
        recon += wgt * piece.K
        key = "".join("1" if bb else "0" for bb in s)
        weights[key] = float(wgt)
    log_normalizer = float(top + np.log(total))
    return ConvexCombination(weights=weights, reconstructed=recon,
                             log_normalizer=log_normalizer)


def barrier_hessian(bp: BarrierProblem, x0: np.ndarray,
                    step: float | None = None) -> np.ndarray:
    """State Hessian of the solution map, shape (n, d_x, d_x).

    Central differences of the closed-form Jacobian along coordinate
    directions; the analytic Jacobian is exact, so one finite-difference
    layer suffices. The step shrinks automatically when a perturbed state
    leaves the feasible set and fails below 1e-10.
    """
    x0 = np.asarray(x0, dtype=float)
    d_x = bp.qp.d_x
    h = step if step is not None else 1e-5 * (1.0 + float(np.linalg.norm(x0)))
    while h >= 1e-10:
        try:
            slabs = []
            for j in range(d_x):
                e = np.zeros(d_x)
                e[j] = h
                jp = barrier_jacobian(bp, solve_barrier(bp, x0 + e), x0 + e)
                jm = barrier_jacobian(bp, solve_barrier(bp, x0 - e), x0 - e)
                slabs.append((jp - jm) / (2.0 * h))
            return np.stack(slabs, axis=2)
        except InfeasibleError:
            h *= 0.25
    raise InfeasibleError("state too close to the feasibility boundary for differencing")


def tensor_spectral_norm(T: np.ndarray, restarts: int = 8, iters: int = 200,
                         seed: int = 0) -> float:
    """max over unit y of the spectral norm of T[:, :, :] contracted with y.

    For 2-D state slots an angular sweep plus refinement is exact enough;
    otherwise a higher-order power iteration with random restarts runs on
    the unfolded tensor.
    """
    T = np.asarray(T, dtype=float)
    d = T.shape[2]
    if d == 1:
        return float(np.linalg.norm(T[:, :, 0], 2))
    if d == 2:
        best = 0.0
        thetas = np.linspace(0.0, np.pi, 721)
        for th in thetas:
            y = np.array([np.cos(th), np.sin(th)])
            best = max(best, float(np.linalg.norm(T @ y, 2)))
        # local refinement around the best angle
        i = int(np.argmax([np.linalg.norm(T @ np.array([np.cos(t), np.sin(t)]), 2)
                           for t in thetas]))
        lo, hi = thetas[max(i - 1, 0)], thetas[min(i + 1, len(thetas) - 1)]
        for _ in range(60):
            mid1 = lo + (hi - lo) / 3
            mid2 = hi - (hi - lo) / 3
            f1 = np.linalg.norm(T @ np.array([np.cos(mid1), np.sin(mid1)]), 2)
            f2 = np.linalg.norm(T @ np.array([np.cos(mid2), np.sin(mid2)]), 2)
            if f1 < f2:
                lo = mid1
            else:
                hi = mid2
            best = max(best, float(f1), float(f2))
        return best
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(restarts):
        y = rng.standard_normal(d)
        y /= np.linalg.norm(y)
        for _ in range(iters):
            Mslice = T @ y
            u_, s_, vt_ = np.linalg.svd(Mslice, full_matrices=False)
            v = u_[:, 0]
            wvec = vt_[0]
            y_new = np.einsum("i,ijk,j->k", v, T, wvec)
            ny = np.linalg.norm(y_new)
            if ny == 0:
                break
            y = y_new / ny
        best = max(best, float(np.linalg.norm(T @ y, 2)))
    return best


def pi_barrier(bp: BarrierProblem, x: np.ndarray) -> np.ndarray:
    """Barrier control law: first input block of the barrier minimizer."""
    sol = solve_barrier(bp, x)
    return sol.u_eta[: bp.qp.d_u]
