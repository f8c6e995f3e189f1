"""Calculators and empirical verifiers for the barrier-solution bounds.

Every asymptotic statement about the barrier minimizer is instantiated
here with its explicit constants so that sweep checks are deterministic:
the self-concordance parameter of the recentered barrier, the global
error bound, the directional error sandwich, two residual lower bounds,
the solution-Hessian upper bound, the consolidated quadratic-over-polytope
bounds, the one-dimensional gap oracle, and the barrier axioms.

Outer radii: the sandwich and residual bounds require an outer ball
concentric with an inscribed ball. ``feasible_radii`` reports the
origin-centered corner bound R; the calculators use the same corner bound
measured from the Chebyshev center (R_center), which keeps the inscribed
and enclosing balls concentric and the bounds sound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .barrier import BarrierProblem, _newton
from .core import CondensedQP, FeasibleRadii, feasible_radii
from .errors import InfeasibleError
from .qp import raw_solve_qp

__all__ = [
    "BoundReport",
    "NotApplicableError",
    "sc_parameter",
    "error_upper",
    "directional_bounds",
    "DirectionalBounds",
    "residual_lower_bound",
    "first_residual_lower_bound",
    "normalized_min_residual",
    "hessian_upper_bound",
    "quad_opt_bounds",
    "newton_log_barrier",
    "SelfConcordantBarrier1D",
    "log_barrier_1d",
    "one_d_gap_oracle",
    "barrier_axioms_check",
]

REPORT_SLACK = 1e-10


class NotApplicableError(ValueError):
    """Bound does not apply (e.g. the unconstrained minimizer is feasible)."""


@dataclass(frozen=True)
class BoundReport:
    """One checked inequality lhs <= rhs with the context that produced it."""

    name: str
    lhs: float
    rhs: float
    satisfied: bool
    context: dict

    @classmethod
    def check(cls, name: str, lhs: float, rhs: float, context: dict | None = None):
        ok = lhs <= rhs + REPORT_SLACK * max(1.0, abs(rhs))
        return cls(name=name, lhs=float(lhs), rhs=float(rhs), satisfied=bool(ok),
                   context=dict(context or {}))


def sc_parameter(m: int, R: float, d: np.ndarray) -> float:
    """Self-concordance parameter 20(m + R^2 ||d||^2) of the recentered barrier."""
    if m < 1 or R <= 0:
        raise ValueError("need m >= 1 and R > 0")
    d = np.asarray(d, dtype=float)
    return 20.0 * (m + R ** 2 * float(d @ d))


def error_upper(bp: BarrierProblem, eta: float | None = None) -> float:
    """Global bound sqrt(2 eta nu / alpha1) on ||u_eta - u_star||."""
    eta = bp.eta if eta is None else eta
    return math.sqrt(2.0 * eta * bp.nu / bp.qp.alpha1)


def _h_norm(qp: CondensedQP, v: np.ndarray) -> float:
    return math.sqrt(float(v @ qp.H @ v))


@dataclass(frozen=True)
class DirectionalBounds:
    a: np.ndarray
    lower: float
    upper: float


def directional_bounds(bp: BarrierProblem, x0: np.ndarray, u_star: np.ndarray,
                       K0: np.ndarray, radii: FeasibleRadii | None = None) -> DirectionalBounds:
    """Error sandwich along a = H(u* - K0 x0)/||H(u* - K0 x0)||.

    Uses the pure log-barrier parameter (nu = m) exactly as the sandwich
    is stated; r is the Chebyshev radius and R the concentric corner
    bound of the input polytope at x0.
    """
    qp = bp.qp
    x0 = np.asarray(x0, dtype=float)
    delta = np.asarray(u_star, dtype=float) - K0 @ x0
    Hd = qp.H @ delta
    if np.linalg.norm(Hd) <= 1e-12 * (1.0 + np.linalg.norm(u_star)):
        raise NotApplicableError("unconstrained minimizer coincides with u_star")
    a = Hd / np.linalg.norm(Hd)
    D = _h_norm(qp, delta)
    m = qp.m
    a1, a2 = qp.alpha1, qp.alpha2
    eta = bp.eta
    upper = (math.sqrt(4.0 * m * eta + D * D) - D) / (2.0 * math.sqrt(a1))
    if radii is None:
        radii = feasible_radii(qp, x0)
    r, R = radii.r, radii.R_center
    lower = math.sqrt(a1 / a2) * (r / R) * min(
        (math.sqrt(eta + D * D) - D) / math.sqrt(m * a2),
        math.sqrt(a1 / a2) * r / (2.0 * m + 4.0 * math.sqrt(m)),
    )
    return DirectionalBounds(a=a, lower=lower, upper=upper)


def residual_lower_bound(bp: BarrierProblem, x0: np.ndarray, u_star: np.ndarray,
                         K0: np.ndarray, radii: FeasibleRadii | None = None) -> float:
    """Strict-interiority floor for min_i phi_i(u_eta) over rows with ||g_i|| >= 1.

    (lambda_min/lambda_max)(r/R) * min{ (sqrt(eta + D^2) - D)/sqrt(nu lambda_min),
    r/(2 nu + 4 sqrt(nu)) } with D the H-norm distance of u_star from the
    unconstrained solution and nu the recentered-barrier parameter.
    """
    qp = bp.qp
    x0 = np.asarray(x0, dtype=float)
    delta = np.asarray(u_star, dtype=float) - K0 @ x0
    D = _h_norm(qp, delta)
    nu = bp.nu
    if radii is None:
        radii = feasible_radii(qp, x0)
    r, R = radii.r, radii.R_center
    lead = (qp.alpha1 / qp.alpha2) * (r / R)
    return lead * min(
        (math.sqrt(bp.eta + D * D) - D) / math.sqrt(nu * qp.alpha1),
        r / (2.0 * nu + 4.0 * math.sqrt(nu)),
    )


def normalized_min_residual(qp: CondensedQP, x0: np.ndarray, u: np.ndarray) -> float:
    """min_i (w + P x0 - G u)_i / ||g_i|| over rows with nonzero g_i."""
    b = qp.bounds_rhs(x0)
    norms = np.linalg.norm(qp.G, axis=1)
    keep = norms > 0
    phi = b[keep] - qp.G[keep] @ np.asarray(u, dtype=float)
    return float(np.min(phi / norms[keep]))


def first_residual_lower_bound(bp: BarrierProblem, x0: np.ndarray, L_q: float,
                               nu: float | None = None,
                               radii: FeasibleRadii | None = None) -> float:
    """Residual floor min{eta/2, r eta^2 / (150 (nu eta^2 + R^2 (L^2 + 1)))}.

    Stated for unit-norm constraint rows, so it lower-bounds the
    row-normalized residuals (see ``normalized_min_residual``). L_q is a
    Lipschitz bound of the quadratic objective over the polytope.
    """
    qp = bp.qp
    nu = bp.nu if nu is None else nu
    if radii is None:
        radii = feasible_radii(qp, np.asarray(x0, dtype=float))
    r, R = radii.r, radii.R_center
    eta = bp.eta
    denom = 150.0 * (nu * eta * eta + R * R * (L_q * L_q + 1.0))
    return min(eta / 2.0, r * eta * eta / denom)


def quadratic_lipschitz(qp: CondensedQP, x0: np.ndarray, R: float) -> float:
    """sup ||H u - F^T x0|| over ||u|| <= R, a valid L for the quadratic part."""
    return qp.alpha2 * R + float(np.linalg.norm(qp.F.T @ np.asarray(x0, dtype=float)))


def hessian_upper_bound(bp: BarrierProblem, x0: np.ndarray, L: float, C: float,
                        u_star: np.ndarray | None = None,
                        K0: np.ndarray | None = None,
                        radii: FeasibleRadii | None = None) -> float:
    """Solution-Hessian bound (C / res_lb) (||P|| + ||G|| L)^2.

    L is the gain-variation Lipschitz constant max ||K_sigma|| and C the
    max of ||2 H^{-1} G^T (G H^{-1} G^T)_sigma^+|| over nonsingular active
    sets (enumerated when m <= 20, otherwise over discovered sets).
    """
    qp = bp.qp
    if u_star is None:
        from .explicit import solve_qp

        u_star = solve_qp(qp, x0).u_star
    if K0 is None:
        K0 = np.linalg.solve(qp.H, qp.F.T)
    res = residual_lower_bound(bp, x0, u_star, K0, radii=radii)
    if res <= 0:
        raise ValueError("residual lower bound is not positive")
    Pn = float(np.linalg.norm(qp.P, 2))
    Gn = float(np.linalg.norm(qp.G, 2))
    return (C / res) * (Pn + Gn * L) ** 2


def newton_log_barrier(Hq: np.ndarray, lin: np.ndarray, G: np.ndarray, b: np.ndarray,
                       eta: float, x_init: np.ndarray | None = None,
                       tol: float = 1e-12, max_iter: int = 400) -> np.ndarray:
    """Minimize 0.5 x^T Hq x + lin^T x - eta sum_i log(b_i - g_i^T x).

    Oracle-grade Newton solve on an arbitrary polytope with the pure log
    barrier, started from the Chebyshev center unless ``x_init`` is given.
    """
    Hq = np.asarray(Hq, dtype=float)
    lin = np.asarray(lin, dtype=float)
    G = np.asarray(G, dtype=float)
    b = np.asarray(b, dtype=float)

    def phi_of(x):
        return b - G @ x

    if x_init is None:
        from scipy.optimize import linprog

        n = G.shape[1]
        norms = np.linalg.norm(G, axis=1)
        c = np.zeros(n + 1)
        c[-1] = -1.0
        res = linprog(c, A_ub=np.hstack([G, norms[:, None]]), b_ub=b,
                      bounds=[(None, None)] * n + [(0, None)], method="highs")
        if not res.success or res.x[n] <= 0:
            raise InfeasibleError("polytope has empty interior")
        x_init = res.x[:n]

    def value(x):
        return float(0.5 * x @ Hq @ x + lin @ x - eta * np.sum(np.log(phi_of(x))))

    def grad(x):
        return Hq @ x + lin + eta * (G.T @ (1.0 / phi_of(x)))

    def hess(x):
        r = 1.0 / phi_of(x)
        return Hq + eta * (G * (r ** 2)[:, None]).T @ G

    scale = 1.0 + float(np.linalg.norm(lin))
    x, gnorm, _ = _newton(x_init, value, grad, hess, phi_of,
                          max_iter=max_iter, tol=tol * scale)
    return x


def quad_opt_bounds(G: np.ndarray, b: np.ndarray, Hmat: np.ndarray, v: np.ndarray,
                    eta: float, nu: float) -> list:
    """Verify the consolidated quadratic-over-polytope bounds on {x: G x <= b}.

    Solves x_star (active set) and x_eta (Newton with the pure log
    barrier), then checks (i) the global gap sqrt(eta nu / m), (ii) the
    directional gap along a = H(x_star - v)/|..| (reported not-applicable
    when x_star = v), and (iii) that the concentric-ball radius
    lower-bounds the distance of x_eta from the boundary.
    """
    G = np.asarray(G, dtype=float)
    b = np.asarray(b, dtype=float)
    Hmat = np.asarray(Hmat, dtype=float)
    v = np.asarray(v, dtype=float)
    eigs = np.linalg.eigvalsh(Hmat)
    m_eig, M_eig = float(eigs.min()), float(eigs.max())

    x_star = raw_solve_qp(Hmat, -(Hmat @ v), G, b).z
    x_eta = newton_log_barrier(Hmat, -(Hmat @ v), G, b, eta)

    # concentric radii around the Chebyshev center
    from scipy.optimize import linprog

    n = G.shape[1]
    norms = np.linalg.norm(G, axis=1)
    c = np.zeros(n + 1)
    c[-1] = -1.0
    res = linprog(c, A_ub=np.hstack([G, norms[:, None]]), b_ub=b,
                  bounds=[(None, None)] * n + [(0, None)], method="highs")
    center, r = res.x[:n], float(res.x[n])
    lo = np.empty(n)
    hi = np.empty(n)
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        hi[j] = -linprog(-e, A_ub=G, b_ub=b, bounds=[(None, None)] * n, method="highs").fun
        lo[j] = linprog(e, A_ub=G, b_ub=b, bounds=[(None, None)] * n, method="highs").fun
    R = float(np.linalg.norm(np.maximum(np.abs(lo - center), np.abs(hi - center))))

    ctx = {"eta": eta, "nu": nu, "m_eig": m_eig, "M_eig": M_eig, "r": r, "R": R}
    reports = [
        BoundReport.check("quad_gap_global", float(np.linalg.norm(x_eta - x_star)),
                          math.sqrt(eta * nu / m_eig), ctx),
    ]
    dv = x_star - v
    Dh = math.sqrt(float(dv @ Hmat @ dv))
    if np.linalg.norm(Hmat @ dv) > 1e-10 * (1.0 + np.linalg.norm(v)):
        a = Hmat @ dv / np.linalg.norm(Hmat @ dv)
        gap = float(a @ (x_eta - x_star))
        upper = (math.sqrt(4.0 * eta * nu + Dh * Dh) - Dh) / (2.0 * math.sqrt(m_eig))
        reports.append(BoundReport.check("quad_gap_directional_nonneg", 0.0, gap, ctx))
        reports.append(BoundReport.check("quad_gap_directional_upper", gap, upper, ctx))
        radius = math.sqrt(m_eig / M_eig) * (r / R) * min(
            (math.sqrt(eta + Dh * Dh) - Dh) / math.sqrt(nu * M_eig),
            math.sqrt(m_eig / M_eig) * r / (2.0 * nu + 4.0 * math.sqrt(nu)),
        )
        dist = float(np.min((b - G @ x_eta) / norms))
        reports.append(BoundReport.check("quad_ball_radius", radius, dist, ctx))
        reports.append(BoundReport.check("quad_directional_lower", radius, gap, ctx))
    else:
        reports.append(BoundReport.check("quad_gap_directional_na", 0.0, 0.0,
                                         {**ctx, "note": "x_star equals v"}))
    return reports


@dataclass(frozen=True)
class SelfConcordantBarrier1D:
    """A one-dimensional barrier on (0, r) with value/derivative evaluators."""

    r: float
    value: callable
    deriv: callable
    nu: float


def log_barrier_1d(r: float) -> SelfConcordantBarrier1D:
    """The standard two-sided log barrier -log x - log(r - x), nu = 2."""
    return SelfConcordantBarrier1D(
        r=r,
        value=lambda x: -math.log(x) - math.log(r - x),
        deriv=lambda x: -1.0 / x + 1.0 / (r - x),
        nu=2.0,
    )


def _golden_minimize(f, lo: float, hi: float, tol: float = 1e-12) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, bnd = lo, hi
    c = bnd - invphi * (bnd - a)
    d = a + invphi * (bnd - a)
    fc, fd = f(c), f(d)
    while (bnd - a) > tol:
        if fc < fd:
            bnd, d, fd = d, c, fc
            c = bnd - invphi * (bnd - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (bnd - a)
            fd = f(d)
    return 0.5 * (a + bnd)


def one_d_gap_oracle(barrier: SelfConcordantBarrier1D, quad: tuple, eta: float,
                     curvature: float | None = None) -> dict:
    """Locate x_eta on (0, r) by golden section and check its sandwich.

    ``quad`` is (m, M, v): curvature bounds of the convex term and its
    minimizer; the convex term used is 0.5*curvature*(x - v)^2 with
    ``curvature`` in [m, M] (defaults to m). Returns x_eta with the lower
    and upper bound values and their BoundReports.
    """
    m_c, M_c, v = quad
    if curvature is None:
        curvature = m_c
    if not (m_c <= curvature <= M_c) or m_c <= 0:
        raise ValueError("need 0 < m <= curvature <= M")
    r, nu = barrier.r, barrier.nu

    def f(x):
        return 0.5 * curvature * (x - v) ** 2 + eta * barrier.value(x)

    pad = 1e-14 * r
    x_eta = _golden_minimize(f, pad, r - pad, tol=1e-12 * max(1.0, r))
    lower = min(0.5 * (math.sqrt(2.0 * eta / M_c + v * v) + v),
                m_c * r / (M_c * (2.0 * nu + 4.0 * math.sqrt(nu))))
    upper = 0.5 * (math.sqrt(4.0 * eta * nu / m_c + v * v) + v)
    ctx = {"eta": eta, "v": v, "m": m_c, "M": M_c, "nu": nu, "r": r}
    return {
        "x_eta": x_eta,
        "lower": lower,
        "upper": upper,
        "reports": [
            BoundReport.check("one_d_lower", lower, x_eta, ctx),
            BoundReport.check("one_d_upper", x_eta, upper, ctx),
        ],
    }


def barrier_axioms_check(G: np.ndarray, b: np.ndarray, R: float,
                         n_samples: int = 1000, seed: int = 0) -> list:
    """Sampled checks of the log-barrier axioms on {x : G x <= b}.

    For interior x and closure y: grad(phi)(x)^T (y - x) <= m (the barrier
    parameter of the m-row log barrier), and lambda_min(hess phi) >=
    1/(9 R^2) for a set inside a radius-R ball. Sampling is rejection from
    the coordinate bounding box.
    """
    rng = np.random.default_rng(seed)
    G = np.asarray(G, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = G.shape

    from scipy.optimize import linprog

    lo = np.empty(n)
    hi = np.empty(n)
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        hi[j] = -linprog(-e, A_ub=G, b_ub=b, bounds=[(None, None)] * n, method="highs").fun
        lo[j] = linprog(e, A_ub=G, b_ub=b, bounds=[(None, None)] * n, method="highs").fun

    def sample(strict: bool):
        pts = []
        while len(pts) < n_samples:
            cand = rng.uniform(lo, hi, size=(4 * n_samples, n))
            resid = b[None, :] - cand @ G.T
            ok = np.all(resid > (1e-9 if strict else -1e-12), axis=1)
            pts.extend(cand[ok][: n_samples - len(pts)])
        return np.array(pts)

    xs = sample(strict=True)
    ys = sample(strict=False)
    worst_ip = -np.inf
    worst_eig = np.inf
    for x, y in zip(xs, ys):
        resid = b - G @ x
        grad = G.T @ (1.0 / resid)
        worst_ip = max(worst_ip, float(grad @ (y - x)))
        hess = (G * (1.0 / resid ** 2)[:, None]).T @ G
        worst_eig = min(worst_eig, float(np.linalg.eigvalsh(hess).min()))
    ctx = {"m": m, "R": R, "n_samples": int(n_samples)}
    return [
        BoundReport.check("barrier_inner_product", worst_ip, float(m), ctx),
        BoundReport.check("barrier_hessian_floor", 1.0 / (9.0 * R * R), worst_eig, ctx),
    ]
