"""Dense strictly convex QP solver and cross-check oracles.

Solves min 0.5 z^T H z + q^T z subject to G z <= b with H positive
definite, by a primal active-set method with smallest-index (Bland)
anti-cycling rules. Exact active sets at the optimizer are required
downstream, which rules out interior-point solvers here.

A dual accelerated projected-gradient oracle and a Euclidean polytope
projection are provided for independent cross-checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import InfeasibleError

__all__ = ["RawQPSolution", "raw_solve_qp", "dual_ascent_qp", "project_polytope", "farkas_certificate"]


@dataclass(frozen=True)
class RawQPSolution:
    z: np.ndarray
    working_set: np.ndarray  # bool, length m; linearly independent active rows
    multipliers: np.ndarray  # length m, zero off the working set
    objective: float
    iterations: int


def _feasible_start(G: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Chebyshev-center LP; raises InfeasibleError with a Farkas certificate."""
    m, n = G.shape
    norms = np.linalg.norm(G, axis=1)
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([G, norms[:, None]])
    res = linprog(c, A_ub=A_ub, b_ub=b, bounds=[(None, None)] * n + [(0, None)],
                  method="highs")
    if res.status == 2:
        raise InfeasibleError("QP constraints are infeasible",
                              certificate=farkas_certificate(G, b))
    if not res.success:
        raise RuntimeError(f"phase-1 LP failed: {res.message}")
    return res.x[:n]


def farkas_certificate(G: np.ndarray, b: np.ndarray) -> np.ndarray | None:
    """Farkas vector y >= 0, y^T G = 0, y^T b < 0 for an empty polytope.

    Obtained from the dual of the elastic LP min s s.t. G z - s <= b.
    Returns None if the polytope is actually feasible.
    """
    m, n = G.shape
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A_ub = np.hstack([G, -np.ones((m, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=b, bounds=[(None, None)] * (n + 1), method="highs")
    if not res.success or res.fun <= 1e-12:
        return None
    y = np.maximum(-res.ineqlin.marginals, 0.0)
    # y^T G = 0 and y^T b = -s* < 0 up to LP tolerances
    return y


def raw_solve_qp(
    H: np.ndarray,
    q: np.ndarray,
    G: np.ndarray,
    b: np.ndarray,
    z0: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int | None = None,
) -> RawQPSolution:
    """Primal active-set method for a strictly convex inequality-constrained QP.

    ``z0`` optionally warm-starts from a feasible point (validated);
    otherwise a Chebyshev-center phase 1 runs first. Ties in the
    removal/blocking rules are broken by smallest constraint index.
    """
    H = np.asarray(H, dtype=float)
    q = np.asarray(q, dtype=float)
    G = np.asarray(G, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = G.shape
    scale_b = 1.0 + np.abs(b)

    if z0 is not None and np.all(G @ z0 - b <= 1e-9 * scale_b):
        z = np.asarray(z0, dtype=float).copy()
    else:
        z = _feasible_start(G, b)
    # clip tiny phase-1 violations back onto the feasible side
    viol = G @ z - b
    if viol.max(initial=-np.inf) > 0:
        worst = viol.max()
        if worst > 1e-7 * scale_b.max():
            raise InfeasibleError("phase-1 produced an infeasible start",
                                  certificate=farkas_certificate(G, b))

    work = np.zeros(m, dtype=bool)
    if max_iter is None:
        max_iter = 50 * (m + n + 10)

    lam_work = np.zeros(0)
    for it in range(1, max_iter + 1):
        g = H @ z + q
        idx = np.flatnonzero(work)
        k = idx.size
        if k:
            KKT = np.zeros((n + k, n + k))
            KKT[:n, :n] = H
            KKT[:n, n:] = G[idx].T
            KKT[n:, :n] = G[idx]
            rhs = np.concatenate([-g, np.zeros(k)])
            sol = np.linalg.solve(KKT, rhs)
            p, lam_work = sol[:n], sol[n:]
        else:
            p = np.linalg.solve(H, -g)
            lam_work = np.zeros(0)

        if np.linalg.norm(p) <= tol * (1.0 + np.linalg.norm(z)):
            if k == 0 or lam_work.min() >= -tol:
                mult = np.zeros(m)
                mult[idx] = np.maximum(lam_work, 0.0)
                obj = float(0.5 * z @ H @ z + q @ z)
                return RawQPSolution(z=z, working_set=work.copy(), multipliers=mult,
                                     objective=obj, iterations=it)
            drop = idx[np.flatnonzero(lam_work < -tol)[0]]
            work[drop] = False
            continue

        rows = np.flatnonzero(~work)
        Gp = G[rows] @ p
        pos = Gp > 1e-13 * (1.0 + np.abs(Gp).max(initial=0.0))
        alpha = 1.0
        block = -1
        if pos.any():
            cand = rows[pos]
            ratios = np.maximum(b[cand] - G[cand] @ z, 0.0) / Gp[pos]
            amin = float(ratios.min())
            if amin < 1.0:
                alpha = amin
                # Bland tie-break: smallest index among near-minimal ratios
                tie = cand[ratios <= amin + 1e-12 * (1.0 + amin)]
                block = int(tie.min())
        z = z + alpha * p
        if block >= 0:
            work[block] = True

    raise RuntimeError(f"active-set method did not converge in {max_iter} iterations")


def dual_ascent_qp(
    H: np.ndarray,
    q: np.ndarray,
    G: np.ndarray,
    b: np.ndarray,
    max_iter: int = 1_000_000,
    tol: float = 1e-12,
) -> np.ndarray:
    """Accelerated projected gradient on the dual; independent of the active-set path.

    Maximizes the dual of min 0.5 z^T H z + q^T z s.t. G z <= b over
    lambda >= 0 and returns the primal z(lambda). Used only as a
    cross-check oracle at desk scale.
    """
    H = np.asarray(H, dtype=float)
    q = np.asarray(q, dtype=float)
    G = np.asarray(G, dtype=float)
    b = np.asarray(b, dtype=float)
    Hinv_GT = np.linalg.solve(H, G.T)
    M = G @ Hinv_GT
    Hinv_q = np.linalg.solve(H, q)
    L = float(np.linalg.eigvalsh(M).max())
    if L <= 0:
        return -Hinv_q
    step = 1.0 / L
    lam = np.zeros(G.shape[0])
    y = lam.copy()
    t = 1.0
    prev = lam.copy()
    for it in range(max_iter):
        grad = -(M @ y) - (G @ Hinv_q) - b  # gradient of the dual at y
        lam_new = np.maximum(y + step * grad, 0.0)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = lam_new + ((t - 1.0) / t_new) * (lam_new - prev)
        if np.linalg.norm(lam_new - prev) <= tol * (1.0 + np.linalg.norm(lam_new)) and it > 10:
            lam = lam_new
            break
        prev, t, lam = lam_new, t_new, lam_new
    return -Hinv_q - Hinv_GT @ lam


def project_polytope(p: np.ndarray, G: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean projection of p onto {z : G z <= b}."""
    p = np.asarray(p, dtype=float)
    if np.all(G @ p <= b + 1e-12 * (1.0 + np.abs(b))):
        return p
    sol = raw_solve_qp(np.eye(p.size), -p, G, b)
    return sol.z
