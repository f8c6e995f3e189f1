"""Explicit (piecewise-affine) MPC: QP solutions, active-set gains, piece discovery.

The hard-constrained law is u = K_sigma x + k_sigma on the polyhedral
region where the active set sigma holds. Regions are discovered on a
state grid and deduplicated by active set, with (K, k) rounded to 1e-6
as a secondary key so that degenerate boundary ties cannot inflate the
piece count.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .core import CondensedQP, residuals
from .errors import DegenerateActiveSetError, InfeasibleError
from .matrixops import is_singular_submatrix, padded_inverse, padded_pinv
from .qp import raw_solve_qp

__all__ = [
    "ActiveSet",
    "AffinePiece",
    "QPSolution",
    "solve_qp",
    "gain_for_sigma",
    "pi_mpc",
    "discover_pieces",
    "PieceCollection",
    "PieceTableEvaluator",
    "state_grid",
    "enumerate_nonsingular_sigmas",
    "max_gain_norm",
    "c_constant",
]

# constraint counted active when residual <= ACTIVE_TOL * (1 + |w_i|)
ACTIVE_TOL = 1e-8
GAIN_ROUND_DECIMALS = 6


@dataclass(frozen=True)
class ActiveSet:
    """Indicator of active constraints, sigma in {0,1}^m."""

    sigma: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sigma)
        if s.dtype != bool:
            s = s.astype(int).astype(bool)
        s = np.ascontiguousarray(s)
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)

    @property
    def m(self) -> int:
        return self.sigma.shape[0]

    @property
    def popcount(self) -> int:
        return int(self.sigma.sum())

    def bitstring(self) -> str:
        return "".join("1" if b else "0" for b in self.sigma)

    @classmethod
    def from_bitstring(cls, bits: str) -> "ActiveSet":
        return cls(np.array([c == "1" for c in bits], dtype=bool))

    def __eq__(self, other) -> bool:
        return isinstance(other, ActiveSet) and np.array_equal(self.sigma, other.sigma)

    def __hash__(self) -> int:
        return hash(self.sigma.tobytes())


@dataclass(frozen=True)
class AffinePiece:
    """One affine piece u = K x + k of the explicit law."""

    sigma: ActiveSet
    K: np.ndarray
    k: np.ndarray

    def __post_init__(self):
        K = np.ascontiguousarray(self.K, dtype=float)
        k = np.ascontiguousarray(self.k, dtype=float)
        if not (np.all(np.isfinite(K)) and np.all(np.isfinite(k))):
            raise ValueError("gain contains non-finite entries")
        K.setflags(write=False)
        k.setflags(write=False)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "k", k)

    def control(self, x: np.ndarray) -> np.ndarray:
        return self.K @ np.asarray(x, dtype=float) + self.k

    def gain_key(self) -> bytes:
        return (np.round(self.K, GAIN_ROUND_DECIMALS).tobytes()
                + np.round(self.k, GAIN_ROUND_DECIMALS).tobytes())


@dataclass(frozen=True)
class QPSolution:
    """Hard-constrained optimizer with KKT data.

    ``sigma`` is the solver's final working set: a maximal linearly
    independent subset of the active constraints (degenerate weakly
    active rows at region boundaries are not included).
    """

    u_star: np.ndarray
    sigma: ActiveSet
    multipliers: np.ndarray
    objective: float


def solve_qp(qp: CondensedQP, x0: np.ndarray, warm: np.ndarray | None = None) -> QPSolution:
    """Global minimizer of the condensed QP at state x0.

    Raises InfeasibleError (with a Farkas separating certificate) when the
    input-sequence polytope at x0 is empty.
    """
    x0 = np.asarray(x0, dtype=float)
    b = qp.bounds_rhs(x0)
    sol = raw_solve_qp(qp.H, -(qp.F.T @ x0), qp.G, b, z0=warm)
    return QPSolution(u_star=sol.z, sigma=ActiveSet(sol.working_set),
                      multipliers=sol.multipliers, objective=sol.objective)


def gain_for_sigma(qp: CondensedQP, sigma: ActiveSet | np.ndarray,
                   pseudo: bool = False) -> AffinePiece:
    """Affine gains (K_sigma, k_sigma) for a given active set.

    Requires det([G H^{-1} G^T]_sigma) > 0; with ``pseudo`` the padded
    pseudoinverse is used instead, matching the degenerate-set convention
    of the gain-variation constant.
    """
    if not isinstance(sigma, ActiveSet):
        sigma = ActiveSet(sigma)
    if sigma.m != qp.m:
        raise ValueError("sigma length must equal the number of constraints")
    if sigma.popcount > qp.n:
        raise DegenerateActiveSetError(
            f"active set of size {sigma.popcount} exceeds the {qp.n} inputs")
    Hinv_GT = np.linalg.solve(qp.H, qp.G.T)
    gram = qp.G @ Hinv_GT
    if pseudo:
        Minv = padded_pinv(gram, sigma.sigma)
    else:
        if is_singular_submatrix(gram, sigma.sigma):
            raise DegenerateActiveSetError("singular principal submatrix for sigma")
        Minv = padded_inverse(gram, sigma.sigma)
    GHF = qp.G @ np.linalg.solve(qp.H, qp.F.T)
    K = np.linalg.solve(qp.H, qp.F.T - qp.G.T @ (Minv @ (GHF - qp.P)))
    k = np.linalg.solve(qp.H, qp.G.T @ (Minv @ qp.w))
    return AffinePiece(sigma=sigma, K=K, k=k)


def pi_mpc(qp: CondensedQP, x: np.ndarray) -> np.ndarray:
    """Receding-horizon control law: first input block of the QP optimizer."""
    return solve_qp(qp, x).u_star[: qp.d_u]


def state_grid(lo, hi, resolution: int) -> np.ndarray:
    """Uniform inclusive grid over the box [lo, hi], resolution points per axis."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    axes = [np.linspace(lo[j], hi[j], resolution) for j in range(lo.size)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass
class _PieceRegion:
    piece: AffinePiece
    primal_M: np.ndarray  # (G K - P) x <= w - G k  on the region
    primal_v: np.ndarray
    dual_M: np.ndarray    # lambda(x) = dual_M x + dual_v >= 0 on the region
    dual_v: np.ndarray
    occupancy: int = 0


def _region_data(qp: CondensedQP, piece: AffinePiece) -> _PieceRegion:
    primal_M = qp.G @ piece.K - qp.P
    primal_v = qp.w - qp.G @ piece.k
    s = piece.sigma.sigma
    if s.any():
        Gs = qp.G[s]
        Ms = Gs @ np.linalg.solve(qp.H, Gs.T)
        GHF_s = Gs @ np.linalg.solve(qp.H, qp.F.T)
        dual_M = np.linalg.solve(Ms, GHF_s - qp.P[s])
        dual_v = -np.linalg.solve(Ms, qp.w[s])
    else:
        dual_M = np.zeros((0, qp.d_x))
        dual_v = np.zeros(0)
    return _PieceRegion(piece=piece, primal_M=primal_M, primal_v=primal_v,
                        dual_M=dual_M, dual_v=dual_v)


def _region_mask(region: _PieceRegion, X: np.ndarray, tol_scale: np.ndarray,
                 dual_tol: float = 1e-9) -> np.ndarray:
    primal_ok = np.all(X @ region.primal_M.T - region.primal_v <= tol_scale, axis=1)
    if region.dual_M.shape[0]:
        dual_ok = np.all(X @ region.dual_M.T + region.dual_v >= -dual_tol, axis=1)
    else:
        dual_ok = np.ones(X.shape[0], dtype=bool)
    return primal_ok & dual_ok


@dataclass
class PieceCollection:
    """Distinct affine pieces discovered over a grid, with occupancy counts.

    ``pieces``/``occupancy`` are deduplicated by rounded (K, k);
    ``sigma_count`` is the number of distinct active sets beforehand.
    """

    pieces: list
    occupancy: np.ndarray
    n_feasible: int
    n_infeasible: int
    sigma_count: int
    grid_shape: tuple = ()

    @property
    def n_pieces(self) -> int:
        return len(self.pieces)

    def to_csv(self, path) -> None:
        """Piece table: sigma bitstring, row-major K, k, occupancy."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sigma", "K_row_major", "k", "occupancy"])
            for piece, occ in zip(self.pieces, self.occupancy):
                writer.writerow([
                    piece.sigma.bitstring(),
                    " ".join(f"{v:.12g}" for v in piece.K.ravel()),
                    " ".join(f"{v:.12g}" for v in piece.k.ravel()),
                    int(occ),
                ])


def _dedupe_by_gain(qp, sigma_pieces: dict):
    """Merge active sets whose rounded gains coincide; keep the dominant sigma."""
    groups: dict = {}
    for _, (piece, occ) in sorted(sigma_pieces.items()):
        groups.setdefault(piece.gain_key(), []).append((piece, occ))
    items = []
    for members in groups.values():
        rep = max(members, key=lambda po: (po[1], po[0].sigma.bitstring()))[0]
        items.append((rep, sum(occ for _, occ in members)))
    items.sort(key=lambda po: (-po[1], po[0].sigma.bitstring()))
    pieces = [po[0] for po in items]
    occupancy = np.array([po[1] for po in items], dtype=int)
    return pieces, occupancy


def discover_pieces(qp: CondensedQP, grid: np.ndarray, method: str = "assign") -> PieceCollection:
    """Enumerate the distinct affine pieces visited by a state grid.

    ``method="per-point"`` solves the QP at every grid point.
    ``method="assign"`` (default, equivalent output) solves one QP per
    undiscovered piece and assigns the remaining grid points by exact
    primal/dual membership tests of the known regions; infeasible points
    are eliminated in bulk through Farkas certificate half-planes. Both
    methods dedupe by active set and then by rounded gains.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 2 or grid.shape[1] != qp.d_x:
        raise ValueError(f"grid must have shape (N, {qp.d_x})")
    if method == "per-point":
        return _discover_per_point(qp, grid)
    if method != "assign":
        raise ValueError("method must be 'assign' or 'per-point'")

    N = grid.shape[0]
    status = np.zeros(N, dtype=np.int8)  # 0 unassigned, 1 assigned, -1 infeasible
    tol_scale = ACTIVE_TOL * (1.0 + np.abs(qp.w))
    sigma_pieces: dict = {}
    regions: list = []

    cursor = 0
    while True:
        while cursor < N and status[cursor] != 0:
            cursor += 1
        if cursor >= N:
            break
        x = grid[cursor]
        try:
            sol = solve_qp(qp, x)
        except InfeasibleError as err:
            status[cursor] = -1
            y = err.certificate
            if y is not None:
                here = float(y @ (qp.w + qp.P @ x))
                valid = (here < 0
                         and np.linalg.norm(qp.G.T @ y) <= 1e-7 * max(1.0, np.linalg.norm(y)))
                if valid:
                    # every state with y^T (w + P x) < 0 shares the certificate
                    vals = y @ qp.w + grid @ (qp.P.T @ y)
                    cut = vals < -1e-9 * (1.0 + abs(float(y @ qp.w)))
                    status[(status == 0) & cut] = -1
            continue
        key = sol.sigma.bitstring()
        if key not in sigma_pieces:
            piece = gain_for_sigma(qp, sol.sigma)
            sigma_pieces[key] = [piece, 0]
            region = _region_data(qp, piece)
            regions.append((key, region))
            todo = status == 0
            mask = _region_mask(region, grid[todo], tol_scale)
            hit = np.flatnonzero(todo)[mask]
            status[hit] = 1
            sigma_pieces[key][1] += hit.size
        if status[cursor] == 0:
            # boundary point whose own region test missed by tolerance
            status[cursor] = 1
            sigma_pieces[key][1] += 1

    n_inf = int((status == -1).sum())
    pieces, occupancy = _dedupe_by_gain(qp, {k: tuple(v) for k, v in sigma_pieces.items()})
    return PieceCollection(pieces=pieces, occupancy=occupancy,
                           n_feasible=N - n_inf, n_infeasible=n_inf,
                           sigma_count=len(sigma_pieces))


def _discover_per_point(qp: CondensedQP, grid: np.ndarray) -> PieceCollection:
    sigma_pieces: dict = {}
    n_inf = 0
    warm = None
    for x in grid:
        try:
            sol = solve_qp(qp, x, warm=warm)
        except InfeasibleError:
            n_inf += 1
            warm = None
            continue
        warm = sol.u_star
        key = sol.sigma.bitstring()
        if key not in sigma_pieces:
            sigma_pieces[key] = [gain_for_sigma(qp, sol.sigma), 0]
        sigma_pieces[key][1] += 1
    pieces, occupancy = _dedupe_by_gain(qp, {k: tuple(v) for k, v in sigma_pieces.items()})
    return PieceCollection(pieces=pieces, occupancy=occupancy,
                           n_feasible=grid.shape[0] - n_inf, n_infeasible=n_inf,
                           sigma_count=len(sigma_pieces))


class PieceTableEvaluator:
    """Fast batched evaluation of the explicit law through a piece table.

    Points are matched against regions in occupancy order with exact
    primal/dual tests; unmatched points (outside every discovered region,
    or infeasible) fall back to a per-point QP solve or NaN.
    """

    def __init__(self, qp: CondensedQP, collection: PieceCollection):
        self.qp = qp
        self.collection = collection
        order = np.argsort(-collection.occupancy, kind="stable")
        self._regions = [_region_data(qp, collection.pieces[i]) for i in order]
        self._tol_scale = ACTIVE_TOL * (1.0 + np.abs(qp.w))

    def eval_batch(self, X: np.ndarray, fallback: str = "qp") -> np.ndarray:
        """First-input controls for a batch of states, shape (N, d_u).

        ``fallback``: "qp" solves unmatched points exactly, "nan" marks them.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        N = X.shape[0]
        out = np.full((N, self.qp.d_u), np.nan)
        todo = np.arange(N)
        for region in self._regions:
            if todo.size == 0:
                break
            mask = _region_mask(region, X[todo], self._tol_scale)
            hit = todo[mask]
            if hit.size:
                U = X[hit] @ region.piece.K.T + region.piece.k
                out[hit] = U[:, : self.qp.d_u]
                todo = todo[~mask]
        if todo.size and fallback == "qp":
            for i in todo:
                try:
                    out[i] = solve_qp(self.qp, X[i]).u_star[: self.qp.d_u]
                except InfeasibleError:
                    pass
        return out

    def __call__(self, x: np.ndarray) -> np.ndarray:
        u = self.eval_batch(np.asarray(x, dtype=float)[None, :])[0]
        if np.any(np.isnan(u)):
            raise InfeasibleError("state outside the feasible set")
        return u

    def piece_at(self, x: np.ndarray) -> AffinePiece | None:
        """The first discovered piece whose region contains x, if any."""
        X = np.asarray(x, dtype=float)[None, :]
        for region in self._regions:
            if _region_mask(region, X, self._tol_scale)[0]:
                return region.piece
        return None

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """First-input gain rows of the piece active at x.

        At region boundaries this returns the first matching piece's gain;
        the law is not differentiable there.
        """
        piece = self.piece_at(x)
        if piece is None:
            sol = solve_qp(self.qp, np.asarray(x, dtype=float))
            piece = gain_for_sigma(self.qp, sol.sigma)
        return piece.K[: self.qp.d_u]


def enumerate_nonsingular_sigmas(qp: CondensedQP, max_m: int = 20):
    """All sigma with det([G H^{-1} G^T]_sigma) > 0, for small m."""
    from .matrixops import all_sigmas

    if qp.m > max_m:
        raise ValueError(f"refusing to enumerate 2^{qp.m} active sets")
    gram = qp.G @ np.linalg.solve(qp.H, qp.G.T)
    out = []
    for s in all_sigmas(qp.m):
        if int(s.sum()) > qp.n:
            continue
        if not is_singular_submatrix(gram, s):
            out.append(ActiveSet(s))
    return out


def max_gain_norm(qp: CondensedQP, sigmas) -> float:
    """Gain-variation Lipschitz constant L = max over sigma of ||K_sigma||."""
    best = 0.0
    for s in sigmas:
        piece = gain_for_sigma(qp, s, pseudo=True)
        best = max(best, float(np.linalg.norm(piece.K, 2)))
    return best


def c_constant(qp: CondensedQP, sigmas) -> float:
    """max over sigma of ||2 H^{-1} G^T (G H^{-1} G^T)_sigma^+||."""
    gram = qp.G @ np.linalg.solve(qp.H, qp.G.T)
    Hinv_GT = np.linalg.solve(qp.H, qp.G.T)
    best = 0.0
    for s in sigmas:
        sig = s.sigma if isinstance(s, ActiveSet) else np.asarray(s, dtype=bool)
        best = max(best, float(np.linalg.norm(2.0 * Hinv_GT @ padded_pinv(gram, sig), 2)))
    return best
