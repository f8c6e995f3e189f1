"""Closed-loop simulation, dataset generation, and smoothness/stability metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LinearSystem

__all__ = [
    "Trajectory",
    "rollout",
    "ImitationDataset",
    "sample_dataset",
    "imitation_error",
    "smoothness_metrics",
    "grid_with_neighbors",
    "iss_gain",
]


@dataclass(frozen=True)
class Trajectory:
    """States x_0..x_K and inputs u_0..u_{K-1} of one closed-loop run.

    ``completed`` is False when the policy failed mid-rollout; ``failure``
    then carries the diagnostic and the arrays are truncated.
    """

    states: np.ndarray
    inputs: np.ndarray
    completed: bool = True
    failure: str | None = None

    @property
    def K(self) -> int:
        return self.inputs.shape[0]


def rollout(sys: LinearSystem, policy, x0: np.ndarray, K: int) -> Trajectory:
    """Simulate x_{t+1} = A x_t + B policy(x_t) for K steps."""
    x = np.asarray(x0, dtype=float)
    states = [x.copy()]
    inputs = []
    for _ in range(K):
        try:
            u = np.atleast_1d(np.asarray(policy(x), dtype=float))
        except Exception as err:  # noqa: BLE001 - diagnostic truncation
            return Trajectory(states=np.array(states), inputs=np.array(inputs).reshape(len(inputs), -1),
                              completed=False, failure=f"{type(err).__name__}: {err}")
        inputs.append(u)
        x = sys.step(x, u)
        states.append(x.copy())
    return Trajectory(states=np.array(states), inputs=np.array(inputs))


@dataclass(frozen=True)
class ImitationDataset:
    """Expert demonstrations: N trajectories of K states with expert inputs.

    states: (N, K, d_x); inputs: (N, K, d_u); jacobians: (N, K, d_u, d_x)
    or None.
    """

    states: np.ndarray
    inputs: np.ndarray
    jacobians: np.ndarray | None = None

    @property
    def N(self) -> int:
        return self.states.shape[0]

    @property
    def K(self) -> int:
        return self.states.shape[1]

    def flat(self):
        N, K, d_x = self.states.shape
        X = self.states.reshape(N * K, d_x)
        U = self.inputs.reshape(N * K, -1)
        J = None if self.jacobians is None else self.jacobians.reshape(N * K, U.shape[1], d_x)
        return X, U, J

    def to_csv(self, path) -> None:
        """One row per (trajectory, step): state, expert input, Jacobian."""
        import csv

        N, K, d_x = self.states.shape
        d_u = self.inputs.shape[2]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            cols = (["traj", "step"] + [f"x{j}" for j in range(d_x)]
                    + [f"u{j}" for j in range(d_u)])
            if self.jacobians is not None:
                cols += [f"J{i}{j}" for i in range(d_u) for j in range(d_x)]
            writer.writerow(cols)
            for i in range(N):
                for t in range(K):
                    row = [i, t] + [f"{v:.12g}" for v in self.states[i, t]] \
                        + [f"{v:.12g}" for v in self.inputs[i, t]]
                    if self.jacobians is not None:
                        row += [f"{v:.12g}" for v in self.jacobians[i, t].ravel()]
                    writer.writerow(row)


def sample_dataset(sys: LinearSystem, expert, sampler, N: int, K: int, seed: int,
                   jacobian_fn=None, max_rejects: int = 10_000) -> ImitationDataset:
    """Roll the expert from N i.i.d. initial states for K steps.

    ``sampler(rng)`` proposes initial states; proposals where the expert
    fails to evaluate or to complete the K-step rollout are rejected, so
    every recorded state is one the expert handled. Jacobians are
    recorded when ``jacobian_fn`` is given. Deterministic given ``seed``.
    """
    rng = np.random.default_rng(seed)
    d_x = sys.d_x
    states = np.zeros((N, K, d_x))
    inputs = None
    jacs = None
    for i in range(N):
        traj = None
        for _ in range(max_rejects):
            cand = np.asarray(sampler(rng), dtype=float)
            try:
                expert(cand)
            except Exception:
                continue
            attempt = rollout(sys, expert, cand, K)
            if attempt.completed:
                traj = attempt
                break
        if traj is None:
            raise RuntimeError("could not sample an initial state the expert completes")
        states[i] = traj.states[:K]
        if inputs is None:
            inputs = np.zeros((N, K, traj.inputs.shape[1]))
            if jacobian_fn is not None:
                jacs = np.zeros((N, K, traj.inputs.shape[1], d_x))
        inputs[i] = traj.inputs
        if jacobian_fn is not None:
            for t in range(K):
                jacs[i, t] = jacobian_fn(states[i, t])
    if N == 0:
        inputs = np.zeros((0, K, 1))
    return ImitationDataset(states=states, inputs=inputs, jacobians=jacs)


def imitation_error(sys: LinearSystem, expert, learner, eval_states: np.ndarray,
                    K: int, expert_jacobian=None, learner_jacobian=None) -> dict:
    """Per-start trajectory deviation and sup distances between two policies.

    Rolls both policies from each start; reports max-over-time state error
    per start plus the sup policy distance (and sup Jacobian distance when
    both evaluators are given) along the expert trajectories.
    """
    eval_states = np.atleast_2d(np.asarray(eval_states, dtype=float))
    traj_errors = []
    sup_policy = 0.0
    sup_jac = 0.0 if (expert_jacobian and learner_jacobian) else None
    for x0 in eval_states:
        ref = rollout(sys, expert, x0, K)
        hat = rollout(sys, learner, x0, K)
        steps = min(ref.states.shape[0], hat.states.shape[0])
        err = float(np.max(np.linalg.norm(ref.states[:steps] - hat.states[:steps], axis=1)))
        if steps < K + 1:
            err = max(err, float("inf"))  # truncated rollout counts as failure
        traj_errors.append(err)
        for t in range(ref.inputs.shape[0]):
            x = ref.states[t]
            try:
                du = np.linalg.norm(np.atleast_1d(learner(x)) - ref.inputs[t])
            except Exception:
                du = float("inf")
            sup_policy = max(sup_policy, float(du))
            if sup_jac is not None:
                dj = np.linalg.norm(learner_jacobian(x) - expert_jacobian(x), 2)
                sup_jac = max(sup_jac, float(dj))
    return {
        "max_traj_error": np.array(traj_errors),
        "sup_policy_error": sup_policy,
        "sup_jacobian_error": sup_jac,
    }


def grid_with_neighbors(lo, hi, resolution: int):
    """Mesh points over a box plus index pairs of axis-adjacent neighbors."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    d = lo.size
    axes = [np.linspace(lo[j], hi[j], resolution) for j in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    shape = (resolution,) * d
    idx = np.arange(pts.shape[0]).reshape(shape)
    pairs = []
    for axis in range(d):
        a = np.moveaxis(idx, axis, 0)
        pairs.append(np.stack([a[:-1].ravel(), a[1:].ravel()], axis=1))
    return pts, np.vstack(pairs)


def smoothness_metrics(policy, points: np.ndarray, neighbors: np.ndarray,
                       h: float = 1e-4, jacobian=None) -> dict:
    """Worst-case first/second-difference smoothness of a policy on a grid.

    L0_max is the max finite-difference Jacobian spectral norm over the
    points; L1_max the max Jacobian variation between neighboring points
    divided by their distance. Points where evaluation fails are skipped
    and counted. An analytic ``jacobian`` callable replaces differencing.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = points.shape
    jacs = [None] * n
    skipped = 0
    for i, x in enumerate(points):
        try:
            if jacobian is not None:
                jacs[i] = np.atleast_2d(jacobian(x))
            else:
                cols = []
                for j in range(d):
                    e = np.zeros(d)
                    e[j] = h
                    cols.append((np.atleast_1d(policy(x + e))
                                 - np.atleast_1d(policy(x - e))) / (2 * h))
                jacs[i] = np.stack(cols, axis=1)
        except Exception:
            skipped += 1
    L0 = 0.0
    for J in jacs:
        if J is not None:
            L0 = max(L0, float(np.linalg.norm(J, 2)))
    L1 = 0.0
    for i, j in neighbors:
        if jacs[i] is None or jacs[j] is None:
            continue
        dist = float(np.linalg.norm(points[i] - points[j]))
        if dist > 0:
            L1 = max(L1, float(np.linalg.norm(jacs[i] - jacs[j], 2)) / dist)
    return {"L0_max": L0, "L1_max": L1, "skipped": skipped}


def iss_gain(epsilon: float, L: float, normA: float, normB: float,
             Binv_eval, gamma_inv_eval) -> float:
    """Disturbance gain v(eps) under which trajectories stay eps-close.

    v(eps) = min( gamma^{-1}(eps/2),
                  eps * (1 + ||A|| + (1 + L) ||B||)^(-B^{-1}(eps/4)) ),
    where gamma is the stability gain of the controller and B^{-1} the
    settling-time function; both are supplied as evaluators.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    base = 1.0 + normA + (1.0 + L) * normB
    return float(min(gamma_inv_eval(epsilon / 2.0),
                     epsilon * base ** (-float(Binv_eval(epsilon / 4.0)))))
