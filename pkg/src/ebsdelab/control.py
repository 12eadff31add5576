"""Ergodic and finite-horizon control over a finite action set.

The Hamiltonian

    H(x, z) = min_a { L(x, a) + z sigma(x)^{-1} R(a) }

is evaluated by enumeration; ties go to the first listed action so the
argmin (the feedback selector) is deterministic. Costs of feedback or
open-loop controls are estimated by simulating the controlled dynamics
dX = [Xi(X) + R(a_t)] dt + sigma(X) dW directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ebsde import ErgodicSolution
from .errors import BlowUp
from .model import ControlProblem, SdeModel, _twist
from .pde_solver import FiniteHorizonSolution, Grid1D, centered_gradient
from .sde_sim import DEFAULT_GUARD, BrownianStream, _apply, mean_ci, time_grid

Array = np.ndarray

TIE_TOL = 1e-12

__all__ = [
    "FeedbackPolicy",
    "hamiltonian",
    "hamiltonian_values",
    "optimal_feedback",
    "finite_horizon_feedback",
    "random_policy",
    "constant_policy",
    "evaluate_cost_finite",
    "evaluate_cost_ergodic",
    "write_policy_csv",
]


def _action_costs(cp: ControlProblem, model: SdeModel, x: Array, z: Array) -> Array:
    """L(x, a) + z sigma^{-1} R(a) for every action, shape (n, n_actions)."""
    w = _twist(model, x, z)
    R = cp.control_matrix()
    return np.column_stack([cp.running_cost(x, k) for k in range(len(cp.actions))]) + w @ R.T


def _first_argmin(values: Array) -> Array:
    best = values.min(axis=1, keepdims=True)
    near = values <= best + TIE_TOL * (1.0 + np.abs(best))
    return np.argmax(near, axis=1)


def hamiltonian_values(cp: ControlProblem, model: SdeModel, x: Array, z: Array) -> tuple[Array, Array]:
    """Hamiltonian values and argmin action indices at states ``(n, d)``."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    vals = _action_costs(cp, model, x, z)
    idx = _first_argmin(vals)
    return vals[np.arange(len(idx)), idx], idx


def hamiltonian(cp: ControlProblem, model: SdeModel, x, z) -> tuple[float, str]:
    """Hamiltonian at a single point and the label of the minimising action."""
    xx = np.atleast_1d(np.asarray(x, dtype=float))[None, :]
    zz = np.atleast_1d(np.asarray(z, dtype=float))[None, :]
    val, idx = hamiltonian_values(cp, model, xx, zz)
    return float(val[0]), cp.actions[int(idx[0])]


@dataclass(frozen=True)
class FeedbackPolicy:
    """Action indices tabulated on grid nodes, looked up at the nearest node.

    ``indices`` has shape (n_nodes,) for a stationary rule or
    (n_times, n_nodes) for a time-dependent one, in which case row k applies
    on [times[k], times[k+1]).
    """

    nodes: Array
    indices: Array
    labels: tuple[str, ...]
    provenance: str
    times: Array | None = field(default=None, repr=False)

    def __post_init__(self):
        idx = np.asarray(self.indices)
        if idx.shape[-1] != len(self.nodes):
            raise ValueError("policy table does not match the nodes")
        if idx.size and (idx.min() < 0 or idx.max() >= len(self.labels)):
            raise ValueError("policy refers to unknown actions")
        if (idx.ndim == 2) != (self.times is not None):
            raise ValueError("time-dependent tables need times and vice versa")

    @property
    def stationary(self) -> bool:
        return self.times is None

    def node_index(self, x: Array) -> Array:
        x0, h = float(self.nodes[0]), float(self.nodes[1] - self.nodes[0])
        return np.clip(np.rint((np.asarray(x) - x0) / h).astype(int), 0, len(self.nodes) - 1)

    def __call__(self, t: float, x: Array) -> Array:
        """Action indices for 1D states ``x`` at time ``t``."""
        j = self.node_index(x)
        if self.times is None:
            return self.indices[j]
        k = int(np.searchsorted(self.times, t + 1e-12, side="right")) - 1
        k = min(max(k, 0), self.indices.shape[0] - 1)
        return self.indices[k, j]

    def label_table(self) -> list[str]:
        base = self.indices if self.times is None else self.indices[0]
        return [self.labels[int(i)] for i in base]


def _argmin_on_nodes(cp: ControlProblem, model: SdeModel, grid: Grid1D, zeta: Array) -> Array:
    x = grid.nodes[:, None]
    return hamiltonian_values(cp, model, x, np.asarray(zeta, dtype=float)[:, None])[1]


def optimal_feedback(cp: ControlProblem, model: SdeModel, ergodic: ErgodicSolution) -> FeedbackPolicy:
    """Stationary argmin of the Hamiltonian at (x, zeta(x)) on the ergodic grid."""
    idx = _argmin_on_nodes(cp, model, ergodic.grid, ergodic.zeta)
    return FeedbackPolicy(ergodic.grid.nodes, idx, cp.actions, "argmin of the Hamiltonian at (x, zeta(x))")


def finite_horizon_feedback(cp: ControlProblem, model: SdeModel, u: FiniteHorizonSolution) -> FeedbackPolicy:
    """Time-dependent argmin at (x, u_x(t, x) sigma(x)) from every PDE layer."""
    grid = u.grid
    s = model.sigma_1d(grid.nodes)
    table = np.empty((len(u.times) - 1, grid.n_nodes), dtype=int)
    for k in range(len(u.times) - 1):
        # on [t_k, t_{k+1}) use the gradient of the later layer, as the scheme does
        table[k] = _argmin_on_nodes(cp, model, grid, centered_gradient(u.u[k + 1], grid.h) * s)
    return FeedbackPolicy(grid.nodes, table, cp.actions, "argmin of the Hamiltonian at (x, u_x sigma)",
                          times=u.times[:-1])


def random_policy(cp: ControlProblem, grid: Grid1D, seed: int, n_bins: int = 8) -> FeedbackPolicy:
    """Stationary policy that is constant on ``n_bins`` equal cells of the grid."""
    rng = np.random.default_rng(seed)
    cell_actions = rng.integers(0, len(cp.actions), size=n_bins)
    cells = np.minimum(((grid.nodes - grid.x_min) / (grid.x_max - grid.x_min) * n_bins).astype(int),
                       n_bins - 1)
    return FeedbackPolicy(grid.nodes, cell_actions[cells], cp.actions, f"random seed={seed} bins={n_bins}")


def constant_policy(cp: ControlProblem, grid: Grid1D, label: str) -> FeedbackPolicy:
    k = cp.actions.index(label)
    return FeedbackPolicy(grid.nodes, np.full(grid.n_nodes, k), cp.actions, f"constant {label}")


def _controller(policy, cp: ControlProblem, n_steps: int):
    """Map (step, t, x) -> action indices for a policy or an open-loop path."""
    if isinstance(policy, FeedbackPolicy):
        if tuple(policy.labels) != tuple(cp.actions):
            raise ValueError("policy was built for a different action set")
        return lambda k, t, x: policy(t, x[:, 0])
    path = np.asarray(policy)
    if path.dtype.kind in "US":
        path = np.array([cp.actions.index(str(a)) for a in path.ravel()]).reshape(path.shape)
    path = path.astype(int)
    if path.shape[-1] != n_steps:
        raise ValueError(f"open-loop path needs {n_steps} steps, got {path.shape[-1]}")
    if path.ndim == 1:
        return lambda k, t, x: np.full(x.shape[0], path[k])
    return lambda k, t, x: path[:, k]


def _run_controlled(cp, model, policy, x0, T, dt, n_paths, seed, keep_from: float):
    """Accumulate int L dt per path over [keep_from, T]; returns (integral, X_T)."""
    if model.dim != 1:
        raise ValueError("controlled simulation is one-dimensional")
    n_steps, dt = time_grid(T, dt)
    act = _controller(policy, cp, n_steps)
    R = cp.control_matrix()
    x = np.full((n_paths, 1), float(x0))
    acc = np.zeros(n_paths)
    stream = BrownianStream(seed, n_paths, 1)
    sqdt = math.sqrt(dt)
    rows = np.arange(n_paths)
    k = 0
    while k < n_steps:
        chunk = min(64, n_steps - k)
        noise = stream.draw(chunk) * sqdt
        for j in range(chunk):
            t = k * dt
            a = act(k, t, x)
            if t >= keep_from - 1e-12:
                costs = np.column_stack([cp.running_cost(x, i) for i in range(len(cp.actions))])
                acc += costs[rows, a] * dt
            x = x + (model.drift(x) + R[a]) * dt + _apply(model.diffusion(x), noise[j])
            k += 1
        if not np.all(np.abs(x) < DEFAULT_GUARD):
            raise BlowUp(f"controlled state left the guard radius near t={k * dt:.6g}")
    return acc, x


def evaluate_cost_finite(
    cp: ControlProblem, model: SdeModel, policy, x0: float, T: float, dt: float, n_paths: int, seed: int
) -> tuple[float, float]:
    """J^T = E[int_0^T L(X_t, a_t) dt + g(X_T)] with a 95% half-width.

    ``policy`` is a FeedbackPolicy or an open-loop array of action indices or
    labels, shape (n_steps,) or (n_paths, n_steps).
    """
    acc, xT = _run_controlled(cp, model, policy, x0, T, dt, n_paths, seed, keep_from=0.0)
    return mean_ci(acc + cp.terminal.g(xT))


def evaluate_cost_ergodic(
    cp: ControlProblem,
    model: SdeModel,
    policy,
    x0: float,
    T_long: float,
    dt: float,
    n_paths: int,
    seed: int,
    burn_in: float = 0.2,
) -> tuple[float, float]:
    """Time-averaged running cost over [burn_in T_long, T_long]."""
    if T_long < 20:
        raise ValueError("T_long must be at least 20")
    if not 0 <= burn_in < 1:
        raise ValueError("burn_in must lie in [0, 1)")
    n_steps, dt_eff = time_grid(T_long, dt)
    start = math.ceil(burn_in * n_steps - 1e-9) * dt_eff
    acc, _ = _run_controlled(cp, model, policy, x0, T_long, dt, n_paths, seed, keep_from=start)
    return mean_ci(acc / (T_long - start))


def write_policy_csv(policy: FeedbackPolicy, path) -> None:
    """CSV ``x,action_label`` (the first time row for time-dependent rules)."""
    from .io import write_csv

    write_csv(path, {"x": policy.nodes, "action_label": policy.label_table()})
