"""Finite-difference solvers on a truncated 1D grid.

Backward Cauchy problem ``u_t + L u + psi(x, u_x sigma) = 0, u(T) = g``,
the discounted stationary equation ``alpha v = L v + psi(x, v_x sigma)``,
the ergodic residual ``L v + psi(x, v_x sigma) - lambda`` and the gradient
field ``zeta = v_x sigma``.

The linear part ``L = sigma^2/2 d_xx + Xi d_x`` is treated implicitly as a
tridiagonal M-matrix; ``psi`` is explicit with a centered gradient. The
drift stencil is centered where the cell Peclet number ``|Xi| h / sigma^2``
is at most 1 and upwind elsewhere (``scheme="hybrid"``), which keeps the
matrix monotone while staying second order on diffusion-dominated cells.
Both ends close the stencil with ``u_xx = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import CflViolated, MaxPseudoTimeExceeded, NonFiniteLayer, TimeNotOnGrid
from .model import Driver, SdeModel, TerminalCondition

Array = np.ndarray

__all__ = [
    "Grid1D",
    "FiniteHorizonSolution",
    "StationarySolution",
    "cfl_bound",
    "generator_matrix",
    "centered_gradient",
    "solve_finite_horizon",
    "solve_discounted",
    "ergodic_residual",
    "extract_z",
    "growth_constant",
    "weighted_lipschitz_constant",
    "write_finite_horizon_csv",
    "write_discounted_csv",
]


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_nodes: int
    boundary: str = "second_derivative_zero"

    def __post_init__(self):
        if not self.x_min < 0 < self.x_max:
            raise ValueError("grid must satisfy x_min < 0 < x_max")
        if self.n_nodes < 16:
            raise ValueError("grid needs at least 16 nodes")
        if self.boundary != "second_derivative_zero":
            raise ValueError("only the u_xx = 0 boundary is supported")

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.n_nodes - 1)

    @property
    def nodes(self) -> Array:
        return np.linspace(self.x_min, self.x_max, self.n_nodes)

    @property
    def zero_index(self) -> int:
        return int(np.argmin(np.abs(self.nodes)))

    def window(self, lo: float, hi: float) -> Array:
        x = self.nodes
        return (x >= lo - 1e-12) & (x <= hi + 1e-12)

    @classmethod
    def symmetric(cls, half_width: float, h: float) -> "Grid1D":
        """Symmetric grid with spacing exactly ``h`` and a node at 0."""
        m = int(math.ceil(half_width / h - 1e-9))
        return cls(-m * h, m * h, 2 * m + 1)

    @classmethod
    def auto(cls, model: SdeModel, h: float = 0.02, x0: float = 0.0, scale: float = 1.0) -> "Grid1D":
        """Box of half-width 6 sqrt(r1 / (2 eta2 - r2)) + |x0|, times ``scale``."""
        half = 6.0 * math.sqrt(model.r1 / (2.0 * model.eta2 - model.r2)) + abs(x0)
        return cls.symmetric(scale * half, h)


@dataclass(frozen=True)
class FiniteHorizonSolution:
    grid: Grid1D
    times: Array
    u: Array  # (n_times, n_nodes); u[-1] is the terminal layer
    model_name: str
    driver_name: str
    terminal_name: str
    dt: float

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def layer_index(self, t: float) -> int:
        k = int(round(t / self.dt))
        if k < 0 or k >= len(self.times) or abs(self.times[k] - t) > 1e-9 * max(1.0, self.T):
            raise TimeNotOnGrid(f"t={t} is not a time layer")
        return k

    def horizon_layer(self, horizon: float) -> Array:
        """u_horizon(0, .): by time-homogeneity the layer at t = T - horizon."""
        return self.u[self.layer_index(self.T - horizon)]

    def value(self, horizon: float, x) -> Array:
        return np.interp(x, self.grid.nodes, self.horizon_layer(horizon))


@dataclass(frozen=True)
class StationarySolution:
    grid: Grid1D
    alpha: float
    v_alpha: Array
    iterations: int
    final_update_norm: float
    pseudo_time: float = 0.0
    tol: float = 0.0


def cfl_bound(model: SdeModel, driver: Driver, grid: Grid1D) -> float:
    """h / (max |Xi| + max(1, Kz)) over the grid."""
    b = np.max(np.abs(model.drift_1d(grid.nodes)))
    return grid.h / (b + max(1.0, driver.Kz))


def _check_1d(model: SdeModel) -> None:
    if model.dim != 1:
        raise ValueError("the grid solver is one-dimensional")


def generator_matrix(model: SdeModel, grid: Grid1D, scheme: str = "hybrid") -> sp.csc_matrix:
    """Tridiagonal discretisation of sigma^2/2 d_xx + Xi d_x."""
    _check_1d(model)
    if scheme not in ("hybrid", "upwind", "centered"):
        raise ValueError(f"unknown scheme {scheme!r}")
    x, h, n = grid.nodes, grid.h, grid.n_nodes
    a = 0.5 * model.sigma_1d(x) ** 2
    b = model.drift_1d(x)
    lower = np.zeros(n)
    upper = np.zeros(n)
    if scheme == "centered":
        use_c = np.ones(n, dtype=bool)
    elif scheme == "upwind":
        use_c = np.zeros(n, dtype=bool)
    else:
        use_c = np.abs(b) * h <= 2.0 * a
    lower = np.where(use_c, a / h**2 - b / (2 * h), a / h**2 + np.maximum(-b, 0.0) / h)
    upper = np.where(use_c, a / h**2 + b / (2 * h), a / h**2 + np.maximum(b, 0.0) / h)
    # u_xx = 0 closure: ghost u_{-1} = 2u_0 - u_1, any first difference is one-sided
    lower[0], upper[0] = 0.0, b[0] / h
    lower[-1], upper[-1] = -b[-1] / h, 0.0
    diag = -(lower + upper)
    return sp.diags([lower[1:], diag, upper[:-1]], [-1, 0, 1], format="csc")


def centered_gradient(v: Array, h: float) -> Array:
    g = np.empty_like(v)
    g[1:-1] = (v[2:] - v[:-2]) / (2 * h)
    g[0] = (v[1] - v[0]) / h
    g[-1] = (v[-1] - v[-2]) / h
    return g


def extract_z(v: Array, model: SdeModel, grid: Grid1D) -> Array:
    """zeta(x_i) = v'(x_i) sigma(x_i); centered inside, one-sided at the ends."""
    v = np.asarray(v, dtype=float)
    return centered_gradient(v, grid.h) * model.sigma_1d(grid.nodes)


def _nonlinear(model: SdeModel, driver: Driver, grid: Grid1D):
    x, h = grid.nodes, grid.h
    s = model.sigma_1d(x)

    def term(v):
        return driver.psi_1d(x, centered_gradient(v, h) * s)

    return term


def solve_finite_horizon(
    model: SdeModel,
    driver: Driver,
    terminal: TerminalCondition,
    T: float,
    grid: Grid1D,
    dt: float | None = None,
    scheme: str = "hybrid",
) -> FiniteHorizonSolution:
    """March u backward from u(T) = g to t = 0 and keep every layer."""
    _check_1d(model)
    bound = cfl_bound(model, driver, grid)
    if dt is None:
        # reciprocal-integer step so that integer horizons are layers
        dt = 1.0 / math.ceil(1.0 / (0.9 * bound))
    if dt > bound * (1 + 1e-12):
        raise CflViolated(f"dt={dt:g} exceeds the stability bound {bound:g}")
    n_steps = max(1, int(math.ceil(T / dt - 1e-9)))
    dt = T / n_steps
    x = grid.nodes
    M = generator_matrix(model, grid, scheme)
    lu = splu((sp.identity(grid.n_nodes, format="csc") - dt * M).tocsc())
    nonlinear = _nonlinear(model, driver, grid)
    u = np.empty((n_steps + 1, grid.n_nodes))
    u[-1] = terminal.g_1d(x)
    if not np.all(np.isfinite(u[-1])):
        raise NonFiniteLayer(T)
    for k in range(n_steps - 1, -1, -1):
        u[k] = lu.solve(u[k + 1] + dt * nonlinear(u[k + 1]))
        if not np.all(np.isfinite(u[k])):
            raise NonFiniteLayer(k * dt)
    times = np.arange(n_steps + 1) * dt
    return FiniteHorizonSolution(grid, times, u, model.name, driver.name, terminal.name, dt)


def solve_discounted(
    model: SdeModel,
    driver: Driver,
    alpha: float,
    grid: Grid1D,
    tol: float = 1e-9,
    max_pseudo_time: float | None = None,
    dtau: float = 0.5,
    v0: Array | None = None,
    scheme: str = "hybrid",
) -> StationarySolution:
    """Pseudo-time march of v_tau = L v + psi(x, v_x sigma) - alpha v to steady state.

    Stops once the sup-norm update per unit pseudo-time is <= tol * alpha.
    """
    _check_1d(model)
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if max_pseudo_time is None:
        max_pseudo_time = 200.0 / alpha + 100.0
    M = generator_matrix(model, grid, scheme)
    n = grid.n_nodes
    lu = splu(((1.0 / dtau + alpha) * sp.identity(n, format="csc") - M).tocsc())
    nonlinear = _nonlinear(model, driver, grid)
    v = np.zeros(n) if v0 is None else np.array(v0, dtype=float)
    tau, it = 0.0, 0
    while True:
        v_new = lu.solve(v / dtau + nonlinear(v))
        it += 1
        tau += dtau
        if not np.all(np.isfinite(v_new)):
            raise NonFiniteLayer(tau, f"non-finite iterate at pseudo-time {tau:.6g}")
        upd = float(np.max(np.abs(v_new - v))) / dtau
        v = v_new
        if upd <= tol * alpha:
            break
        if tau >= max_pseudo_time:
            raise MaxPseudoTimeExceeded(
                f"alpha={alpha:g}: update {upd:.3e} > {tol * alpha:.3e} after pseudo-time {tau:g}")
    return StationarySolution(grid, float(alpha), v, it, upd, tau, tol)


def ergodic_residual(
    model: SdeModel, driver: Driver, v: Array, lam: float, grid: Grid1D, scheme: str = "centered"
) -> tuple[float, Array]:
    """Discrete L v + psi(x, v_x sigma) - lambda; the sup skips the two boundary nodes."""
    v = np.asarray(v, dtype=float)
    field_ = generator_matrix(model, grid, scheme) @ v + _nonlinear(model, driver, grid)(v) - lam
    return float(np.max(np.abs(field_[1:-1]))), field_


def growth_constant(values: Array, grid: Grid1D, exponent: float = 1.0,
                    mask: Array | None = None) -> float:
    """Smallest C with |values| <= C (1 + |x|^exponent) on the (masked) grid."""
    x = grid.nodes
    r = np.abs(values) / (1.0 + np.abs(x) ** exponent)
    if mask is not None:
        r = r[mask]
    return float(np.max(r))


def weighted_lipschitz_constant(values: Array, grid: Grid1D, exponent: float = 2.0,
                                mask: Array | None = None, stride: int = 1) -> float:
    """Smallest C with |v(x) - v(x')| <= C (1 + |x|^k + |x'|^k)|x - x'| over node pairs."""
    x = grid.nodes
    idx = np.arange(grid.n_nodes) if mask is None else np.flatnonzero(mask)
    idx = idx[::stride]
    xi, vi = x[idx], np.asarray(values)[idx]
    dx = np.abs(xi[:, None] - xi[None, :])
    dv = np.abs(vi[:, None] - vi[None, :])
    w = (1.0 + np.abs(xi[:, None]) ** exponent + np.abs(xi[None, :]) ** exponent) * dx
    off = dx > 0
    return float(np.max(dv[off] / w[off]))


def write_finite_horizon_csv(sol: FiniteHorizonSolution, path, t_stride: int = 1) -> None:
    from .io import write_csv

    ks = np.arange(0, len(sol.times), t_stride)
    if ks[-1] != len(sol.times) - 1:
        ks = np.append(ks, len(sol.times) - 1)
    n = sol.grid.n_nodes
    write_csv(path, {
        "t": np.repeat(sol.times[ks], n),
        "x": np.tile(sol.grid.nodes, len(ks)),
        "u": sol.u[ks].reshape(-1),
    })


def write_discounted_csv(sol: StationarySolution, path) -> None:
    from .io import write_csv

    write_csv(path, {"x": sol.grid.nodes, "v_alpha": sol.v_alpha})
