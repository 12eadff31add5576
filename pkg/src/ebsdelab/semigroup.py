"""Kolmogorov semigroup estimates, the |x|^mu Lyapunov drift inequality and
fitted exponential contraction of P_t[phi](x) - P_t[phi](y).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import GateViolated, InsufficientSignal
from .model import SdeModel
from .sde_sim import DriftShift, euler_maruyama, mean_ci, time_grid

Array = np.ndarray

__all__ = [
    "LyapunovReport",
    "ContractionFit",
    "lyapunov_constants",
    "generator_of_power",
    "lyapunov_check",
    "apply",
    "semigroup_gaps",
    "contraction_fit",
    "write_contraction_csv",
]


def _phi_values(phi: Callable, x: Array) -> Array:
    out = np.asarray(phi(x), dtype=float)
    if out.ndim == 2:
        out = out[:, 0]
    return np.broadcast_to(out, (x.shape[0],))


def apply(
    model: SdeModel,
    phi: Callable[[Array], Array],
    t: float,
    x,
    n_paths: int,
    dt: float,
    seed: int,
    drift_shift: DriftShift | None = None,
) -> tuple[float, float]:
    """Monte Carlo E[phi(X_t^x)] with a 95% half-width.

    ``phi`` maps states ``(n, d)`` to ``(n,)``.
    """
    n_steps, dt = time_grid(t, dt)
    _, (states,), _ = euler_maruyama(model, [x], t, dt, n_paths, seed, drift_shift,
                                     record_times=[n_steps * dt])
    return mean_ci(_phi_values(phi, states[:, -1, :]))


@dataclass(frozen=True)
class LyapunovReport:
    mu: float
    R: float
    a: float
    b: float
    worst_residual_outside: float
    worst_residual_inside: float
    grid: str

    @property
    def holds(self) -> bool:
        return self.worst_residual_outside <= 0.0 and self.worst_residual_inside <= 0.0


def lyapunov_constants(model: SdeModel, mu: float) -> tuple[float, float, float]:
    """(R, a, b) making V = |x|^mu satisfy LV <= -a V + b 1_{|x| <= R}."""
    half = (mu - 1.0) / 2.0
    if not half * model.r2 < model.eta2:
        raise GateViolated(f"(mu-1) r2 / 2 = {half * model.r2:g} is not below eta2 = {model.eta2:g}")
    R = math.sqrt((model.eta1 + half * model.r1) / (model.eta2 - half * model.r2)) + 1.0
    b = mu * model.eta1 + mu * half * model.r1
    a = mu * model.eta2 - mu * half * model.r2 - b / R**2
    return R, a, b


def generator_of_power(model: SdeModel, mu: float, x: Array) -> Array:
    """L applied to V(x) = |x|^mu at states ``(n, d)``."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=1)
    bx = np.einsum("ni,ni->n", model.drift(x), x)
    s = model.diffusion(x)
    frob = np.einsum("nij,nij->n", s, s)
    proj = np.sum(np.einsum("nj,nij->ni", x, s) ** 2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r_m2 = np.where(r > 0, r ** (mu - 2.0), 1.0 if mu == 2 else 0.0)
        r_m4 = np.where(r > 0, r ** (mu - 4.0), 0.0)
    third = 0.0 if mu == 2 else 0.5 * mu * (mu - 2.0) * np.where(r > 0, r_m4 * proj, 0.0)
    return mu * r_m2 * bx + 0.5 * mu * r_m2 * frob + third


def lyapunov_check(model: SdeModel, mu: float, grid: Sequence[float] | Array) -> LyapunovReport:
    """Evaluate LV + aV outside the ball B(0, R) and LV + aV - b inside it.

    1D node sets are embedded along the first coordinate axis.
    """
    R, a, b = lyapunov_constants(model, mu)
    nodes = np.asarray(grid, dtype=float)
    if nodes.ndim == 1:
        pts = np.zeros((nodes.size, model.dim))
        pts[:, 0] = nodes
    else:
        pts = nodes
    r = np.linalg.norm(pts, axis=1)
    res = generator_of_power(model, mu, pts) + a * r**mu
    out = r > R
    worst_out = float(np.max(res[out])) if np.any(out) else -math.inf
    worst_in = float(np.max(res[~out] - b)) if np.any(~out) else -math.inf
    desc = f"{len(r)} nodes in [{r.min():.6g}, {r.max():.6g}] (radius)"
    return LyapunovReport(float(mu), R, a, b, worst_out, worst_in, desc)


@dataclass(frozen=True)
class ContractionFit:
    c_hat: float
    nu_hat: float
    r2_fit: float
    t_grid: tuple[float, ...]
    gaps: tuple[float, ...]
    half_widths: tuple[float, ...]
    used: tuple[bool, ...]

    def rows(self) -> dict:
        return {"t": list(self.t_grid), "gap": list(self.gaps), "ci": list(self.half_widths)}


def semigroup_gaps(
    model: SdeModel,
    phi: Callable[[Array], Array],
    x,
    y,
    t_grid: Sequence[float],
    n_paths: int,
    dt: float,
    seed: int,
    drift_shift: DriftShift | None = None,
) -> tuple[Array, Array]:
    """P_t phi(x) - P_t phi(y) on ``t_grid`` with common random numbers.

    Both starting points share every Brownian increment, so the half-width
    is computed from the paired differences, not from two independent means.
    """
    t_grid = np.asarray(sorted(t_grid), dtype=float)
    T = float(t_grid[-1])
    n_steps, dt = time_grid(T, dt)
    rec = np.round(t_grid / dt) * dt
    _, (px, py), _ = euler_maruyama(model, [x, y], T, dt, n_paths, seed, drift_shift, record_times=rec)
    gaps, hws = [], []
    for k in range(len(t_grid)):
        diff = _phi_values(phi, px[:, k, :]) - _phi_values(phi, py[:, k, :])
        g, hw = mean_ci(diff)
        gaps.append(g)
        hws.append(hw)
    return np.array(gaps), np.array(hws)


def contraction_fit(
    model: SdeModel,
    phi: Callable[[Array], Array],
    x,
    y,
    t_grid: Sequence[float],
    n_paths: int = 100_000,
    dt: float = 0.01,
    seed: int = 0,
    c_phi: float = 1.0,
    mu: float = 2.0,
    drift_shift: DriftShift | None = None,
) -> ContractionFit:
    """Least-squares fit of log|gap(t)| = log(c c_phi (1+|x|^mu+|y|^mu)) - nu t.

    Points whose gap is not above 3 half-widths are dropped.
    """
    if len(t_grid) < 4:
        raise ValueError("t_grid needs at least 4 points")
    ts = np.asarray(sorted(t_grid), dtype=float)
    gaps, hws = semigroup_gaps(model, phi, x, y, ts, n_paths, dt, seed, drift_shift)
    used = np.abs(gaps) > 3.0 * hws
    used &= np.abs(gaps) > 0
    if used.sum() < 4:
        raise InsufficientSignal(f"only {int(used.sum())} of {len(ts)} gaps exceed 3 CI half-widths")
    tt, lg = ts[used], np.log(np.abs(gaps[used]))
    slope, intercept = np.polyfit(tt, lg, 1)
    pred = intercept + slope * tt
    ss_res = float(np.sum((lg - pred) ** 2))
    ss_tot = float(np.sum((lg - lg.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    nx = float(np.linalg.norm(np.atleast_1d(x)))
    ny = float(np.linalg.norm(np.atleast_1d(y)))
    c_hat = math.exp(intercept) / (c_phi * (1.0 + nx**mu + ny**mu))
    return ContractionFit(
        c_hat=c_hat, nu_hat=float(-slope), r2_fit=float(r2), t_grid=tuple(ts.tolist()),
        gaps=tuple(gaps.tolist()), half_widths=tuple(hws.tolist()), used=tuple(bool(u) for u in used),
    )


def write_contraction_csv(fit: ContractionFit, path) -> None:
    from .io import write_csv

    write_csv(path, fit.rows())
