"""Large-time behaviour of the finite-horizon value.

With (lambda, v) the ergodic pair, w_T(x) = u_T(0, x) - lambda T - v(x)
should converge to a constant L at an exponential rate, and
|u_T(0, x) - lambda T| should stay bounded in T. Everything here is
post-processing of a single finite-horizon solve: by time-homogeneity the
layer at t = T_max - T is the value for horizon T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ebsde import ErgodicSolution
from .errors import FitDegenerate
from .model import Driver, SdeModel, TerminalCondition
from .pde_solver import FiniteHorizonSolution, Grid1D, solve_finite_horizon

Array = np.ndarray

MIN_SOLVER_TOL = 1e-10

__all__ = [
    "LargeTimeProfile",
    "FirstBehaviorReport",
    "RateReport",
    "profile",
    "profile_from_solution",
    "first_behavior_check",
    "rate_vs_x_check",
    "write_profile_csv",
]


@dataclass(frozen=True)
class LargeTimeProfile:
    T_list: tuple[float, ...]
    x_list: tuple[float, ...]
    w: Array  # (len(T_list), len(x_list))
    L_hat: float
    nu_hat: float
    fit_r2: float
    C_hat: float
    floor: float
    mu: float = 2.0
    L_first_pass: float = math.nan
    rows_used: tuple[bool, ...] = ()

    def summary(self) -> dict:
        return {"L_hat": self.L_hat, "nu_hat": self.nu_hat, "fit_r2": self.fit_r2, "C_hat": self.C_hat}


def _weights(x_list: Sequence[float], mu: float) -> Array:
    return 1.0 + np.abs(np.asarray(x_list, dtype=float)) ** mu


def _envelope_constant(w: Array, L: float, T: Array, x_list, nu: float, mu: float, floor: float) -> float:
    """Smallest C with |w - L| <= C (1 + |x|^mu) e^{-nu T} at points above the floor."""
    dev = np.abs(w - L)
    above = dev > floor
    if not np.any(above):
        return 0.0
    env = _weights(x_list, mu)[None, :] * np.exp(-nu * T)[:, None]
    return float(np.max(dev[above] / env[above]))


def _fit_rate(T: Array, dev: Array, floor: float) -> tuple[float, float, float, Array]:
    """Least squares of log(dev) on T over rows with dev above the floor."""
    used = dev > floor
    if used.sum() < 2:
        raise FitDegenerate(
            f"only {int(used.sum())} rows exceed the floor {floor:g}: converged beyond measurement"
        )
    slope, intercept = np.polyfit(T[used], np.log(dev[used]), 1)
    lg = np.log(dev[used])
    pred = intercept + slope * T[used]
    ss_tot = float(np.sum((lg - lg.mean()) ** 2))
    r2 = 1.0 - float(np.sum((lg - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(-slope), float(intercept), r2, used


def profile_from_solution(
    u: FiniteHorizonSolution,
    ergodic: ErgodicSolution,
    T_list: Sequence[float],
    x_list: Sequence[float],
    solver_tol: float | None = None,
    mu: float = 2.0,
) -> LargeTimeProfile:
    """Assemble w and fit L, nu and C from an existing finite-horizon solve.

    ``solver_tol`` is the accuracy of lambda T + v(x); by default it is the
    ergodic solution's own extrapolation error estimate,
    lam_error max(T) + v_error, since errors in lambda accumulate linearly
    in T and would otherwise be fitted as slow decay.

    L is first taken as the mean of the last row; after a first rate fit it
    is refined once by extrapolating the last two rows along the fitted
    exponential, and the rate is refitted around the refined value.
    """
    T = np.asarray(sorted(float(t) for t in T_list))
    xs = np.asarray(x_list, dtype=float)
    if len(T) < 2:
        raise ValueError("T_list needs at least two horizons")
    grid = u.grid
    if np.any(xs < grid.x_min) or np.any(xs > grid.x_max):
        raise ValueError("x_list leaves the grid")
    if T[-1] > u.T + 1e-9:
        raise ValueError("T_list exceeds the solved horizon")
    v_x = np.interp(xs, ergodic.grid.nodes, ergodic.v)
    w = np.array([u.value(t, xs) - ergodic.lam * t - v_x for t in T])
    if not np.all(np.isfinite(w)):
        raise FloatingPointError("non-finite profile values")
    if solver_tol is None:
        solver_tol = ergodic.lam_error * float(T[-1]) + ergodic.v_error
    floor = 3.0 * max(solver_tol, MIN_SOLVER_TOL)

    L0 = float(np.mean(w[-1]))
    dev0 = np.max(np.abs(w - L0), axis=1)
    try:
        nu0, _, _, _ = _fit_rate(T, dev0, floor)
    except FitDegenerate:
        # converged beyond measurement: the profile is flat at L0
        return LargeTimeProfile(tuple(T), tuple(xs), w, L0, math.inf, 1.0, 0.0, floor, mu, L0,
                                tuple(False for _ in T))
    L = L0
    if nu0 > 0 and math.isfinite(nu0):
        q = math.exp(-nu0 * (T[-1] - T[-2]))
        # w_n - L = q (w_{n-1} - L)  =>  L = (w_n - q w_{n-1}) / (1 - q)
        L = float(np.mean((w[-1] - q * w[-2]) / (1.0 - q)))
    dev = np.max(np.abs(w - L), axis=1)
    try:
        nu, _, r2, used = _fit_rate(T, dev, floor)
    except FitDegenerate:
        nu, r2, used = nu0, 1.0, dev > floor
    C = _envelope_constant(w, L, T, xs, nu, mu, floor)
    return LargeTimeProfile(tuple(T), tuple(xs), w, L, nu, r2, C, floor, mu, L0, tuple(bool(b) for b in used))


def profile(
    model: SdeModel,
    driver: Driver,
    terminal: TerminalCondition,
    grid: Grid1D,
    T_list: Sequence[float],
    x_list: Sequence[float],
    ergodic: ErgodicSolution,
    dt: float | None = None,
    solver_tol: float | None = None,
    mu: float = 2.0,
) -> LargeTimeProfile:
    """One finite-horizon solve at max(T_list), then :func:`profile_from_solution`."""
    T = sorted(float(t) for t in T_list)
    if len(T) < 5 or T[0] > 2.0 or T[-1] < 10.0:
        raise ValueError("T_list needs at least 5 horizons spanning [2, 10]")
    u = solve_finite_horizon(model, driver, terminal, T[-1], grid, dt=dt)
    return profile_from_solution(u, ergodic, T, x_list, solver_tol, mu)


@dataclass(frozen=True)
class FirstBehaviorReport:
    """|u_T(0, x) - lambda T| on a T by x table, tested against C (1 + |x|^mu).

    The bound is checked through its running constant: C_k is the smallest
    C fitting row k, and the check fails if some C_k more than doubles the
    largest earlier C_j (plus ``floor``), i.e. if the products grow with T
    rather than staying bounded.
    """

    T_list: tuple[float, ...]
    x_list: tuple[float, ...]
    products: Array  # (len(T_list), len(x_list)) of |u_T(0, x) - lambda T|
    floor: float
    mu: float = 2.0

    @property
    def row_constants(self) -> Array:
        return np.max(self.products / _weights(self.x_list, self.mu)[None, :], axis=1)

    @property
    def passed(self) -> bool:
        c = self.row_constants
        if not np.all(np.isfinite(c)):
            return False
        return all(c[k] <= 2.0 * np.max(c[:k]) + self.floor for k in range(1, len(c)))


def first_behavior_check(
    u: FiniteHorizonSolution,
    lam: float,
    x_list: Sequence[float],
    T_list: Sequence[float],
    floor: float = 1e-8,
    mu: float = 2.0,
) -> FirstBehaviorReport:
    """Table of T |u_T(0, x)/T - lambda| read from the layers of ``u``."""
    T = sorted(float(t) for t in T_list)
    xs = np.asarray(x_list, dtype=float)
    prod = np.array([np.abs(u.value(t, xs) - lam * t) for t in T])
    return FirstBehaviorReport(tuple(T), tuple(xs), prod, floor, mu)


@dataclass(frozen=True)
class RateReport:
    mu: float
    C_hat: float
    holds: bool
    C_hat_half_dt: float | None = None

    @property
    def stable(self) -> bool | None:
        if self.C_hat_half_dt is None:
            return None
        lo, hi = sorted((self.C_hat, self.C_hat_half_dt))
        return hi <= 2.0 * lo or hi == 0.0

    @property
    def passed(self) -> bool:
        return self.holds and math.isfinite(self.C_hat) and self.stable is not False


def rate_vs_x_check(
    prof: LargeTimeProfile, mu: float, profile_half_dt: LargeTimeProfile | None = None
) -> RateReport:
    """Smallest global C with |w - L| <= C (1 + |x|^mu) e^{-nu T} at every profiled point.

    Points within the fit floor only need |w - L| <= floor. When a profile at
    half the time step is given, C must agree within a factor 2.
    """
    T = np.asarray(prof.T_list)
    if not math.isfinite(prof.nu_hat):
        C = 0.0
        holds = bool(np.all(np.abs(prof.w - prof.L_hat) <= prof.floor))
    else:
        C = _envelope_constant(prof.w, prof.L_hat, T, prof.x_list, prof.nu_hat, mu, prof.floor)
        env = C * _weights(prof.x_list, mu)[None, :] * np.exp(-prof.nu_hat * T)[:, None]
        holds = bool(np.all(np.abs(prof.w - prof.L_hat) <= env * (1 + 1e-12) + prof.floor))
    C2 = None
    if profile_half_dt is not None:
        C2 = rate_vs_x_check(profile_half_dt, mu).C_hat
    return RateReport(float(mu), C, holds and math.isfinite(C), C2)


def write_profile_csv(prof: LargeTimeProfile, path) -> None:
    from .io import write_csv

    nT, nx = prof.w.shape
    write_csv(path, {
        "T": np.repeat(prof.T_list, nx),
        "x": np.tile(prof.x_list, nT),
        "w": prof.w.reshape(-1),
    })
