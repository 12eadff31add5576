"""Ergodic triple (lambda, v, zeta) by vanishing discount, with independent
cross-checks of lambda (finite-horizon growth rate, invariant-measure average).
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import NonConvergent, WindowOutOfRange
from .model import Driver, SdeModel
from .pde_solver import (
    FiniteHorizonSolution,
    Grid1D,
    StationarySolution,
    ergodic_residual,
    extract_z,
    solve_discounted,
    solve_finite_horizon,
)
from .sde_sim import euler_maruyama, mean_ci

logger = logging.getLogger(__name__)

Array = np.ndarray

DEFAULT_SCHEDULE = tuple(2.0 ** -k for k in range(7))
ROUTES = ("discount", "discount_alt", "slope", "invariant")

__all__ = [
    "ErgodicSolution",
    "CrosscheckReport",
    "DEFAULT_SCHEDULE",
    "vanishing_discount",
    "lambda_from_slope",
    "invariant_average",
    "uniqueness_crosscheck",
    "write_ergodic_csv",
]


@dataclass(frozen=True)
class ErgodicSolution:
    lam: float
    v: Array
    zeta: Array
    grid: Grid1D
    alpha_schedule: tuple[float, ...]
    lambda_trace: tuple[float, ...]
    v_trace_gaps: tuple[float, ...]
    residual: float
    v_last_alpha: Array
    discounted: tuple[StationarySolution, ...] = field(repr=False, default=())
    # extrapolation error estimates: change when the oldest point is dropped
    lam_error: float = 0.0
    v_error: float = 0.0

    def summary(self) -> dict:
        return {
            "lambda": self.lam,
            "residual": self.residual,
            "lambda_trace": list(self.lambda_trace),
            "alpha_schedule": list(self.alpha_schedule),
            "v_trace_gaps": list(self.v_trace_gaps),
            "lambda_error_estimate": self.lam_error,
            "v_error_estimate": self.v_error,
        }


def _linear_intercept(alphas: Sequence[float], values: Array) -> Array:
    """Least-squares line in alpha, evaluated at alpha = 0 (column-wise)."""
    A = np.column_stack([np.ones(len(alphas)), np.asarray(alphas, dtype=float)])
    coef, *_ = np.linalg.lstsq(A, np.asarray(values, dtype=float), rcond=None)
    return coef[0]


def _intercept(alphas: Sequence[float], values: Array) -> Array:
    """Interpolating polynomial in alpha through all points, evaluated at 0.

    Column-wise Lagrange extrapolation (Richardson-style): with m points the
    alpha -> 0 bias drops from O(alpha) to O(alpha^m).
    """
    a = np.asarray(alphas, dtype=float)
    w = np.array([np.prod([-a[j] / (a[i] - a[j]) for j in range(len(a)) if j != i])
                  for i in range(len(a))])
    return np.tensordot(w, np.asarray(values, dtype=float), axes=1)


def vanishing_discount(
    model: SdeModel,
    driver: Driver,
    grid: Grid1D,
    alpha_schedule: Sequence[float] = DEFAULT_SCHEDULE,
    tol: float = 1e-11,
    window: tuple[float, float] = (-3.0, 3.0),
    n_extrapolate: int | None = None,
    scheme: str = "hybrid",
    extrapolation: str = "polynomial",
) -> ErgodicSolution:
    """Solve the discounted equation along a decreasing alpha schedule.

    lambda and v are the alpha -> 0 values of the interpolating polynomials
    through the last ``n_extrapolate`` (default 4) values of alpha v^alpha(0)
    and of the normalised v^alpha - v^alpha(0). ``extrapolation="linear"``
    instead fits least-squares lines through the last 3 points by default;
    its O(alpha) bias shows up in large-time profiles. Raises NonConvergent
    when the normalised iterates stop getting closer over the last three
    steps.
    """
    if extrapolation not in ("polynomial", "linear"):
        raise ValueError(f"unknown extrapolation {extrapolation!r}")
    fit = _intercept if extrapolation == "polynomial" else _linear_intercept
    if n_extrapolate is None:
        n_extrapolate = 4 if extrapolation == "polynomial" else 3
    sched = tuple(float(a) for a in alpha_schedule)
    if len(sched) < 4:
        raise ValueError("alpha schedule needs at least 4 entries")
    if any(not 0 < a <= 1 for a in sched) or any(b >= a for a, b in zip(sched, sched[1:])):
        raise ValueError("alpha schedule must be strictly decreasing in (0, 1]")
    i0 = grid.zero_index
    win = grid.window(*window)
    sols: list[StationarySolution] = []
    bars: list[Array] = []
    lam_trace: list[float] = []
    gaps: list[float] = []
    v0 = None
    for k, a in enumerate(sched):
        if sols:
            prev = sols[-1]
            # v^alpha ~ lambda/alpha + v: rescale the constant part of the last solve
            v0 = prev.alpha * prev.v_alpha[i0] / a + (prev.v_alpha - prev.v_alpha[i0])
        sol = solve_discounted(model, driver, a, grid, tol=tol, v0=v0, scheme=scheme)
        sols.append(sol)
        lam_trace.append(a * sol.v_alpha[i0])
        bars.append(sol.v_alpha - sol.v_alpha[i0])
        if k:
            gaps.append(float(np.max(np.abs(bars[-1] - bars[-2])[win])))
        logger.debug("alpha=%g alpha*v(0)=%.12g iterations=%d", a, lam_trace[-1], sol.iterations)

    floor = 1e-12
    tail = gaps[-3:]
    if not all(b <= a or b < floor for a, b in zip(tail, tail[1:])):
        raise NonConvergent(f"v trace gaps stopped decreasing: {tail}")

    m = max(1 if fit is _intercept else 2, min(n_extrapolate, len(sched)))
    lam = float(fit(sched[-m:], np.array(lam_trace[-m:])))
    v = fit(sched[-m:], np.array(bars[-m:]))
    v = v - v[i0]
    lam_err, v_err = 0.0, 0.0
    if m > (1 if fit is _intercept else 2):
        lam_err = abs(lam - float(fit(sched[-m + 1:], np.array(lam_trace[-m + 1:]))))
        v_low = fit(sched[-m + 1:], np.array(bars[-m + 1:]))
        v_err = float(np.max(np.abs(v - (v_low - v_low[i0]))[win]))
    zeta = extract_z(v, model, grid)
    res, _ = ergodic_residual(model, driver, v, lam, grid)
    return ErgodicSolution(
        lam=lam, v=v, zeta=zeta, grid=grid, alpha_schedule=sched,
        lambda_trace=tuple(float(x) for x in lam_trace), v_trace_gaps=tuple(gaps),
        residual=res, v_last_alpha=bars[-1], discounted=tuple(sols),
        lam_error=lam_err, v_error=v_err,
    )


def lambda_from_slope(u: FiniteHorizonSolution, window: tuple[float, float], x: float = 0.0) -> float:
    """Least-squares slope of the horizon map T -> u_T(0, x) over ``window``."""
    t1, t2 = map(float, window)
    if t1 < 0 or t2 > u.T + 1e-9 or t2 - t1 < 1.0:
        raise WindowOutOfRange(f"window {window} invalid for horizon {u.T}")
    horizons = u.T - u.times  # horizon of each layer
    sel = (horizons >= t1 - 1e-9) & (horizons <= t2 + 1e-9)
    values = np.array([np.interp(x, u.grid.nodes, layer) for layer in u.u[sel]])
    slope, _ = np.polyfit(horizons[sel], values, 1)
    return float(slope)


def invariant_average(
    model: SdeModel,
    driver: Driver,
    x0: float = 0.0,
    T_long: float = 60.0,
    dt: float = 0.01,
    n_paths: int = 2000,
    seed: int = 0,
    burn_in: float = 0.2,
    stride: int = 5,
) -> tuple[float, float]:
    """Long-run Monte Carlo average of psi(X_t, 0); valid for z-independent drivers."""
    if not driver.z_independent:
        raise ValueError("the invariant-measure route needs a driver independent of z")
    times, (states,), _ = euler_maruyama(model, [np.full(model.dim, x0)], T_long, dt, n_paths, seed,
                                         record_stride=stride)
    keep = times >= burn_in * T_long
    xs = states[:, keep, :]
    n, m, d = xs.shape
    vals = driver.psi(xs.reshape(-1, d), np.zeros((n * m, d))).reshape(n, m)
    return mean_ci(vals.mean(axis=1))


@dataclass(frozen=True)
class CrosscheckReport:
    lambdas: dict
    lambda_gaps: dict
    v_gaps: dict
    lambda_tol: float
    v_tol: float

    @property
    def passed(self) -> bool:
        return (all(g <= self.lambda_tol for g in self.lambda_gaps.values())
                and all(g <= self.v_tol for g in self.v_gaps.values()))

    def as_dict(self) -> dict:
        return {
            "lambdas": self.lambdas,
            "lambda_gaps": {"|".join(k): v for k, v in self.lambda_gaps.items()},
            "v_gaps": {"|".join(k): v for k, v in self.v_gaps.items()},
            "lambda_tol": self.lambda_tol,
            "v_tol": self.v_tol,
            "passed": self.passed,
        }


def uniqueness_crosscheck(
    model: SdeModel,
    driver: Driver,
    grid: Grid1D,
    routes: Iterable[str] = ("discount", "discount_alt", "slope"),
    schedule_a: Sequence[float] = DEFAULT_SCHEDULE,
    schedule_b: Sequence[float] = tuple(0.7 * 2.0 ** -k for k in range(7)),
    slope_horizon: float = 10.0,
    slope_window: tuple[float, float] = (4.0, 10.0),
    mc: dict | None = None,
    lambda_tol: float = 0.02,
    v_tol: float = 0.02,
    window: tuple[float, float] = (-3.0, 3.0),
) -> CrosscheckReport:
    """Estimate lambda by several routes and tabulate pairwise disagreements."""
    routes = tuple(dict.fromkeys(routes))
    unknown = set(routes) - set(ROUTES)
    if unknown:
        raise ValueError(f"unknown routes {sorted(unknown)}")
    if len(routes) < 2:
        raise ValueError("need at least two routes")
    from .model import catalog

    lambdas: dict[str, float] = {}
    vs: dict[str, Array] = {}
    for r in routes:
        if r in ("discount", "discount_alt"):
            sol = vanishing_discount(model, driver, grid, schedule_a if r == "discount" else schedule_b,
                                     window=window)
            lambdas[r], vs[r] = sol.lam, sol.v
        elif r == "slope":
            u = solve_finite_horizon(model, driver, catalog("zero"), slope_horizon, grid)
            lambdas[r] = lambda_from_slope(u, slope_window)
        else:
            lambdas[r], _ = invariant_average(model, driver, **(mc or {}))
    lam_gaps = {(a, b): abs(lambdas[a] - lambdas[b]) for a, b in itertools.combinations(lambdas, 2)}
    win = grid.window(*window)
    v_gaps = {(a, b): float(np.max(np.abs(vs[a] - vs[b])[win]))
              for a, b in itertools.combinations(vs, 2)}
    return CrosscheckReport(lambdas, lam_gaps, v_gaps, lambda_tol, v_tol)


def write_ergodic_csv(sol: ErgodicSolution, path) -> None:
    from .io import write_csv

    write_csv(path, {"x": sol.grid.nodes, "v": sol.v, "zeta": sol.zeta})
