import math

import numpy as np
import pytest

from ebsdelab import ebsde as E
from ebsdelab import pde_solver as P
from ebsdelab.errors import NonConvergent, WindowOutOfRange
from ebsdelab.model import catalog

LAM = math.exp(-0.25)


def test_const_exact(ou, ou_grid):
    sol = E.vanishing_discount(ou, catalog("const", {"c": 0.3}), ou_grid)
    assert abs(sol.lam - 0.3) <= 1e-10
    assert np.max(np.abs(sol.v)) <= 1e-10
    assert sol.residual <= 1e-8


def test_ou_cos(ou_cos_ergodic):
    sol = ou_cos_ergodic
    assert abs(sol.lam - LAM) <= 0.01
    assert sol.residual <= 0.02
    assert sol.v[sol.grid.zero_index] == 0.0
    assert sol.lam_error <= 1e-3


def test_ou_cos_lambda_trace_approaches(ou_cos_ergodic):
    gaps = np.abs(np.array(ou_cos_ergodic.lambda_trace) - LAM)
    assert gaps[-1] < gaps[0]
    assert all(b <= a for a, b in zip(ou_cos_ergodic.v_trace_gaps[-3:], ou_cos_ergodic.v_trace_gaps[-2:]))


def test_manufactured(manufactured_ergodic, ou_grid):
    sol = manufactured_ergodic
    w = ou_grid.window(-3, 3)
    assert abs(sol.lam - 0.3) <= 1e-3
    assert np.max(np.abs(sol.v - (1 - np.cos(ou_grid.nodes)))[w]) <= 1e-2


def test_residual_close_to_exact_pair_residual(ou, ou_grid, manufactured, manufactured_ergodic):
    exact, _ = P.ergodic_residual(ou, manufactured, 1 - np.cos(ou_grid.nodes), 0.3, ou_grid)
    assert manufactured_ergodic.residual <= 2 * exact + 1e-6


def test_weakdiss_manufactured(weakdiss, weakdiss_grid):
    drv = catalog("manufactured", {"lambda_star": 0.3, "kappa": 0.5}, model=weakdiss)
    sol = E.vanishing_discount(weakdiss, drv, weakdiss_grid)
    w = weakdiss_grid.window(-3, 3)
    assert abs(sol.lam - 0.3) <= 1e-3
    assert np.max(np.abs(sol.v - (1 - np.cos(weakdiss_grid.nodes)))[w]) <= 1e-2


def test_linear_extrapolation_option(ou, ou_grid, ou_cos_ergodic):
    lin = E.vanishing_discount(ou, catalog("cos"), ou_grid, extrapolation="linear")
    assert abs(lin.lam - LAM) <= 0.01
    assert abs(ou_cos_ergodic.lam - LAM) <= abs(lin.lam - LAM)
    with pytest.raises(ValueError):
        E.vanishing_discount(ou, catalog("cos"), ou_grid, extrapolation="cubic-spline")


def test_schedule_validation(ou, ou_grid):
    with pytest.raises(ValueError):
        E.vanishing_discount(ou, catalog("cos"), ou_grid, (1.0, 0.5, 0.25))
    with pytest.raises(ValueError):
        E.vanishing_discount(ou, catalog("cos"), ou_grid, (1.0, 0.5, 0.5, 0.25))


def test_non_convergent(ou, ou_grid, monkeypatch):
    real = E.solve_discounted
    calls = {"n": 0}

    def noisy(*args, **kwargs):
        sol = real(*args, **kwargs)
        calls["n"] += 1
        bump = 0.1 * calls["n"] ** 2 * np.sin(ou_grid.nodes)
        return P.StationarySolution(**{**sol.__dict__, "v_alpha": sol.v_alpha + bump})

    monkeypatch.setattr(E, "solve_discounted", noisy)
    with pytest.raises(NonConvergent):
        E.vanishing_discount(ou, catalog("cos"), ou_grid)


def test_slope_route(ou, ou_grid):
    u = P.solve_finite_horizon(ou, catalog("cos"), catalog("zero"), 10.0, ou_grid)
    assert abs(E.lambda_from_slope(u, (4.0, 10.0)) - LAM) <= 0.01
    with pytest.raises(WindowOutOfRange):
        E.lambda_from_slope(u, (4.0, 12.0))
    with pytest.raises(WindowOutOfRange):
        E.lambda_from_slope(u, (4.0, 4.5))


def test_invariant_average(ou):
    lam, ci = E.invariant_average(ou, catalog("cos"), T_long=30.0, dt=0.02, n_paths=1000, seed=3)
    assert abs(lam - LAM) <= max(2 * ci, 0.01)
    with pytest.raises(ValueError):
        E.invariant_average(ou, catalog("cos-tanh", {"k": 0.5}, model=ou))


def test_crosscheck_two_schedules(ou, ou_grid):
    rep = E.uniqueness_crosscheck(ou, catalog("cos-tanh", {"k": 0.5}, model=ou), ou_grid,
                                  routes=("discount", "discount_alt", "slope"))
    assert rep.passed
    assert rep.lambda_gaps[("discount", "discount_alt")] <= 0.01
    assert rep.v_gaps[("discount", "discount_alt")] <= 0.02
    assert rep.as_dict()["passed"] is True
    with pytest.raises(ValueError):
        E.uniqueness_crosscheck(ou, catalog("cos"), ou_grid, routes=("discount",))
    with pytest.raises(ValueError):
        E.uniqueness_crosscheck(ou, catalog("cos"), ou_grid, routes=("discount", "oracle"))


def test_intercept_exact_on_polynomials():
    a = [0.5, 0.25, 0.125, 0.0625]
    vals = np.array([3 - 2 * x + x**3 for x in a])
    assert E._intercept(a, vals) == pytest.approx(3.0, abs=1e-12)
    assert E._linear_intercept(a[:2], np.array([1 + x for x in a[:2]])) == pytest.approx(1.0)


def test_ergodic_csv(tmp_path, ou_cos_ergodic):
    E.write_ergodic_csv(ou_cos_ergodic, tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "x,v,zeta" and len(lines) == ou_cos_ergodic.grid.n_nodes + 1
