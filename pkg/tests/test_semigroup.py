import math

import numpy as np
import pytest

from ebsdelab import semigroup
from ebsdelab.errors import GateViolated, InsufficientSignal
from ebsdelab.model import catalog
from ebsdelab.sde_sim import DriftShift


def test_apply_constant_function_is_exact(ou):
    est, hw = semigroup.apply(ou, lambda x: np.ones(x.shape[0]), 1.0, [0.3], 100, 0.1, seed=0)
    assert est == 1.0 and hw == 0.0


def test_apply_identity_ou(ou):
    est, hw = semigroup.apply(ou, lambda x: x[:, 0], 1.0, [2.0], 50_000, 1e-3, seed=1)
    assert abs(est - 2 * math.exp(-1)) <= hw + 1e-3


def test_lyapunov_constants_weakdiss(weakdiss):
    R, a, b = semigroup.lyapunov_constants(weakdiss, 2)
    assert R == pytest.approx(math.sqrt(1 / 0.495) + 1, rel=1e-15)
    assert b == 2.0
    assert a == pytest.approx(0.99 - 2 / R**2, rel=1e-15)


def test_lyapunov_constants_ou(ou):
    R, a, b = semigroup.lyapunov_constants(ou, 2)
    assert R == pytest.approx(math.sqrt(0.5) + 1, rel=1e-15)
    assert (b, a) == (1.0, pytest.approx(2 - 1 / R**2))


@pytest.mark.parametrize("name,mu", [("ou", 2), ("weakdiss", 2), ("weakdiss", 4), ("ou", 3)])
def test_lyapunov_inequality_holds(name, mu):
    m = catalog(name, {"eta": 1, "sigma": 1} if name == "ou" else {})
    rep = semigroup.lyapunov_check(m, mu, np.linspace(-40, 40, 8001))
    assert rep.worst_residual_outside <= 0
    assert rep.holds


def test_generator_at_origin(ou, weakdiss):
    z = np.zeros((1, 1))
    assert semigroup.generator_of_power(ou, 2, z)[0] == pytest.approx(1.0)  # r1 for mu = 2
    assert semigroup.generator_of_power(weakdiss, 3, z)[0] == 0.0


def test_generator_matches_finite_differences(weakdiss):
    x = np.linspace(-4, 4, 41)
    x = x[np.abs(x) > 0.3]
    mu, h = 3.0, 1e-4
    V = lambda y: np.abs(y) ** mu
    d1 = (V(x + h) - V(x - h)) / (2 * h)
    d2 = (V(x + h) - 2 * V(x) + V(x - h)) / h**2
    pts = x[:, None]
    fd = weakdiss.drift(pts)[:, 0] * d1 + 0.5 * weakdiss.diffusion(pts)[:, 0, 0] ** 2 * d2
    np.testing.assert_allclose(semigroup.generator_of_power(weakdiss, mu, pts), fd, rtol=1e-5, atol=1e-6)


def test_lyapunov_gate_violation(weakdiss):
    with pytest.raises(GateViolated):
        semigroup.lyapunov_constants(weakdiss, 101)


def test_contraction_identity_ou(ou):
    fit = semigroup.contraction_fit(ou, lambda x: x[:, 0], [1.0], [-1.0], [0.5, 1, 1.5, 2, 2.5, 3],
                                    n_paths=200, dt=0.01, seed=0)
    assert fit.nu_hat == pytest.approx(1.0, abs=0.05)
    assert fit.r2_fit > 0.999
    assert all(fit.used)


def test_contraction_equal_points_has_no_signal(ou):
    with pytest.raises(InsufficientSignal):
        semigroup.contraction_fit(ou, lambda x: np.cos(x[:, 0]), [1.0], [1.0], [1, 2, 3, 4],
                                  n_paths=100, dt=0.05, seed=0)


def test_contraction_needs_four_times(ou):
    with pytest.raises(ValueError):
        semigroup.contraction_fit(ou, lambda x: x[:, 0], [1.0], [0.0], [1, 2, 3], n_paths=10)


def test_gaps_bounded_by_fitted_envelope(weakdiss):
    fit = semigroup.contraction_fit(weakdiss, lambda x: np.cos(x[:, 0]), [2.0], [-2.0],
                                    [1, 2, 3, 4, 5], n_paths=20_000, dt=0.02, seed=3)
    env = fit.c_hat * (1 + 4 + 4) * np.exp(-fit.nu_hat * np.array(fit.t_grid))
    used = np.array(fit.used)
    # the least-squares line is not an upper envelope: allow the fit scatter
    ratio = np.abs(np.array(fit.gaps))[used] / env[used]
    assert np.all(ratio <= 3.0)


def test_shift_keeps_contraction_positive(weakdiss):
    shift = DriftShift.constant(0.1)
    fit = semigroup.contraction_fit(weakdiss, lambda x: np.cos(x[:, 0]), [2.0], [-2.0],
                                    [1, 2, 3, 4, 5], n_paths=20_000, dt=0.02, seed=3, drift_shift=shift)
    assert fit.nu_hat > 0


def test_contraction_csv(tmp_path, ou):
    fit = semigroup.contraction_fit(ou, lambda x: x[:, 0], [1.0], [-1.0], [1, 2, 3, 4], n_paths=10, dt=0.1)
    p = tmp_path / "c.csv"
    semigroup.write_contraction_csv(fit, p)
    assert p.read_text().splitlines()[0] == "t,gap,ci"
