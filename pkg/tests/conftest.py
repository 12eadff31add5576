from __future__ import annotations

import numpy as np
import pytest

from ebsdelab import ebsde, pde_solver
from ebsdelab.model import catalog


@pytest.fixture(scope="session")
def ou():
    return catalog("ou", {"eta": 1.0, "sigma": 1.0})


@pytest.fixture(scope="session")
def weakdiss():
    return catalog("weakdiss")


@pytest.fixture(scope="session")
def ou_grid(ou):
    return pde_solver.Grid1D.auto(ou, 0.02)


@pytest.fixture(scope="session")
def weakdiss_grid(weakdiss):
    return pde_solver.Grid1D.auto(weakdiss, 0.02)


@pytest.fixture(scope="session")
def ou_cos_ergodic(ou, ou_grid):
    return ebsde.vanishing_discount(ou, catalog("cos"), ou_grid)


@pytest.fixture(scope="session")
def manufactured(ou):
    return catalog("manufactured", {"lambda_star": 0.3, "kappa": 0.5}, model=ou)


@pytest.fixture(scope="session")
def manufactured_ergodic(ou, ou_grid, manufactured):
    return ebsde.vanishing_discount(ou, manufactured, ou_grid)


def gaussian_expectation(f, mean: float, var: float, n: int = 80) -> float:
    """E f(N(mean, var)) by Gauss-Hermite quadrature (independent oracle)."""
    t, w = np.polynomial.hermite_e.hermegauss(n)
    return float(np.sum(w * f(mean + np.sqrt(var) * t)) / np.sqrt(2 * np.pi))
