"""Numerical toolkit for ergodic BSDEs with weakly dissipative, multiplicative-noise forward SDEs.

Modules: ``model`` (catalog and assumption gates), ``sde_sim`` (Euler-Maruyama),
``semigroup`` (Lyapunov and contraction checks), ``pde_solver`` (finite
differences), ``bsde_mc`` (regression Monte Carlo), ``ebsde`` (ergodic triple),
``large_time``, ``control`` and the ``cli`` front end.
"""

__version__ = "0.1.0"
