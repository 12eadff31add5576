"""Problem catalog: forward SDE models, BSDE drivers, terminal data and
control problems, plus sampled checks of the standing structural assumptions.

Array conventions used throughout the package:

* states ``x`` have shape ``(n, d)``;
* ``drift(x)`` returns ``(n, d)`` and ``diffusion(x)`` returns ``(n, d, d)``;
* gradients ``z`` are row vectors stored as ``(n, d)``;
* ``psi(x, z)`` and ``g(x)`` return ``(n,)``.

Every callable is vectorised over the leading axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import qmc

from .errors import MissingParam, NonFiniteEvaluation, UnknownCatalogEntry

Array = np.ndarray

__all__ = [
    "SdeModel",
    "Driver",
    "TerminalCondition",
    "SmoothFunction",
    "ControlProblem",
    "AssumptionSample",
    "GateReport",
    "validate",
    "catalog",
    "manufactured_problem",
    "section5_margin",
    "prop33_margin",
    "CATALOG_ENTRIES",
]


def _as_states(x, dim: int) -> Array:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(-1, 1) if dim == 1 else x.reshape(1, -1)
    return x


@dataclass(frozen=True)
class SdeModel:
    """dX = drift(X) dt + diffusion(X) dW with its structural constants.

    The constants bound the coefficients as follows:
    ``<drift(x), x> <= eta1 - eta2 |x|^2``, ``|drift(x)| <= xi1 + xi2 |x|``,
    ``|diffusion(x)|_F^2 <= r1 + r2 |x|^2`` and
    ``|diffusion(x)^{-1}|_op <= sigma_inv_bound``.
    """

    name: str
    dim: int
    drift: Callable[[Array], Array]
    diffusion: Callable[[Array], Array]
    eta1: float
    eta2: float
    r1: float
    r2: float
    xi1: float
    xi2: float
    sigma_inv_bound: float
    params: Mapping[str, float] = field(default_factory=dict)

    def drift_1d(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return self.drift(x.reshape(-1, 1))[:, 0].reshape(x.shape)

    def sigma_1d(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return self.diffusion(x.reshape(-1, 1))[:, 0, 0].reshape(x.shape)


@dataclass(frozen=True)
class Driver:
    """BSDE generator psi(x, z), Lipschitz in the twisted gradient z sigma(x)^{-1}."""

    name: str
    psi: Callable[[Array, Array], Array]
    Kx: float
    Kz: float
    Mpsi: float
    model_name: str | None = None
    notes: tuple[str, ...] = ()

    @property
    def z_independent(self) -> bool:
        return self.Kz == 0.0

    def psi_1d(self, x: Array, z: Array) -> Array:
        x = np.asarray(x, dtype=float)
        z = np.broadcast_to(np.asarray(z, dtype=float), x.shape)
        return self.psi(x.reshape(-1, 1), z.reshape(-1, 1)).reshape(x.shape)


@dataclass(frozen=True)
class TerminalCondition:
    name: str
    g: Callable[[Array], Array]
    growth_const: float
    growth_exp: float = 2.0

    def g_1d(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return self.g(x.reshape(-1, 1)).reshape(x.shape)


@dataclass(frozen=True)
class SmoothFunction:
    """A C^2 function with analytic gradient and Hessian (vectorised)."""

    name: str
    f: Callable[[Array], Array]
    grad: Callable[[Array], Array]
    hess: Callable[[Array], Array]
    grad_bound: float = math.inf
    hess_bound: float = math.inf


@dataclass(frozen=True)
class ControlProblem:
    """Finite action set with bounded control vectors and Lipschitz running cost.

    ``running_cost(x, k)`` evaluates L(x, actions[k]) on states ``(n, d)``.
    Ties in the Hamiltonian argmin resolve to the earliest action in
    ``actions``.
    """

    name: str
    actions: tuple[str, ...]
    controls: Mapping[str, Array]
    running_cost: Callable[[Array, int], Array]
    terminal: TerminalCondition
    cost_lipschitz: float
    cost_at_origin: float

    @property
    def R_bound(self) -> float:
        return max(float(np.linalg.norm(self.controls[a])) for a in self.actions)

    def control_matrix(self) -> Array:
        """Stack of R(a) with shape (n_actions, d)."""
        return np.stack([np.atleast_1d(np.asarray(self.controls[a], dtype=float))
                         for a in self.actions])

    def driver(self, model: SdeModel) -> Driver:
        from .control import hamiltonian_values

        def psi(x, z):
            return hamiltonian_values(self, model, x, z)[0]

        return Driver(
            name=f"hamiltonian[{self.name}]",
            psi=psi,
            Kx=self.cost_lipschitz,
            Kz=self.R_bound,
            Mpsi=self.cost_lipschitz + abs(self.cost_at_origin),
            model_name=model.name,
        )


# ---------------------------------------------------------------------------
# sampled assumption checks


@dataclass(frozen=True)
class AssumptionSample:
    """Worst sampled value of ``lhs - rhs`` for one inequality (<= 0 means it holds)."""

    name: str
    worst_residual: float
    at: tuple[float, ...]

    @property
    def holds(self) -> bool:
        return self.worst_residual <= 1e-10


@dataclass(frozen=True)
class GateReport:
    model_name: str
    driver_name: str | None
    mu: float
    p: float
    gamma_bound: float
    gate_section5: bool
    margin_section5: float
    gate_prop33: bool
    margin_prop33: float
    assumption_samples: tuple[AssumptionSample, ...]
    sample_box: tuple[float, float]
    n_samples: int
    notes: tuple[str, ...] = ()

    @property
    def assumptions_hold(self) -> bool:
        return all(s.holds for s in self.assumption_samples)

    @property
    def passed(self) -> bool:
        return self.gate_section5 and self.gate_prop33 and self.assumptions_hold

    @property
    def worst_violation(self) -> AssumptionSample | None:
        bad = [s for s in self.assumption_samples if not s.holds]
        return max(bad, key=lambda s: s.worst_residual) if bad else None

    def as_dict(self) -> dict:
        return {
            "model": self.model_name,
            "driver": self.driver_name,
            "mu": self.mu,
            "p": self.p,
            "gamma_bound": self.gamma_bound,
            "gate_section5": self.gate_section5,
            "margin_section5": self.margin_section5,
            "gate_prop33": self.gate_prop33,
            "margin_prop33": self.margin_prop33,
            "assumptions_hold": self.assumptions_hold,
            "assumption_samples": [
                {"name": s.name, "worst_residual": s.worst_residual, "at": list(s.at)}
                for s in self.assumption_samples
            ],
            "sample_box": list(self.sample_box),
            "n_samples": self.n_samples,
            "notes": list(self.notes),
            "passed": self.passed,
        }


def section5_margin(model: SdeModel, Kz: float, mu: float) -> float:
    """eta2 - sqrt(r2) Kz |sigma^-1| - (mu - 1) r2 / 2."""
    return model.eta2 - math.sqrt(model.r2) * Kz * model.sigma_inv_bound - (mu - 1.0) * model.r2 / 2.0


def prop33_margin(model: SdeModel, gamma_bound: float, p: float) -> float:
    """eta2 - sqrt(r2) |gamma| - ((p v 2) - 1) r2 / 2."""
    return model.eta2 - math.sqrt(model.r2) * gamma_bound - (max(p, 2.0) - 1.0) * model.r2 / 2.0


def _check_finite(name: str, values: Array) -> Array:
    if not np.all(np.isfinite(values)):
        raise NonFiniteEvaluation(f"{name} returned non-finite values on the sample box")
    return values


def _worst(name: str, residual: Array, pts: Array) -> AssumptionSample:
    k = int(np.argmax(residual))
    return AssumptionSample(name, float(residual[k]), tuple(float(v) for v in pts[k]))


def validate(
    model: SdeModel,
    driver: Driver | None = None,
    mu: float = 2.0,
    gamma_bound: float = 0.0,
    p: float = 2.0,
    sample_box: tuple[float, float] = (-10.0, 10.0),
    n_samples: int = 10_000,
    seed: int = 0,
) -> GateReport:
    """Sample the structural inequalities on a box and evaluate both gate margins.

    A failed gate or a violated inequality never raises; callers read the
    report. Only non-finite coefficient values raise.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    lo, hi = map(float, sample_box)
    if not lo < hi:
        raise ValueError("sample_box must be a nonempty interval")
    if mu < 2:
        raise ValueError("mu must be >= 2")

    d = model.dim
    sampler = qmc.Halton(d=d, scramble=True, seed=seed)
    pts = qmc.scale(sampler.random(n_samples), [lo] * d, [hi] * d)
    norm = np.linalg.norm(pts, axis=1)

    b = _check_finite("drift", model.drift(pts))
    s = _check_finite("diffusion", model.diffusion(pts))
    samples = [
        _worst("dissipativity", np.einsum("ij,ij->i", b, pts) - model.eta1 + model.eta2 * norm**2, pts),
        _worst("drift_growth", np.linalg.norm(b, axis=1) - model.xi1 - model.xi2 * norm, pts),
        _worst("diffusion_growth",
               np.einsum("ijk,ijk->i", s, s) - model.r1 - model.r2 * norm**2, pts),
    ]
    try:
        s_inv = np.linalg.inv(s)
    except np.linalg.LinAlgError as exc:
        raise NonFiniteEvaluation("diffusion matrix is singular on the sample box") from exc
    samples.append(_worst("sigma_inverse_bound",
                          np.linalg.norm(s_inv, ord=2, axis=(1, 2)) - model.sigma_inv_bound, pts))

    notes: list[str] = []
    Kz = 0.0
    if driver is not None:
        Kz = driver.Kz
        notes.extend(driver.notes)
        psi0 = _check_finite("driver", driver.psi(pts, np.zeros_like(pts)))
        if math.isfinite(driver.Mpsi):
            samples.append(_worst("driver_linear_growth",
                                  np.abs(psi0) - driver.Mpsi * (1.0 + norm), pts))
        rng = np.random.default_rng(seed)
        perm = rng.permutation(n_samples)
        z1 = rng.uniform(-5.0, 5.0, size=pts.shape)
        z2 = rng.uniform(-5.0, 5.0, size=pts.shape)
        x2 = pts[perm]
        f1 = _check_finite("driver", driver.psi(pts, z1))
        f2 = _check_finite("driver", driver.psi(x2, z2))
        tw1 = np.einsum("ij,ijk->ik", z1, s_inv)
        tw2 = np.einsum("ij,ijk->ik", z2, s_inv[perm])
        if math.isfinite(driver.Kx):
            res = (np.abs(f1 - f2) - driver.Kx * np.linalg.norm(pts - x2, axis=1)
                   - driver.Kz * np.linalg.norm(tw1 - tw2, axis=1))
            samples.append(_worst("driver_lipschitz", res, pts))
        # same-x pairs isolate the z-Lipschitz constant
        f3 = driver.psi(pts, z2)
        res_z = np.abs(f1 - f3) - driver.Kz * np.linalg.norm(tw1 - np.einsum("ij,ijk->ik", z2, s_inv), axis=1)
        samples.append(_worst("driver_z_lipschitz", res_z, pts))

    m5 = section5_margin(model, Kz, mu)
    m33 = prop33_margin(model, gamma_bound, p)
    return GateReport(
        model_name=model.name,
        driver_name=None if driver is None else driver.name,
        mu=float(mu), p=float(p), gamma_bound=float(gamma_bound),
        gate_section5=m5 > 0, margin_section5=m5,
        gate_prop33=m33 > 0, margin_prop33=m33,
        assumption_samples=tuple(samples),
        sample_box=(lo, hi), n_samples=int(n_samples),
        notes=tuple(notes),
    )


# ---------------------------------------------------------------------------
# catalog


def _require(params: Mapping[str, float], name: str, keys: Sequence[str]) -> None:
    missing = [k for k in keys if k not in params]
    if missing:
        raise MissingParam(f"catalog entry {name!r} needs parameter(s): {', '.join(missing)}")


def _ou(params: Mapping[str, float]) -> SdeModel:
    _require(params, "ou", ("eta", "sigma"))
    eta, sig = float(params["eta"]), float(params["sigma"])
    d = int(params.get("dim", 1))
    if eta <= 0 or sig <= 0:
        raise ValueError("ou needs eta > 0 and sigma > 0")

    def drift(x):
        return -eta * x

    def diffusion(x):
        return np.broadcast_to(sig * np.eye(d), (x.shape[0], d, d)).copy()

    return SdeModel("ou", d, drift, diffusion, eta1=0.0, eta2=eta, r1=d * sig**2, r2=0.0,
                    xi1=0.0, xi2=eta, sigma_inv_bound=1.0 / sig,
                    params={"eta": eta, "sigma": sig, "dim": d})


def _weakdiss(params: Mapping[str, float]) -> SdeModel:
    # drift -a x + b cos(x) (componentwise), diffusion sqrt(1 + c|x|^2) I
    a = float(params.get("a", 1.0))
    b = float(params.get("b", 1.0))
    c = float(params.get("c", 0.01))
    d = int(params.get("dim", 1))
    if a <= 0 or c < 0:
        raise ValueError("weakdiss needs a > 0 and c >= 0")

    def drift(x):
        return -a * x + b * np.cos(x)

    def diffusion(x):
        s = np.sqrt(1.0 + c * np.sum(x * x, axis=1))
        return s[:, None, None] * np.eye(d)

    # Young: b sum x_i cos x_i <= b sqrt(d)|x| <= d b^2/(2a) + (a/2)|x|^2
    return SdeModel("weakdiss", d, drift, diffusion,
                    eta1=d * b * b / (2.0 * a), eta2=a / 2.0, r1=float(d), r2=d * c,
                    xi1=abs(b) * math.sqrt(d), xi2=a, sigma_inv_bound=1.0,
                    params={"a": a, "b": b, "c": c, "dim": d})


def _sigma_inverse(model: SdeModel, x: Array) -> Array:
    s = model.diffusion(x)
    if model.dim == 1:
        return 1.0 / s
    return np.linalg.inv(s)


def _twist(model: SdeModel, x: Array, z: Array) -> Array:
    """z sigma(x)^{-1} for row vectors z."""
    return np.einsum("ij,ijk->ik", z, _sigma_inverse(model, x))


def _cos_driver(params: Mapping[str, float]) -> Driver:
    def psi(x, z):
        return np.cos(x[:, 0])

    return Driver("cos", psi, Kx=1.0, Kz=0.0, Mpsi=1.0)


def _cos_tanh_driver(params: Mapping[str, float], model: SdeModel | None) -> Driver:
    _require(params, "cos-tanh", ("k",))
    if model is None:
        raise MissingParam("catalog entry 'cos-tanh' needs the paired SdeModel")
    k = float(params["k"])

    def psi(x, z):
        return np.cos(x[:, 0]) + k * np.sum(np.tanh(_twist(model, x, z)), axis=1)

    # tanh is 1-Lipschitz and bounded by 1, so |psi(x,0)| <= 1
    return Driver("cos-tanh", psi, Kx=1.0, Kz=k * math.sqrt(model.dim), Mpsi=1.0,
                  model_name=model.name)


def _const_driver(params: Mapping[str, float]) -> Driver:
    _require(params, "const", ("c",))
    c = float(params["c"])

    def psi(x, z):
        return np.full(x.shape[0], c)

    return Driver("const", psi, Kx=0.0, Kz=0.0, Mpsi=abs(c))


def one_minus_cos() -> SmoothFunction:
    """v(x) = sum_i (1 - cos x_i); vanishes at the origin."""

    def f(x):
        return np.sum(1.0 - np.cos(x), axis=1)

    def grad(x):
        return np.sin(x)

    def hess(x):
        n, d = x.shape
        h = np.zeros((n, d, d))
        h[:, np.arange(d), np.arange(d)] = np.cos(x)
        return h

    return SmoothFunction("one-minus-cos", f, grad, hess, grad_bound=1.0, hess_bound=1.0)


def zero_function() -> SmoothFunction:
    def f(x):
        return np.zeros(x.shape[0])

    def grad(x):
        return np.zeros_like(x)

    def hess(x):
        n, d = x.shape
        return np.zeros((n, d, d))

    return SmoothFunction("zero", f, grad, hess, grad_bound=0.0, hess_bound=0.0)


V_STAR = {"one-minus-cos": one_minus_cos, "zero": zero_function}


def manufactured_problem(
    model: SdeModel, v_star: SmoothFunction, lambda_star: float, kappa: float = 0.0
) -> tuple[Driver, dict]:
    """Driver for which (v_star, lambda_star) solves the ergodic equation exactly.

    psi(x, z) = lambda* - [drift . grad v* + tr(sigma sigma^T hess v*)/2]
                + kappa * sum tanh(z sigma^{-1} - grad v*)
    """
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    lam = float(lambda_star)
    kappa = float(kappa)

    def generator_of_v(x):
        b = model.drift(x)
        s = model.diffusion(x)
        a = np.einsum("nij,nkj->nik", s, s)
        return np.einsum("ni,ni->n", b, v_star.grad(x)) + 0.5 * np.einsum("nij,nij->n", a, v_star.hess(x))

    def psi(x, z):
        out = lam - generator_of_v(x)
        if kappa:
            out = out + kappa * np.sum(np.tanh(_twist(model, x, z) - v_star.grad(x)), axis=1)
        return out

    notes = []
    if model.r2 > 0 and v_star.hess_bound > 0:
        mpsi = math.inf
        notes.append("manufactured driver: |psi(x,0)| grows quadratically (r2 > 0); "
                     "linear-growth bound violated")
    else:
        # |psi(x,0)| <= |lam| + (xi1 + xi2|x|) G + (r1/2) H + kappa d
        mpsi = max(abs(lam) + model.xi1 * v_star.grad_bound + 0.5 * model.r1 * v_star.hess_bound
                   + kappa * model.dim, model.xi2 * v_star.grad_bound)
    if v_star.hess_bound > 0 and model.xi2 > 0:
        notes.append("manufactured driver is only locally Lipschitz in x")
    driver = Driver(
        name="manufactured",
        psi=psi,
        Kx=math.inf if v_star.hess_bound > 0 and model.xi2 > 0 else 0.0,
        Kz=kappa * math.sqrt(model.dim),
        Mpsi=mpsi,
        model_name=model.name,
        notes=tuple(notes),
    )
    return driver, {"v_star": v_star, "lambda_star": lam}


def _zero_terminal(params) -> TerminalCondition:
    return TerminalCondition("zero", lambda x: np.zeros(x.shape[0]), 0.0, 2.0)


def _quadratic_terminal(params) -> TerminalCondition:
    clip = params.get("clip")
    scale = float(params.get("scale", 1.0))

    def g(x):
        if clip is not None:
            x = np.clip(x, -float(clip), float(clip))
        return scale * np.sum(x * x, axis=1)

    return TerminalCondition("quadratic", g, abs(scale), 2.0)


def _linear_terminal(params) -> TerminalCondition:
    scale = float(params.get("scale", 1.0))
    return TerminalCondition("linear", lambda x: scale * x[:, 0], abs(scale), 2.0)


def _one_minus_cos_terminal(params) -> TerminalCondition:
    f = one_minus_cos().f
    return TerminalCondition("one-minus-cos", f, 2.0, 2.0)


def _bang_control(params: Mapping[str, float]) -> ControlProblem:
    # 0 listed first so |z sigma^-1| = 1/2 ties resolve to the idle action
    cost = float(params.get("cost", 0.5))
    labels = ("0", "+1", "-1")
    magnitude = {"0": 0.0, "+1": 1.0, "-1": 1.0}
    controls = {"0": np.array([0.0]), "+1": np.array([1.0]), "-1": np.array([-1.0])}
    mags = np.array([magnitude[a] for a in labels])

    def running_cost(x, k):
        return np.cos(x[:, 0]) + cost * mags[k]

    return ControlProblem(
        name="bang-control",
        actions=labels,
        controls=controls,
        running_cost=running_cost,
        terminal=_zero_terminal({}),
        cost_lipschitz=1.0,
        cost_at_origin=1.0,
    )


def _constant_cost_control(params: Mapping[str, float]) -> ControlProblem:
    _require(params, "const-cost", ("c",))
    c = float(params["c"])
    return ControlProblem(
        name="const-cost",
        actions=("0",),
        controls={"0": np.array([0.0])},
        running_cost=lambda x, k: np.full(x.shape[0], c),
        terminal=_zero_terminal({}),
        cost_lipschitz=0.0,
        cost_at_origin=c,
    )


CATALOG_ENTRIES = {
    "model": ("ou", "weakdiss"),
    "driver": ("cos", "cos-tanh", "const", "manufactured"),
    "terminal": ("zero", "quadratic", "linear", "one-minus-cos"),
    "control": ("bang-control", "const-cost"),
}


def catalog(name: str, params: Mapping[str, float] | None = None, model: SdeModel | None = None):
    """Build a catalog object by name.

    Models: ``ou`` (eta, sigma), ``weakdiss`` (a, b, c; defaults 1, 1, 0.01).
    Drivers: ``cos``, ``cos-tanh`` (k), ``const`` (c), ``manufactured``
    (lambda_star, kappa, optional v_star). Drivers that twist z by sigma^{-1}
    need the paired ``model``. Terminal data: ``zero``, ``quadratic``
    (optional clip, scale), ``linear``, ``one-minus-cos``. Control problems:
    ``bang-control``, ``const-cost`` (c).
    """
    params = dict(params or {})
    if name == "ou":
        return _ou(params)
    if name == "weakdiss":
        return _weakdiss(params)
    if name == "cos":
        return _cos_driver(params)
    if name == "cos-tanh":
        return _cos_tanh_driver(params, model)
    if name == "const":
        return _const_driver(params)
    if name == "manufactured":
        _require(params, "manufactured", ("lambda_star", "kappa"))
        if model is None:
            raise MissingParam("catalog entry 'manufactured' needs the paired SdeModel")
        vname = str(params.get("v_star", "one-minus-cos"))
        if vname not in V_STAR:
            raise UnknownCatalogEntry(f"unknown v_star {vname!r}")
        driver, _ = manufactured_problem(model, V_STAR[vname](), float(params["lambda_star"]),
                                         float(params["kappa"]))
        return driver
    if name == "zero":
        return _zero_terminal(params)
    if name == "quadratic":
        return _quadratic_terminal(params)
    if name == "linear":
        return _linear_terminal(params)
    if name == "one-minus-cos":
        return _one_minus_cos_terminal(params)
    if name == "bang-control":
        return _bang_control(params)
    if name == "const-cost":
        return _constant_cost_control(params)
    raise UnknownCatalogEntry(f"unknown catalog entry {name!r}")
