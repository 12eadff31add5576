"""Batch front end: ``ebsdelab <subcommand> <config.ini> [--threads N]``.

Everything numeric lives in the INI configuration file; the command line
only selects the experiment. Each run writes its CSV files, a
``summary.json`` with the scientific checks, and a ``manifest.json`` with
the config hash, seed, library versions and a timestamp.

Exit status: 0 when every check passes, 2 when the run completed but a
scientific check failed, 1 on any error.

Annotated example configuration::

    [run]
    seed = 0                  ; mandatory, drives every random stream
    output_dir = out/ou_cos   ; relative to the working directory

    [model]
    name = ou                 ; catalog name, remaining keys are parameters
    eta = 1
    sigma = 1

    [driver]                  ; or a [control] section naming a control problem
    name = cos

    [terminal]
    name = zero

    [grid]
    x_min = auto              ; auto box from the model, or explicit bounds
    x_max = auto
    h = 0.02                  ; node spacing (auto) -- or n_nodes with bounds

    [horizon]
    T = 10
    dt = auto                 ; CFL-derived default
    T_list = 2, 3, 4, 5, 6, 7, 8, 9, 10
    x_list = -3, -2, -1, 0, 1, 2, 3
    x0 = 0

    [mc]
    n_paths = 4000
    dt = 0.01

    [ergodic]
    alpha_schedule = 1, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625
    residual_tol = 0.01
    lambda_expected = 0.7788007830714049   ; optional oracle check
    lambda_tol = 0.01
"""

from __future__ import annotations

import argparse
import configparser
import datetime as _dt
import hashlib
import math
import platform
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from . import bsde_mc, control, ebsde, large_time, model as model_mod, pde_solver, semigroup, sde_sim
from .errors import ConfigError, EbsdeLabError, FitDegenerate
from .io import write_csv, write_json

SUBCOMMANDS = ("validate", "simulate", "contraction", "solve-finite", "solve-discounted",
               "ergodic", "large-time", "control", "verify-all")

_MISSING = object()


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    path: Path
    sha256: str
    sections: dict
    lines: dict = field(default_factory=dict)

    # -- raw access -------------------------------------------------------
    def has(self, section: str, key: str | None = None) -> bool:
        if section not in self.sections:
            return False
        return key is None or key in self.sections[section]

    def _fail(self, section, key, message):
        raise ConfigError(message, section, key, self.lines.get((section, key), self.lines.get((section, None))))

    def get(self, section: str, key: str, conv: Callable = float, default=_MISSING):
        if not self.has(section, key):
            if default is _MISSING:
                self._fail(section, key, "missing required key")
            return default
        raw = self.sections[section][key]
        try:
            return conv(raw)
        except (TypeError, ValueError) as exc:
            self._fail(section, key, f"cannot parse {raw!r}: {exc}")

    def floats(self, section: str, key: str, default=_MISSING) -> list[float] | None:
        return self.get(section, key, _float_list, default)

    # -- typed views ---------------------------------------------------------
    @property
    def seed(self) -> int:
        return self.get("run", "seed", int)

    @property
    def output_dir(self) -> Path:
        return Path(self.get("run", "output_dir", str, "out"))

    def catalog_params(self, section: str) -> dict:
        return {k: _scalar(v) for k, v in self.sections[section].items() if k != "name"}

    def model(self):
        return self._catalog("model")

    def driver(self, mdl):
        if self.has("driver"):
            return self._catalog("driver", mdl)
        if self.has("control"):
            return self.control_problem().driver(mdl)
        self._fail("driver", None, "need a [driver] or a [control] section")

    def control_problem(self):
        return self._catalog("control")

    def terminal(self):
        if not self.has("terminal"):
            if self.has("control"):
                return self.control_problem().terminal
            return model_mod.catalog("zero")
        return self._catalog("terminal")

    def _catalog(self, section, mdl=None):
        name = self.get(section, "name", str)
        try:
            return model_mod.catalog(name, self.catalog_params(section), model=mdl)
        except KeyError as exc:
            self._fail(section, "name", str(exc.args[0]) if exc.args else str(exc))

    def grid(self, mdl) -> pde_solver.Grid1D:
        lo = self.get("grid", "x_min", str, "auto")
        hi = self.get("grid", "x_max", str, "auto")
        h = self.get("grid", "h", float, 0.02)
        if lo == "auto" or hi == "auto":
            scale = self.get("grid", "scale", float, 1.0)
            return pde_solver.Grid1D.auto(mdl, h, self.get("horizon", "x0", float, 0.0), scale)
        lo = self.get("grid", "x_min")
        hi = self.get("grid", "x_max")
        n = self.get("grid", "n_nodes", int, None)
        if n is None:
            n = int(round((hi - lo) / h)) + 1
        try:
            return pde_solver.Grid1D(lo, hi, n)
        except ValueError as exc:
            self._fail("grid", None, str(exc))

    def horizon_dt(self):
        raw = self.get("horizon", "dt", str, "auto")
        return None if raw == "auto" else self.get("horizon", "dt")

    def schedule(self):
        return tuple(self.floats("ergodic", "alpha_schedule", list(ebsde.DEFAULT_SCHEDULE)))


def _scalar(raw: str):
    try:
        return float(raw)
    except ValueError:
        return raw


def _float_list(raw: str) -> list[float]:
    items = [s for s in re.split(r"[,\s]+", raw.strip()) if s]
    if not items:
        raise ValueError("empty list")
    return [float(s) for s in items]


_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:;#\s][^=:]*?)\s*[=:]")


def _line_map(text: str) -> dict:
    """(section, key) -> 1-based line number, for diagnostics."""
    out, sec = {}, None
    for i, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            sec = m.group(1).strip()
            out[(sec, None)] = i
            continue
        m = _KEY_RE.match(line)
        if m and sec is not None and not line[:1].isspace():
            out[(sec, m.group(1).strip().lower())] = i
    return out


KNOWN_SECTIONS = {"run", "model", "driver", "control", "terminal", "grid", "horizon", "mc", "ergodic",
                  "validate", "contraction", "discounted", "simulate", "control_eval", "large_time",
                  "hygiene"}


def load_config(path) -> ExperimentConfig:
    """Parse and statically check an INI experiment file."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    text = data.decode("utf-8")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        cp.read_string(text, source=str(path))
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r}", exc.section, exc.option, exc.lineno) from exc
    except configparser.DuplicateSectionError as exc:
        raise ConfigError("duplicate section", exc.section, None, exc.lineno) from exc
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside any section", None, None, exc.lineno) from exc
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", None, None, lineno) from exc
    sections = {s: dict(cp[s]) for s in cp.sections()}
    cfg = ExperimentConfig(path, hashlib.sha256(data).hexdigest(), sections, _line_map(text))
    for s in sections:
        if s not in KNOWN_SECTIONS:
            raise ConfigError(f"unknown section (expected one of {sorted(KNOWN_SECTIONS)})", s, None,
                              cfg.lines.get((s, None)))
    cfg.seed  # noqa: B018 -- seed is mandatory
    if cfg.has("driver") and cfg.has("control"):
        cfg._fail("control", None, "give either [driver] or [control], not both")
    for section, kind in (("model", "model"), ("driver", "driver"), ("terminal", "terminal"),
                          ("control", "control")):
        if cfg.has(section):
            name = cfg.get(section, "name", str)
            if name not in model_mod.CATALOG_ENTRIES[kind]:
                cfg._fail(section, "name", f"unknown {kind} {name!r}; known: "
                          f"{', '.join(model_mod.CATALOG_ENTRIES[kind])}")
    if not cfg.has("model"):
        cfg._fail("model", None, "missing [model] section")
    return cfg


# ---------------------------------------------------------------------------
# experiments: each returns (summary, checks) and writes its CSVs into ``out``


def _x0(cfg) -> float:
    return cfg.get("horizon", "x0", float, 0.0)


def run_validate(cfg, out):
    mdl = cfg.model()
    drv = cfg.driver(mdl) if (cfg.has("driver") or cfg.has("control")) else None
    rep = model_mod.validate(
        mdl, drv,
        mu=cfg.get("validate", "mu", float, 2.0),
        gamma_bound=cfg.get("validate", "gamma_bound", float, 0.0),
        p=cfg.get("validate", "p", float, 2.0),
        sample_box=(cfg.get("validate", "box_lo", float, -10.0), cfg.get("validate", "box_hi", float, 10.0)),
        n_samples=cfg.get("validate", "n_samples", int, 10_000),
        seed=cfg.seed,
    )
    return {"validate": rep.as_dict()}, {"gates_and_assumptions": rep.passed}


def run_simulate(cfg, out):
    mdl = cfg.model()
    T = cfg.get("simulate", "T", float, cfg.get("horizon", "T", float, 1.0))
    dt = cfg.get("mc", "dt", float, 0.01)
    n = cfg.get("mc", "n_paths", int, 1000)
    stride = cfg.get("simulate", "record_stride", int, 10)
    p = cfg.get("simulate", "p", float, 2.0)
    ens = sde_sim.simulate(mdl, np.full(mdl.dim, _x0(cfg)), T, dt, n, cfg.seed, record_stride=stride)
    n_csv = min(n, cfg.get("simulate", "csv_paths", int, 20))
    sde_sim.write_ensemble_csv(
        sde_sim.PathEnsemble(ens.times, ens.states[:n_csv], ens.seed, ens.model_name, dt=ens.dt),
        out / "paths.csv")
    mom = [sde_sim.moment(ens, p, t) for t in ens.times]
    write_csv(out / "moments.csv", {"t": ens.times, "moment": [m.value for m in mom],
                                    "ci": [m.half_width_95 for m in mom]})
    last = mom[-1]
    mean, hw = sde_sim.mean_ci(ens.states[:, -1, 0])
    return ({"simulate": {"T": ens.times[-1], "dt": ens.dt, "n_paths": n, "mean_T": mean, "mean_T_ci": hw,
                          "p": p, "moment_T": last.value, "moment_T_ci": last.half_width_95}},
            {"finite_paths": bool(np.all(np.isfinite(ens.states)))})


_PHI = {"cos": lambda x: np.cos(x[:, 0]), "sin": lambda x: np.sin(x[:, 0]),
        "tanh": lambda x: np.tanh(x[:, 0])}


def run_contraction(cfg, out):
    mdl = cfg.model()
    phi_name = cfg.get("contraction", "phi", str, "cos")
    if phi_name not in _PHI:
        cfg._fail("contraction", "phi", f"unknown test function; known: {sorted(_PHI)}")
    fit = semigroup.contraction_fit(
        mdl, _PHI[phi_name],
        np.full(mdl.dim, cfg.get("contraction", "x", float, 2.0)),
        np.full(mdl.dim, cfg.get("contraction", "y", float, -2.0)),
        cfg.floats("contraction", "t_list", [1, 2, 3, 4, 5, 6, 7, 8]),
        n_paths=cfg.get("mc", "n_paths", int, 100_000),
        dt=cfg.get("mc", "dt", float, 0.01),
        seed=cfg.seed,
        mu=cfg.get("contraction", "mu", float, 2.0),
    )
    semigroup.write_contraction_csv(fit, out / "contraction.csv")
    r2_min = cfg.get("contraction", "r2_min", float, 0.9)
    return ({"contraction": {"c_hat": fit.c_hat, "nu_hat": fit.nu_hat, "r2_fit": fit.r2_fit,
                             "points_used": sum(fit.used)}},
            {"nu_positive": fit.nu_hat > 0, "fit_r2": fit.r2_fit >= r2_min})


def _finite(cfg, mdl, drv, term, grid, T=None):
    T = cfg.get("horizon", "T", float, 10.0) if T is None else T
    return pde_solver.solve_finite_horizon(mdl, drv, term, T, grid, dt=cfg.horizon_dt())


def run_solve_finite(cfg, out):
    mdl = cfg.model()
    drv, term, grid = cfg.driver(mdl), cfg.terminal(), cfg.grid(mdl)
    u = _finite(cfg, mdl, drv, term, grid)
    stride = cfg.get("horizon", "csv_t_stride", int, max(1, (len(u.times) - 1) // 100))
    pde_solver.write_finite_horizon_csv(u, out / "u.csv", t_stride=stride)
    x0 = _x0(cfg)
    return ({"solve_finite": {"T": u.T, "dt": u.dt, "h": grid.h, "x_min": grid.x_min, "x_max": grid.x_max,
                              "u0_at_x0": float(u.value(u.T, x0)), "x0": x0}},
            {"finite": bool(np.all(np.isfinite(u.u)))})


def run_solve_discounted(cfg, out):
    mdl = cfg.model()
    drv, grid = cfg.driver(mdl), cfg.grid(mdl)
    alpha = cfg.get("discounted", "alpha", float, 0.125)
    sol = pde_solver.solve_discounted(mdl, drv, alpha, grid, tol=cfg.get("discounted", "tol", float, 1e-9))
    pde_solver.write_discounted_csv(sol, out / "v_alpha.csv")
    summary = {"alpha": alpha, "v_alpha_at_0": float(sol.v_alpha[grid.zero_index]),
               "alpha_v_alpha_at_0": alpha * float(sol.v_alpha[grid.zero_index]),
               "iterations": sol.iterations, "pseudo_time": sol.pseudo_time,
               "growth_constant": pde_solver.growth_constant(alpha * sol.v_alpha, grid, 1.0)}
    checks = {"finite": bool(np.all(np.isfinite(sol.v_alpha)))}
    if cfg.has("discounted", "mc_paths"):
        y0, diag = bsde_mc.solve_discounted_mc(
            mdl, drv, alpha, _x0(cfg), cfg.get("discounted", "mc_tol", float, 0.005),
            cfg.get("mc", "dt", float, 0.01), cfg.get("discounted", "mc_paths", int),
            seed=cfg.seed, c_pilot=cfg.get("discounted", "c_pilot", float, 1.0))
        pde_val = float(np.interp(_x0(cfg), grid.nodes, sol.v_alpha))
        summary.update({"mc_y0": y0, "mc_ci": diag["ci"], "mc_T_alpha": diag["T_alpha"], "pde_at_x0": pde_val})
        checks["mc_agrees"] = abs(y0 - pde_val) <= max(2 * diag["ci"], cfg.get("discounted", "mc_agree", float, 0.02))
    return {"solve_discounted": summary}, checks


def _ergodic(cfg, mdl, drv, grid):
    return ebsde.vanishing_discount(mdl, drv, grid, cfg.schedule(),
                                    tol=cfg.get("ergodic", "tol", float, 1e-11))


def run_ergodic(cfg, out):
    mdl = cfg.model()
    drv, grid = cfg.driver(mdl), cfg.grid(mdl)
    sol = _ergodic(cfg, mdl, drv, grid)
    ebsde.write_ergodic_csv(sol, out / "ergodic.csv")
    checks = {"residual": sol.residual <= cfg.get("ergodic", "residual_tol", float, 1e-2)}
    if cfg.has("ergodic", "lambda_expected"):
        checks["lambda_oracle"] = abs(sol.lam - cfg.get("ergodic", "lambda_expected")) <= cfg.get(
            "ergodic", "lambda_tol", float, 0.01)
    return {"ergodic": sol.summary()}, checks


def run_large_time(cfg, out, ergodic_solution=None):
    mdl = cfg.model()
    drv, term, grid = cfg.driver(mdl), cfg.terminal(), cfg.grid(mdl)
    erg = ergodic_solution or _ergodic(cfg, mdl, drv, grid)
    T_list = cfg.floats("horizon", "T_list", [2, 3, 4, 5, 6, 7, 8, 9, 10])
    x_list = cfg.floats("horizon", "x_list", [-3, -2, -1, 0, 1, 2, 3])
    mu = cfg.get("large_time", "mu", float, 2.0)
    u = _finite(cfg, mdl, drv, term, grid, T=max(max(T_list), max(cfg.floats("large_time", "first_T_list",
                                                                             [2, 4, 8, 16]))))
    prof = large_time.profile_from_solution(u, erg, T_list, x_list,
                                            cfg.get("large_time", "solver_tol", float, None), mu)
    large_time.write_profile_csv(prof, out / "large_time.csv")
    rate = large_time.rate_vs_x_check(prof, mu)
    first = large_time.first_behavior_check(u, erg.lam, x_list,
                                            cfg.floats("large_time", "first_T_list", [2, 4, 8, 16]), mu=mu)
    write_csv(out / "first_behavior.csv", {
        "T": np.repeat(first.T_list, len(first.x_list)),
        "x": np.tile(first.x_list, len(first.T_list)),
        "product": first.products.reshape(-1)})
    converged = not math.isfinite(prof.nu_hat)
    checks = {
        "decay_rate": converged or prof.nu_hat > 0,
        "fit_r2": converged or prof.fit_r2 >= cfg.get("large_time", "r2_min", float, 0.9),
        "envelope": rate.holds,
        "first_behavior": first.passed,
    }
    summary = {"large_time": {**prof.summary(), "lambda": erg.lam, "floor": prof.floor,
                              "converged_beyond_measurement": converged, "L_first_pass": prof.L_first_pass}}
    return summary, checks


def run_control(cfg, out, ergodic_solution=None):
    if not cfg.has("control"):
        cfg._fail("control", None, "the control experiment needs a [control] section")
    mdl, cp = cfg.model(), cfg.control_problem()
    drv, grid = cp.driver(mdl), cfg.grid(mdl)
    erg = ergodic_solution or _ergodic(cfg, mdl, drv, grid)
    x0 = _x0(cfg)
    T = cfg.get("horizon", "T", float, 6.0)
    dt = cfg.get("mc", "dt", float, 0.01)
    n_fin = cfg.get("mc", "n_paths", int, 4000)
    T_long = cfg.get("control_eval", "T_long", float, 40.0)
    n_erg = cfg.get("control_eval", "n_paths_ergodic", int, 2000)
    n_random = cfg.get("control_eval", "n_random", int, 20)
    n_bins = cfg.get("control_eval", "n_bins", int, 8)
    tol_erg = cfg.get("control_eval", "ergodic_tol", float, 0.02)
    tol_fin = cfg.get("control_eval", "finite_tol", float, 0.03)

    u = _finite(cfg, mdl, drv, cp.terminal, grid, T=T)
    u0 = float(u.value(T, x0))
    opt = control.optimal_feedback(cp, mdl, erg)
    control.write_policy_csv(opt, out / "policy.csv")
    J_opt, J_opt_ci = control.evaluate_cost_ergodic(cp, mdl, opt, x0, T_long, dt, n_erg, cfg.seed)
    fin_opt = control.finite_horizon_feedback(cp, mdl, u)
    JT_opt, JT_opt_ci = control.evaluate_cost_finite(cp, mdl, fin_opt, x0, T, u.dt, n_fin, cfg.seed)
    rows = {"policy": [], "J": [], "J_ci": [], "JT": [], "JT_ci": []}
    lower_erg, lower_fin = True, True
    for k in range(n_random):
        pol = control.random_policy(cp, grid, cfg.seed + 1 + k, n_bins)
        J, Jci = control.evaluate_cost_ergodic(cp, mdl, pol, x0, T_long, dt, n_erg, cfg.seed + 1 + k)
        JT, JTci = control.evaluate_cost_finite(cp, mdl, pol, x0, T, dt, n_fin, cfg.seed + 1 + k)
        lower_erg &= J >= erg.lam - tol_erg
        lower_fin &= JT >= u0 - max(2 * JTci, tol_fin)
        for key, val in zip(rows, (f"random-{k}", J, Jci, JT, JTci)):
            rows[key].append(val)
    rows["policy"].append("optimal")
    for key, val in zip(("J", "J_ci", "JT", "JT_ci"), (J_opt, J_opt_ci, JT_opt, JT_opt_ci)):
        rows[key].append(val)
    write_csv(out / "control_costs.csv", rows)
    summary = {"control": {"lambda": erg.lam, "u_pde_at_x0": u0, "T": T, "J_optimal": J_opt,
                           "J_optimal_ci": J_opt_ci, "JT_optimal": JT_opt, "JT_optimal_ci": JT_opt_ci,
                           "n_random": n_random, "min_random_J": min(rows["J"][:-1], default=math.nan),
                           "min_random_JT": min(rows["JT"][:-1], default=math.nan)}}
    checks = {
        "ergodic_lower_bound": bool(lower_erg),
        "finite_lower_bound": bool(lower_fin),
        "ergodic_optimality": abs(J_opt - erg.lam) <= tol_erg,
        "finite_optimality": abs(JT_opt - u0) <= max(2 * JT_opt_ci, tol_fin),
    }
    return summary, checks


def run_verify_all(cfg, out):
    summary, checks = {}, {}

    def merge(name, result):
        s, c = result
        summary.update(s)
        checks.update({f"{name}.{k}": v for k, v in c.items()})

    merge("validate", run_validate(cfg, out))
    mdl = cfg.model()
    drv, grid = cfg.driver(mdl), cfg.grid(mdl)
    erg = _ergodic(cfg, mdl, drv, grid)
    ebsde.write_ergodic_csv(erg, out / "ergodic.csv")
    erg_checks = {"residual": erg.residual <= cfg.get("ergodic", "residual_tol", float, 1e-2)}
    if cfg.has("ergodic", "lambda_expected"):
        erg_checks["lambda_oracle"] = abs(erg.lam - cfg.get("ergodic", "lambda_expected")) <= cfg.get(
            "ergodic", "lambda_tol", float, 0.01)
    merge("ergodic", ({"ergodic": erg.summary()}, erg_checks))
    merge("solve_finite", run_solve_finite(cfg, out))
    try:
        merge("large_time", run_large_time(cfg, out, erg))
    except FitDegenerate as exc:
        merge("large_time", ({"large_time": {"note": str(exc)}}, {}))
    if cfg.has("contraction"):
        merge("contraction", run_contraction(cfg, out))
    if cfg.has("control"):
        merge("control", run_control(cfg, out, erg))
    return summary, checks


RUNNERS = {
    "validate": run_validate,
    "simulate": run_simulate,
    "contraction": run_contraction,
    "solve-finite": run_solve_finite,
    "solve-discounted": run_solve_discounted,
    "ergodic": run_ergodic,
    "large-time": run_large_time,
    "control": run_control,
    "verify-all": run_verify_all,
}


def _versions() -> dict:
    import scipy

    return {"ebsdelab": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def run(subcommand: str, config_path, threads: int | None = None) -> int:
    """Run one experiment; returns the process exit status."""
    if subcommand not in RUNNERS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    cfg = load_config(config_path)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    if threads is not None:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=threads):
            summary, checks = RUNNERS[subcommand](cfg, out)
    else:
        summary, checks = RUNNERS[subcommand](cfg, out)
    checks = {k: bool(v) for k, v in checks.items()}
    passed = all(checks.values())
    write_json(out / "summary.json", {"subcommand": subcommand, "seed": cfg.seed, **summary,
                                      "checks": checks, "passed": passed})
    files = sorted(p for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
    write_json(out / "manifest.json", {
        "subcommand": subcommand,
        "config": str(cfg.path),
        "config_sha256": cfg.sha256,
        "seed": cfg.seed,
        "threads": threads,
        "versions": _versions(),
        "files": {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in files},
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    })
    for name, ok in checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return 0 if passed else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ebsdelab", description=__doc__.split("\n\n")[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("config", help="INI experiment file")
    parser.add_argument("--threads", type=int, default=None, help="cap on BLAS/OpenMP worker threads")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 1
    try:
        return run(args.subcommand, args.config, args.threads)
    except (EbsdeLabError, KeyError, ValueError, OSError, FloatingPointError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
