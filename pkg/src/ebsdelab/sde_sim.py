"""Euler-Maruyama simulation of the forward SDE and simple path statistics.

Random numbers come from counter-based Philox streams keyed by
``(seed, block)`` where paths are grouped in fixed blocks of
``BLOCK_SIZE``. Path ``i`` therefore sees the same Brownian increments
whatever the total number of paths or the horizon, and a run is
bit-reproducible from its seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import BlowUp, TimeNotOnGrid
from .model import SdeModel

Array = np.ndarray

BLOCK_SIZE = 1024
CHUNK_STEPS = 64
DEFAULT_GUARD = 1e6
Z95 = 1.959963984540054

__all__ = [
    "BrownianStream",
    "DriftShift",
    "PathEnsemble",
    "MomentEstimate",
    "CouplingTrace",
    "simulate",
    "moment",
    "coupled_simulate",
    "hitting_fraction",
    "time_grid",
    "write_ensemble_csv",
]


class BrownianStream:
    """Standard normal increments, one Philox stream per block of paths."""

    def __init__(self, seed: int, n_paths: int, dim: int, block_size: int = BLOCK_SIZE):
        if n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        self.n_paths, self.dim, self.block_size = n_paths, dim, block_size
        n_blocks = -(-n_paths // block_size)
        key0 = int(seed) % 2**64
        self._gens = [np.random.Generator(np.random.Philox(key=[key0, b])) for b in range(n_blocks)]

    def draw(self, n_steps: int) -> Array:
        """Next ``n_steps`` standard normals, shape (n_steps, n_paths, dim)."""
        parts = [g.standard_normal((n_steps, self.block_size, self.dim)) for g in self._gens]
        return np.concatenate(parts, axis=1)[:, : self.n_paths, :]


@dataclass(frozen=True)
class DriftShift:
    """Bounded Girsanov-type shift gamma(t, x); the drift becomes Xi + sigma gamma."""

    name: str
    fn: Callable[[float, Array], Array]
    bound: float

    @classmethod
    def constant(cls, value: Sequence[float] | float, dim: int = 1) -> "DriftShift":
        v = np.broadcast_to(np.asarray(value, dtype=float), (dim,)).copy()

        def fn(t, x):
            return np.broadcast_to(v, x.shape)

        return cls(f"const{tuple(v.tolist())}", fn, float(np.linalg.norm(v)))


@dataclass(frozen=True)
class PathEnsemble:
    times: Array
    states: Array  # (n_paths, n_times, dim)
    seed: int
    model_name: str
    drift_shift_name: str = "none"
    dt: float = 0.0
    increments: Array | None = None  # (n_paths, n_steps, dim) Brownian increments dW

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    def index_of(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise TimeNotOnGrid(f"t={t} is not on the ensemble time grid")
        return k


@dataclass(frozen=True)
class MomentEstimate:
    p: float
    t: float
    value: float
    half_width_95: float
    n_paths: int


@dataclass(frozen=True)
class CouplingTrace:
    times: Array
    mean_distance: Array
    half_width_95: Array
    distances: Array | None = None  # (n_paths, n_times) if requested

    def __iter__(self):
        return iter(zip(self.times.tolist(), self.mean_distance.tolist()))


def time_grid(T: float, dt: float) -> tuple[int, float]:
    """Number of steps and the effective step so that n * dt == T."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if T < dt * (1 - 1e-12):
        raise ValueError("T must be >= dt")
    n = int(math.ceil(T / dt - 1e-9))
    return n, T / n


def _apply(sig: Array, v: Array) -> Array:
    """Row-wise matrix-vector product sigma(x) v."""
    if sig.shape[1] == 1:
        return sig[:, :, 0] * v
    return np.einsum("nij,nj->ni", sig, v)


def _start(x0, n_paths: int, dim: int) -> Array:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (dim,):
        raise ValueError(f"start point must have shape ({dim},)")
    return np.broadcast_to(x0, (n_paths, dim)).copy()


def _record_steps(n_steps: int, dt: float, record_times, record_stride: int) -> Array:
    if record_times is None:
        steps = np.arange(0, n_steps + 1, record_stride)
        if steps[-1] != n_steps:
            steps = np.append(steps, n_steps)
        return steps
    steps = []
    for t in record_times:
        k = t / dt
        if abs(k - round(k)) > 1e-6 or round(k) < 0 or round(k) > n_steps:
            raise TimeNotOnGrid(f"record time {t} is not a multiple of dt={dt}")
        steps.append(int(round(k)))
    return np.array(sorted(set(steps)), dtype=int)


def euler_maruyama(
    model: SdeModel,
    starts: Sequence[Array],
    T: float,
    dt: float,
    n_paths: int,
    seed: int,
    drift_shift: DriftShift | None = None,
    guard_radius: float = DEFAULT_GUARD,
    record_times: Sequence[float] | None = None,
    record_stride: int = 1,
    keep_increments: bool = False,
) -> tuple[Array, list[Array], Array | None]:
    """Evolve several start points under the same Brownian increments.

    Returns the recorded times, one ``(n_paths, n_times, dim)`` array per
    start point, and optionally the increments dW.
    """
    n_steps, dt = time_grid(T, dt)
    d = model.dim
    xs = [_start(x, n_paths, d) for x in starts]
    rec = _record_steps(n_steps, dt, record_times, record_stride)
    out = [np.empty((n_paths, len(rec), d)) for _ in xs]
    incs = np.empty((n_paths, n_steps, d)) if keep_increments else None
    slot = {int(k): j for j, k in enumerate(rec)}
    if 0 in slot:
        for o, x in zip(out, xs):
            o[:, slot[0], :] = x
    stream = BrownianStream(seed, n_paths, d)
    sqdt = math.sqrt(dt)
    step = 0
    while step < n_steps:
        chunk = min(CHUNK_STEPS, n_steps - step)
        noise = stream.draw(chunk) * sqdt
        if incs is not None:
            incs[:, step: step + chunk, :] = np.swapaxes(noise, 0, 1)
        for j in range(chunk):
            t = (step + j) * dt
            dw = noise[j]
            for i, x in enumerate(xs):
                sig = model.diffusion(x)
                b = model.drift(x)
                if drift_shift is not None:
                    b = b + _apply(sig, drift_shift.fn(t, x))
                xs[i] = x + b * dt + _apply(sig, dw)
            k = step + j + 1
            if k in slot or k == n_steps or k % CHUNK_STEPS == 0:
                for i, x in enumerate(xs):
                    if not np.all(np.abs(x) < guard_radius):
                        raise BlowUp(f"state left the guard radius {guard_radius:g} near t={k * dt:.6g}")
                    if k in slot:
                        out[i][:, slot[k], :] = x
        step += chunk
    return rec * dt, out, incs


def simulate(
    model: SdeModel,
    x0,
    T: float,
    dt: float,
    n_paths: int,
    seed: int,
    drift_shift: DriftShift | None = None,
    guard_radius: float = DEFAULT_GUARD,
    record_times: Sequence[float] | None = None,
    record_stride: int = 1,
    keep_increments: bool = False,
) -> PathEnsemble:
    """Euler-Maruyama paths of dX = [Xi(X) + sigma(X) gamma(t, X)] dt + sigma(X) dW."""
    if drift_shift is not None and not math.isfinite(drift_shift.bound):
        raise ValueError("drift_shift must declare a finite bound")
    n_steps, dt_eff = time_grid(T, dt)
    times, (states,), incs = euler_maruyama(
        model, [x0], T, dt, n_paths, seed, drift_shift, guard_radius,
        record_times, record_stride, keep_increments,
    )
    return PathEnsemble(
        times=times, states=states, seed=int(seed), model_name=model.name,
        drift_shift_name="none" if drift_shift is None else drift_shift.name,
        dt=dt_eff, increments=incs,
    )


def mean_ci(samples: Array) -> tuple[float, float]:
    """Sample mean and normal-approximation 95% half-width."""
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    m = float(np.mean(samples))
    if n < 2:
        return m, 0.0
    return m, float(Z95 * np.std(samples, ddof=1) / math.sqrt(n))


def moment(ensemble: PathEnsemble, p: float, t: float) -> MomentEstimate:
    if p <= 0:
        raise ValueError("p must be > 0")
    k = ensemble.index_of(t)
    r = np.linalg.norm(ensemble.states[:, k, :], axis=1) ** p
    m, hw = mean_ci(r)
    return MomentEstimate(p=float(p), t=float(ensemble.times[k]), value=m, half_width_95=hw,
                          n_paths=ensemble.n_paths)


def coupled_simulate(
    model: SdeModel,
    x,
    y,
    T: float,
    dt: float,
    n_paths: int,
    seed: int,
    record_times: Sequence[float] | None = None,
    record_stride: int = 1,
    return_paths: bool = False,
    guard_radius: float = DEFAULT_GUARD,
) -> CouplingTrace:
    """Synchronous coupling: both copies share every Brownian increment."""
    times, (px, py), _ = euler_maruyama(
        model, [x, y], T, dt, n_paths, seed, None, guard_radius, record_times, record_stride,
    )
    dist = np.linalg.norm(px - py, axis=2)
    mean = dist.mean(axis=0)
    hw = np.zeros_like(mean) if n_paths < 2 else Z95 * dist.std(axis=0, ddof=1) / math.sqrt(n_paths)
    return CouplingTrace(times, mean, hw, dist if return_paths else None)


def hitting_fraction(
    model: SdeModel, x, z, r: float, t: float, n_paths: int, seed: int, dt: float = 1e-2
) -> float:
    """Fraction of paths with |X_t - z| < r (positivity smoke test)."""
    if r <= 0 or t <= 0:
        raise ValueError("r and t must be > 0")
    n_steps, dt = time_grid(t, min(dt, t))
    ens = simulate(model, x, t, dt, n_paths, seed, record_times=[n_steps * dt])
    zz = np.atleast_1d(np.asarray(z, dtype=float))
    return float(np.mean(np.linalg.norm(ens.states[:, -1, :] - zz, axis=1) < r))


def write_ensemble_csv(ensemble: PathEnsemble, path) -> None:
    """CSV with header ``path,t,x1[,x2...]``, one row per (path, time)."""
    from .io import write_csv

    n, m, d = ensemble.states.shape
    cols = {
        "path": np.repeat(np.arange(n), m),
        "t": np.tile(ensemble.times, n),
    }
    for j in range(d):
        cols[f"x{j + 1}"] = ensemble.states[:, :, j].reshape(-1)
    write_csv(path, cols)
