"""Particle solvers for mean-field SDEs.

Two ensemble schemes share one stepping core:

* :func:`euler_frozen_measure` advances M particles with the measure argument
  frozen at the ensemble snapshot taken at the left endpoint of each outer
  interval, exactly the piecewise-frozen-law construction the approximation
  theory analyzes. The law ensemble is the same population being evolved
  (self-consistent snapshot); pass ``independent_copy=True`` to freeze the
  law of an independently seeded twin population instead (bias studies).
* :func:`interacting_particles` feeds the current empirical measure to the
  coefficients at every inner step, the standard mean-field particle system.

Both advance each outer interval with ``inner_steps`` Euler-Maruyama
substeps. The within-interval dynamics could in principle be solved exactly
in law, but exact solvability is model-specific; the substep count makes the
extra approximation explicit and convergent.

Gaussian increments follow the keying contract in :mod:`mvlab.rng`: the
increment of (seed, particle, global step) is a pure function of that
triple, so results cannot depend on scheduling or parallelism degree, and
the two schemes consume identical noise for identical seeds.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import rng
from .errors import BlowUpError, ConfigError
from .grids import TimeGrid, require_same_grid
from .measures import ParticleEnsemble, Path, PathEnsemble
from .models import CoefficientModel


@dataclass(frozen=True)
class SolverConfig:
    """Run sizes and reproducibility knobs for the particle schemes.

    M is the law-ensemble size of the frozen scheme, N the particle count of
    the interacting scheme. threads is advisory only and must never change
    results. Sizes of 1 are accepted for degenerate diagnostics; meaningful
    law approximation needs at least 2.
    """

    grid: TimeGrid
    M: int = 2
    N: int = 2
    inner_steps: int = 1
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.inner_steps < 1:
            raise ConfigError(f"inner_steps must be >= 1, got {self.inner_steps}")
        if self.M < 1 or self.N < 1:
            raise ConfigError(f"ensemble sizes must be >= 1, got M={self.M}, N={self.N}")


@dataclass(frozen=True, eq=False)
class NoisePath:
    """Brownian increments on a grid: one m-vector per interval, variance dt."""

    grid: TimeGrid
    increments: np.ndarray

    def __post_init__(self):
        inc = np.array(self.increments, dtype=float)
        if inc.ndim == 1:
            inc = inc[:, None]
        if inc.shape[0] != self.grid.n:
            raise ValueError(
                f"need one increment per interval: got {inc.shape[0]} for n={self.grid.n}")
        inc.flags.writeable = False
        object.__setattr__(self, "increments", inc)

    @property
    def m(self) -> int:
        return self.increments.shape[1]

    @classmethod
    def from_seed(cls, grid: TimeGrid, m: int, seed: int, particle: int = 0) -> "NoisePath":
        """Increments reproducible from (seed, particle) alone."""
        z = rng.path_normals(seed, particle, (grid.n, m))
        return cls(grid=grid, increments=z * np.sqrt(grid.dt))

    @classmethod
    def zeros(cls, grid: TimeGrid, m: int) -> "NoisePath":
        return cls(grid=grid, increments=np.zeros((grid.n, m)))


@dataclass(frozen=True, eq=False)
class MeasureFlow:
    """Grid-aligned sequence of ensembles, one per grid point."""

    grid: TimeGrid
    ensembles: tuple

    def __post_init__(self):
        if len(self.ensembles) != len(self.grid):
            raise ValueError(
                f"need one ensemble per grid point: got {len(self.ensembles)} "
                f"for {len(self.grid)} points")
        sizes = {e.size for e in self.ensembles}
        if len(sizes) > 1:
            raise ValueError(f"ensemble size must be constant along the flow, got {sizes}")


def x0_constant(value) -> Callable:
    """Initial sampler: every particle starts at `value`."""
    v = np.atleast_1d(np.asarray(value, dtype=float))

    def sampler(n: int, gen: np.random.Generator) -> np.ndarray:
        return np.tile(v, (n, 1))

    return sampler


def x0_gaussian(mean=0.0, std=1.0, d: int = 1) -> Callable:
    """Initial sampler: i.i.d. Gaussian coordinates.

    Moment compliance (all moments finite) satisfies the initial-condition
    requirement of every scheme here; it is not re-checked at runtime.
    """
    mean = np.broadcast_to(np.asarray(mean, dtype=float), (d,))
    std = np.broadcast_to(np.asarray(std, dtype=float), (d,))

    def sampler(n: int, gen: np.random.Generator) -> np.ndarray:
        return mean + std * gen.standard_normal((n, d))

    return sampler


def _apply_noise(sig: np.ndarray, dW: np.ndarray) -> np.ndarray:
    return np.einsum("bdm,bm->bd", sig, dW)


def _check_finite(X: np.ndarray, t: float) -> None:
    if np.isfinite(X).all():
        return
    bad = np.nonzero(~np.isfinite(X).all(axis=1))[0][0]
    raise BlowUpError(time=t, particle=int(bad))


def _drive(model: CoefficientModel, grid: TimeGrid, n_particles: int,
           inner_steps: int, seed: int, x0_sampler, frozen: bool,
           observer=None, record_paths: bool = True,
           record_flow: bool = False, law_source=None):
    """Shared stepping core of both ensemble schemes."""
    dt = grid.dt / inner_steps
    X = np.asarray(x0_sampler(n_particles, rng.stream(seed, rng.INIT, 0)), dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape != (n_particles, model.d):
        raise ConfigError(
            f"x0 sampler returned shape {X.shape}, expected {(n_particles, model.d)}")
    _check_finite(X, 0.0)

    paths = None
    if record_paths:
        paths = np.empty((n_particles, grid.n + 1, model.d))
        paths[:, 0] = X
    flow = []

    def snapshot(states, t):
        mu = ParticleEnsemble(states=states, time=t)
        model.warm_summary(mu)
        return mu

    step = 0
    for k in range(grid.n):
        t_left = grid.points[k]
        if frozen:
            mu = snapshot(law_source(k) if law_source is not None else X, t_left)
            if record_flow:
                flow.append(mu)
        for j in range(inner_steps):
            t = t_left + j * dt
            if not frozen:
                mu = snapshot(X, t)
            # overflow en route to blow-up becomes a structured error below
            with np.errstate(over="ignore", invalid="ignore"):
                b = model.drift_fn(t, X, mu)
                sig = model.diffusion_fn(t, X, mu)
                dW = rng.step_normals(seed, step, (n_particles, model.m)) * np.sqrt(dt)
                X_next = X + b * dt + _apply_noise(sig, dW)
            _check_finite(X_next, t + dt)
            if observer is not None:
                observer(step, t, X, X_next, sig)
            X = X_next
            step += 1
        if record_paths:
            paths[:, k + 1] = X
    if record_flow:
        flow.append(snapshot(law_source(grid.n) if law_source is not None else X,
                             grid.points[-1]))
    return X, paths, flow


def euler_frozen_measure(model: CoefficientModel, config: SolverConfig,
                         x0_sampler, independent_copy: bool = False):
    """Frozen-measure Euler scheme.

    Returns (MeasureFlow, PathEnsemble): the flow of per-grid-point law
    snapshots actually used as coefficients, and all particle paths.
    Deterministic given config.seed.
    """
    law_source = None
    if independent_copy:
        twin_flow, _ = euler_frozen_measure(
            model,
            SolverConfig(grid=config.grid, M=config.M, N=config.N,
                         inner_steps=config.inner_steps,
                         seed=rng.derive_seed(config.seed, 1)),
            x0_sampler)
        law_source = lambda k: twin_flow.ensembles[k].states
    _, paths, flow = _drive(model, config.grid, config.M, config.inner_steps,
                            config.seed, x0_sampler, frozen=True,
                            record_flow=True, law_source=law_source)
    return (MeasureFlow(grid=config.grid, ensembles=tuple(flow)),
            PathEnsemble(grid=config.grid, states=paths))


def interacting_particles(model: CoefficientModel, config: SolverConfig,
                          x0_sampler) -> PathEnsemble:
    """Mean-field particle system: coefficients see the current empirical law."""
    _, paths, _ = _drive(model, config.grid, config.N, config.inner_steps,
                         config.seed, x0_sampler, frozen=False)
    return PathEnsemble(grid=config.grid, states=paths)


def decoupled_solve(model: CoefficientModel, flow: MeasureFlow, x0,
                    noise: NoisePath) -> Path:
    """Euler-Maruyama for one path against a given measure flow.

    The measure argument on interval [t_k, t_{k+1}) is flow.ensembles[k]
    (left-endpoint reading). Bit-deterministic in (x0, noise, flow): calling
    twice with identical inputs yields identical paths, the numeric face of
    pathwise uniqueness for the decoupled equation.
    """
    require_same_grid(flow.grid, noise.grid, "flow and noise")
    if noise.m != model.m:
        raise ValueError(f"noise has m={noise.m}, model expects m={model.m}")
    grid = flow.grid
    x = np.atleast_1d(np.asarray(x0, dtype=float))[None, :]
    if x.shape[1] != model.d:
        raise ValueError(f"x0 has dimension {x.shape[1]}, model expects {model.d}")
    out = np.empty((grid.n + 1, model.d))
    out[0] = x[0]
    dt = grid.dt
    for k in range(grid.n):
        t = grid.points[k]
        mu = flow.ensembles[k]
        b = model.drift_fn(t, x, mu)
        sig = model.diffusion_fn(t, x, mu)
        x = x + b * dt + _apply_noise(sig, noise.increments[k][None, :])
        _check_finite(x, grid.points[k + 1])
        out[k + 1] = x[0]
    return Path(grid=grid, states=out)


def holder_increment_stats(ensemble: PathEnsemble, q: float, lags) -> np.ndarray:
    """Mean |X(t+lag) - X(t)|^q over particles and admissible t, per lag.

    Returns an array of rows (lag, average). Lags must be positive multiples
    of the grid step and may not exceed the horizon. The acceptance suite
    regresses log-average against log-lag; diffusive scaling gives slope q/2.
    """
    grid = ensemble.grid
    rows = []
    for lag in lags:
        k = grid.lag_to_steps(lag)
        diff = ensemble.states[:, k:, :] - ensemble.states[:, :-k, :]
        val = float(np.mean(np.linalg.norm(diff, axis=2) ** q))
        rows.append((k * grid.dt, val))
    return np.array(rows)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_MAGIC = b"MVLPATH1"


def paths_to_csv(ensemble: PathEnsemble, path) -> None:
    """Write `time,particle,x0,...`, one row per (grid point, particle)."""
    d = ensemble.d
    with open(path, "w", newline="") as fh:
        fh.write("time,particle," + ",".join(f"x{i}" for i in range(d)) + "\n")
        for k, t in enumerate(ensemble.grid.points):
            for i in range(ensemble.size):
                vals = ",".join(repr(float(v)) for v in ensemble.states[i, k])
                fh.write(f"{float(t)!r},{i},{vals}\n")


def flow_to_csv(flow: MeasureFlow, path) -> None:
    """Write `time,particle,x0,...` for every snapshot atom along the flow."""
    d = flow.ensembles[0].d
    with open(path, "w", newline="") as fh:
        fh.write("time,particle," + ",".join(f"x{i}" for i in range(d)) + "\n")
        for t, ens in zip(flow.grid.points, flow.ensembles):
            for i in range(ens.size):
                vals = ",".join(repr(float(v)) for v in ens.states[i])
                fh.write(f"{float(t)!r},{i},{vals}\n")


def paths_to_binary(ensemble: PathEnsemble, path) -> None:
    """Compact dump: magic `MVLPATH1`, then little-endian header
    <u32 version=1> <u32 d> <u64 M> <u64 points> <f64 T>, then the state
    block as M*points*d little-endian f64, particle-major.
    """
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIQQd", 1, ensemble.d, ensemble.size,
                             len(ensemble.grid), ensemble.grid.T))
        fh.write(np.ascontiguousarray(ensemble.states, dtype="<f8").tobytes())


def paths_from_binary(path) -> PathEnsemble:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ValueError(f"not a path dump (magic {magic!r})")
        version, d, M, n_points, T = struct.unpack("<IIQQd", fh.read(32))
        if version != 1:
            raise ValueError(f"unsupported dump version {version}")
        data = np.frombuffer(fh.read(), dtype="<f8").reshape(M, n_points, d)
    return PathEnsemble(grid=TimeGrid(T, n_points - 1), states=data.astype(float))


_FLOW_MAGIC = b"MVLFLOW1"


def flow_to_binary(flow: MeasureFlow, path) -> None:
    """Same layout as the path dump (magic `MVLFLOW1`), snapshot-major:
    header <u32 version=1> <u32 d> <u64 M> <u64 points> <f64 T>, then
    points*M*d little-endian f64 state block, then points*M weights.
    """
    states = np.stack([e.states for e in flow.ensembles])
    weights = np.stack([e.weights for e in flow.ensembles])
    n_points, M, d = states.shape
    with open(path, "wb") as fh:
        fh.write(_FLOW_MAGIC)
        fh.write(struct.pack("<IIQQd", 1, d, M, n_points, flow.grid.T))
        fh.write(np.ascontiguousarray(states, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(weights, dtype="<f8").tobytes())


def flow_from_binary(path) -> MeasureFlow:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _FLOW_MAGIC:
            raise ValueError(f"not a flow dump (magic {magic!r})")
        version, d, M, n_points, T = struct.unpack("<IIQQd", fh.read(32))
        if version != 1:
            raise ValueError(f"unsupported dump version {version}")
        block = np.frombuffer(fh.read(), dtype="<f8")
        states = block[:n_points * M * d].reshape(n_points, M, d)
        weights = block[n_points * M * d:].reshape(n_points, M)
    grid = TimeGrid(T, n_points - 1)
    ensembles = tuple(
        ParticleEnsemble(states=states[k], weights=weights[k], time=float(t))
        for k, t in enumerate(grid.points))
    return MeasureFlow(grid=grid, ensembles=ensembles)
