"""Empirical measures on R^d and on path space, and the distances between them.

Three distances are provided:

* :func:`wasserstein_p` - the L^p optimal-transport distance between discrete
  measures, exact in d=1 through the quantile coupling and exact for
  equal-size uniform ensembles in d>1 through a minimum-cost assignment;
* :func:`weighted_variation_2` - the variation distance weighted by
  1 + |x|^2, i.e. the supremum of |mu(f) - nu(f)| over test functions with
  |f| <= 1 + |.|^2 (for discrete measures the supremum is attained by the
  sign-optimal f and reduces to a sum over atoms);
* :func:`local_path_w2` - an L^2 distance between coupled path ensembles in
  which each pair of paths is stopped when either leaves the ball of radius
  R. The coupling is supplied by the caller (index pairing), so the value is
  an upper bound for the corresponding infimum over couplings; the index
  coupling (same particle id, same noise) is the one every diagnostic here
  needs.

The sign convention |f| <= 1 + |.|^2 (absolute bound, not one-sided) is
deliberate: a one-sided bound makes the supremum infinite already for two
distinct Dirac measures.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DimensionMismatchError
from .grids import TimeGrid, require_same_grid

ASSIGNMENT_CAP = 2048
_WEIGHT_TOL = 1e-12


def _as_states(states) -> np.ndarray:
    a = np.asarray(states, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"states must be (M, d), got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """Weighted empirical measure: M atoms in R^d at one model time.

    Weights are normalized at construction; the ensemble is immutable and
    moment statistics are cached, so holding one snapshot per solver step
    makes every summary statistic a once-per-step computation.
    """

    states: np.ndarray
    weights: np.ndarray = None
    time: float = 0.0

    def __post_init__(self):
        states = _as_states(self.states)
        if not np.isfinite(states).all():
            raise ValueError("ensemble atoms must be finite")
        if self.weights is None:
            w = np.full(states.shape[0], 1.0 / states.shape[0])
        else:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (states.shape[0],):
                raise ValueError("weights must be one scalar per atom")
            if (w < 0).any():
                raise ValueError("weights must be nonnegative")
            total = w.sum()
            if not np.isfinite(total) or total <= 0:
                raise ValueError("weights must have positive finite total mass")
            w = w / total
        states = states.copy()
        states.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_moment_cache", {})

    @property
    def d(self) -> int:
        return self.states.shape[1]

    @property
    def size(self) -> int:
        return self.states.shape[0]

    @property
    def uniform(self) -> bool:
        return bool(np.allclose(self.weights, 1.0 / self.size, atol=_WEIGHT_TOL, rtol=0))

    def moment(self, k: float) -> float:
        """Weighted mean of |x|^k (Euclidean norm), reported as overflow if infinite."""
        if k <= 0:
            raise ValueError(f"moment order must be positive, got {k}")
        cached = self._moment_cache.get(("abs", k))
        if cached is not None:
            return cached
        with np.errstate(over="ignore"):
            val = float(np.dot(self.weights, np.linalg.norm(self.states, axis=1) ** k))
        if not np.isfinite(val):
            raise OverflowError(f"moment of order {k} overflowed for this ensemble")
        self._moment_cache[("abs", k)] = val
        return val

    def mean_state(self) -> np.ndarray:
        cached = self._moment_cache.get("mean")
        if cached is None:
            cached = self.weights @ self.states
            cached.flags.writeable = False
            self._moment_cache["mean"] = cached
        return cached

    def to_csv(self, path) -> None:
        """Write `dim,weight,x0,...,x{d-1}`, one row per atom."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["dim", "weight"] + [f"x{i}" for i in range(self.d)])
            for wi, xi in zip(self.weights, self.states):
                w.writerow([self.d, repr(float(wi))] + [repr(float(v)) for v in xi])

    @classmethod
    def from_csv(cls, path, time: float = 0.0) -> "ParticleEnsemble":
        """Load an ensemble; weights are normalized on load."""
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, rows = rows[0], rows[1:]
        d = len(header) - 2
        states = np.array([[float(v) for v in r[2:2 + d]] for r in rows])
        weights = np.array([float(r[1]) for r in rows])
        return cls(states=states, weights=weights, time=time)


def dirac(x, time: float = 0.0) -> ParticleEnsemble:
    """Single-atom ensemble delta_x."""
    return ParticleEnsemble(states=np.atleast_1d(np.asarray(x, float))[None, :], time=time)


def moment(mu: ParticleEnsemble, k: float) -> float:
    """mu(|.|^k), the k-th absolute moment of the ensemble."""
    return mu.moment(k)


def _check_dims(mu: ParticleEnsemble, nu: ParticleEnsemble) -> None:
    if mu.d != nu.d:
        raise DimensionMismatchError(f"ensembles have d={mu.d} and d={nu.d}")


def _w_quantile_1d(x, wx, y, wy, p: float) -> float:
    """Exact 1-D W_p via the quantile (monotone) coupling, any weights."""
    ox = np.argsort(x, kind="stable")
    oy = np.argsort(y, kind="stable")
    xs, ws = x[ox], wx[ox]
    ys, vs = y[oy], wy[oy]
    cx = np.cumsum(ws)
    cy = np.cumsum(vs)
    cx[-1] = cy[-1] = 1.0
    levels = np.union1d(cx, cy)
    prev = np.concatenate([[0.0], levels[:-1]])
    mass = levels - prev
    ix = np.searchsorted(cx, levels - 0.5 * mass, side="right")
    iy = np.searchsorted(cy, levels - 0.5 * mass, side="right")
    ix = np.clip(ix, 0, len(xs) - 1)
    iy = np.clip(iy, 0, len(ys) - 1)
    cost = float(np.sum(mass * np.abs(xs[ix] - ys[iy]) ** p))
    return cost ** (1.0 / p)


def _w_assignment(mu: ParticleEnsemble, nu: ParticleEnsemble, p: float) -> float:
    """Exact W_p for equal-size uniform ensembles via min-cost matching."""
    if mu.size != nu.size:
        raise ValueError(
            "assignment backend needs equal sample counts "
            f"(got {mu.size} and {nu.size})")
    if not (mu.uniform and nu.uniform):
        raise ValueError("assignment backend needs uniform weights")
    if mu.size > ASSIGNMENT_CAP:
        raise ValueError(
            f"assignment backend is capped at {ASSIGNMENT_CAP} atoms; "
            "subsample explicitly before calling")
    diff = mu.states[:, None, :] - nu.states[None, :, :]
    cost = np.linalg.norm(diff, axis=2) ** p
    rows, cols = linear_sum_assignment(cost)
    return float(np.mean(cost[rows, cols])) ** (1.0 / p)


def wasserstein_p(mu: ParticleEnsemble, nu: ParticleEnsemble, p: float = 2.0,
                  backend: str = "auto") -> float:
    """L^p-Wasserstein distance between two ensembles.

    d=1 uses the quantile coupling (exact for arbitrary weights); d>1 uses
    an exact O(M^3) minimum-cost assignment and therefore requires equal
    sample counts, uniform weights, and at most ASSIGNMENT_CAP atoms.
    """
    _check_dims(mu, nu)
    if p < 1:
        raise ValueError(f"order must satisfy p >= 1, got {p}")
    if backend not in ("auto", "quantile", "assignment"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "quantile" or (backend == "auto" and mu.d == 1):
        if mu.d != 1:
            raise ValueError("quantile backend is 1-D only")
        return _w_quantile_1d(mu.states[:, 0], mu.weights,
                              nu.states[:, 0], nu.weights, p)
    return _w_assignment(mu, nu, p)


def weighted_variation_2(mu: ParticleEnsemble, nu: ParticleEnsemble) -> float:
    """sup over |f| <= 1+|.|^2 of |mu(f) - nu(f)|, as a sum over distinct atoms.

    For discrete measures the optimal f puts the extreme admissible value
    (1+|z|^2) with the sign of mu({z})-nu({z}) on every atom z, so the
    supremum equals sum_z (1+|z|^2) |mu({z}) - nu({z})|. Atoms are matched
    by exact floating-point equality.
    """
    _check_dims(mu, nu)
    masses: dict[bytes, float] = {}
    atoms: dict[bytes, np.ndarray] = {}
    for ens, sign in ((mu, 1.0), (nu, -1.0)):
        for w, z in zip(ens.weights, ens.states):
            key = z.tobytes()
            masses[key] = masses.get(key, 0.0) + sign * w
            atoms.setdefault(key, z)
    total = 0.0
    for key, m in masses.items():
        z = atoms[key]
        total += (1.0 + float(z @ z)) * abs(m)
    return total


@dataclass(frozen=True, eq=False)
class Path:
    """One trajectory: a state for every grid point."""

    grid: TimeGrid
    states: np.ndarray

    def __post_init__(self):
        states = _as_states(self.states)
        if states.shape[0] != len(self.grid):
            raise ValueError(
                f"path has {states.shape[0]} states for a grid of {len(self.grid)} points")
        if not np.isfinite(states).all():
            raise ValueError("path states must be finite")
        states = states.copy()
        states.flags.writeable = False
        object.__setattr__(self, "states", states)

    @property
    def d(self) -> int:
        return self.states.shape[1]


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Trajectories of many particles on one shared grid.

    `pairing`, when present, couples index i of this ensemble with index
    pairing[i] of a partner ensemble; it must be a bijection of indices.
    """

    grid: TimeGrid
    states: np.ndarray  # (M, n+1, d)
    pairing: Optional[np.ndarray] = None

    def __post_init__(self):
        a = np.asarray(self.states, dtype=float)
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3 or a.shape[1] != len(self.grid):
            raise ValueError(f"states must be (M, {len(self.grid)}, d), got {a.shape}")
        a = a.copy()
        a.flags.writeable = False
        object.__setattr__(self, "states", a)
        if self.pairing is not None:
            pr = np.array(self.pairing, dtype=int)
            if sorted(pr.tolist()) != list(range(a.shape[0])):
                raise ValueError("pairing must be a bijection of particle indices")
            pr.flags.writeable = False
            object.__setattr__(self, "pairing", pr)

    @property
    def size(self) -> int:
        return self.states.shape[0]

    @property
    def d(self) -> int:
        return self.states.shape[2]

    def path(self, i: int) -> Path:
        return Path(grid=self.grid, states=self.states[i])

    def with_pairing(self, pairing) -> "PathEnsemble":
        return PathEnsemble(grid=self.grid, states=self.states, pairing=pairing)


def local_path_w2(a: PathEnsemble, b: PathEnsemble, R: float,
                  pairing: Optional[Sequence[int]] = None) -> float:
    """Stopped path-space L^2 distance along a supplied coupling.

    Each pair (xi, eta) is stopped at the first grid time either path norm
    reaches R (resolved on the grid, so at most one step late), and
    contributes sup_t |xi - eta|^2 up to that time. Returns the square root
    of the mean contribution. Requires an index pairing: either the `pairing`
    argument or one carried by `a`.
    """
    require_same_grid(a.grid, b.grid, "path ensembles")
    if a.d != b.d:
        raise DimensionMismatchError(f"path ensembles have d={a.d} and d={b.d}")
    if pairing is None:
        pairing = a.pairing
    if pairing is None:
        raise ValueError("local_path_w2 needs an explicit index pairing")
    pairing = np.asarray(pairing, dtype=int)
    if a.size != b.size or pairing.shape != (a.size,):
        raise ValueError("pairing must map every index of a to an index of b")

    norms_a = np.linalg.norm(a.states, axis=2)
    norms_b = np.linalg.norm(b.states, axis=2)
    n_pts = len(a.grid)
    total = 0.0
    for i, j in enumerate(pairing):
        hit_a = np.nonzero(norms_a[i] >= R)[0]
        hit_b = np.nonzero(norms_b[j] >= R)[0]
        stop = n_pts - 1
        if hit_a.size:
            stop = min(stop, int(hit_a[0]))
        if hit_b.size:
            stop = min(stop, int(hit_b[0]))
        gap = a.states[i, :stop + 1] - b.states[j, :stop + 1]
        total += float(np.max(np.linalg.norm(gap, axis=1)) ** 2)
    return float(np.sqrt(total / a.size))
