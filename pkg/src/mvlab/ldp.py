"""Zero-noise limits, skeleton equations, and small-noise rare-event rates.

The central structural choice, inherited from the weak-convergence theory of
small-noise mean-field systems: the skeleton (controlled) ODE is driven by
the FROZEN law of the zero-noise limit, the Dirac flow delta_{X0(t)}, never
by the controlled trajectory's own law. The limit law is deterministic, so
conditioning on a rare event cannot move it; the controlled equation sees it
as an external, frozen coefficient.

Deterministic equations here integrate with classical RK4 so that ODE error
is negligible against the Monte-Carlo error of the stochastic experiments
they calibrate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import rng
from .errors import BlowUpError
from .grids import TimeGrid, require_same_grid
from .measures import Path, dirac
from .models import CoefficientModel, scale_diffusion
from .solvers import _drive


@dataclass(frozen=True, eq=False)
class Control:
    """Piecewise-constant control: one m-vector per grid interval.

    The energy 0.5 * sum ||phi_k||^2 * dt is cached at construction;
    :meth:`recompute_energy` re-derives it for invariant checks. Energy is
    additive over subintervals, so refining the grid representation of the
    same control leaves it unchanged (to rounding).
    """

    grid: TimeGrid
    values: np.ndarray
    energy: float = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape[0] != self.grid.n:
            raise ValueError(
                f"need one control value per interval: got {vals.shape[0]} for n={self.grid.n}")
        if not np.isfinite(vals).all():
            raise ValueError("control values must be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "energy", self._energy(vals, self.grid.dt))

    @staticmethod
    def _energy(vals: np.ndarray, dt: float) -> float:
        return 0.5 * float(np.sum(vals ** 2)) * dt

    def recompute_energy(self) -> float:
        return self._energy(self.values, self.grid.dt)

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @classmethod
    def zeros(cls, grid: TimeGrid, m: int = 1) -> "Control":
        return cls(grid=grid, values=np.zeros((grid.n, m)))

    @classmethod
    def constant(cls, grid: TimeGrid, value, m: int = 1) -> "Control":
        v = np.broadcast_to(np.atleast_1d(np.asarray(value, dtype=float)), (m,))
        return cls(grid=grid, values=np.tile(v, (grid.n, 1)))

    @classmethod
    def from_function(cls, f, grid: TimeGrid, pieces: Optional[int] = None) -> "Control":
        """Left-endpoint sample of f on `pieces` equal pieces, held constant.

        pieces must divide grid.n so the piecewise-constant function is
        representable on the grid exactly.
        """
        pieces = grid.n if pieces is None else pieces
        if pieces < 1 or grid.n % pieces != 0:
            raise ValueError(f"pieces={pieces} must divide the grid intervals n={grid.n}")
        block = grid.n // pieces
        lefts = grid.points[::block][:pieces]
        vals = np.atleast_2d(np.asarray([np.atleast_1d(f(t)) for t in lefts], dtype=float))
        return cls(grid=grid, values=np.repeat(vals, block, axis=0))

    def refine(self, factor: int) -> "Control":
        """The same control represented on a `factor`-times finer grid."""
        return Control(grid=self.grid.refine(factor),
                       values=np.repeat(self.values, factor, axis=0))


def rate_of_control(control: Control) -> float:
    """The control's action 0.5 * integral ||phi||^2, the rate-function cost."""
    return control.energy


def rate_function_hit_level(delta: float, T: float) -> float:
    """Minimal action driving dx = phi from 0 to level delta by time T.

    Cauchy-Schwarz gives 0.5 * integral phi^2 >= delta^2/(2T), attained by
    the constant control phi = delta/T. This is the analytic benchmark rate
    for additive-noise level hitting.
    """
    if delta <= 0 or T <= 0:
        raise ValueError(f"need delta > 0 and T > 0, got delta={delta}, T={T}")
    return delta * delta / (2.0 * T)


def _integrate_limit_and_skeleton(model: CoefficientModel, x0, grid: TimeGrid,
                                  control: Optional[Control]):
    """RK4 for the zero-noise flow and, optionally, the controlled skeleton.

    The two systems share stage arithmetic: the limit flow advances through
    dx = b(t, x, delta_x) and the skeleton sees the limit's stage states as
    its frozen law. With a zero control the skeleton recursion is therefore
    the limit recursion evaluated on identical inputs.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    if x.shape != (model.d,):
        raise ValueError(f"x0 has shape {x.shape}, model expects ({model.d},)")
    h = grid.dt
    n = grid.n
    X0 = np.empty((n + 1, model.d))
    X0[0] = x
    with_skel = control is not None
    XB = None
    if with_skel:
        if control.m != model.m:
            raise ValueError(f"control has m={control.m}, model expects m={model.m}")
        XB = np.empty((n + 1, model.d))
        XB[0] = x

    def f0(t, z):
        return model.drift(t, z, dirac(z, t))

    def fb(t, z, z0, phi):
        mu = dirac(z0, t)
        return model.drift(t, z, mu) + model.diffusion(t, z, mu) @ phi

    x0c = x.copy()
    xb = x.copy()
    for k in range(n):
        t = grid.points[k]
        phi = control.values[k] if with_skel else None
        a1 = f0(t, x0c)
        a2 = f0(t + h / 2, x0c + h / 2 * a1)
        a3 = f0(t + h / 2, x0c + h / 2 * a2)
        a4 = f0(t + h, x0c + h * a3)
        if with_skel:
            b1 = fb(t, xb, x0c, phi)
            b2 = fb(t + h / 2, xb + h / 2 * b1, x0c + h / 2 * a1, phi)
            b3 = fb(t + h / 2, xb + h / 2 * b2, x0c + h / 2 * a2, phi)
            b4 = fb(t + h, xb + h * b3, x0c + h * a3, phi)
            xb = xb + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
            if not np.isfinite(xb).all():
                raise BlowUpError(time=grid.points[k + 1], detail="skeleton state")
            XB[k + 1] = xb
        x0c = x0c + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        if not np.isfinite(x0c).all():
            raise BlowUpError(time=grid.points[k + 1], detail="limit state")
        X0[k + 1] = x0c
    return X0, XB


def limit_ode(model: CoefficientModel, x0, grid: TimeGrid) -> Path:
    """Zero-noise limit flow dx/dt = b(t, x, delta_x), RK4 on the grid."""
    X0, _ = _integrate_limit_and_skeleton(model, x0, grid, None)
    return Path(grid=grid, states=X0)


def skeleton_solve(model: CoefficientModel, x0, control: Control,
                   limit: Path) -> Path:
    """Controlled skeleton dx/dt = b(t, x, L(t)) + sigma(t, x, L(t)) phi(t),
    with L(t) the frozen Dirac law of the zero-noise limit.

    The limit flow is re-derived internally with the same integrator (its
    off-grid stage values are needed), and the supplied `limit` path must
    match it on the grid; a mismatch means it was produced by a different
    model, initial state, or integrator.
    """
    require_same_grid(control.grid, limit.grid, "control and limit")
    X0, XB = _integrate_limit_and_skeleton(model, x0, control.grid, control)
    if not np.allclose(limit.states, X0, rtol=1e-9, atol=1e-12):
        raise ValueError("supplied limit path does not match the model's zero-noise flow")
    return Path(grid=control.grid, states=XB)


# ---------------------------------------------------------------------------
# Small-noise Monte-Carlo experiments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExitEvent:
    """First passage of the deviation from the limit path across level delta.

    side "upper": the signed deviation X - X0 reaches delta (scalar states).
    side "abs": the deviation norm reaches delta (exit from the delta-ball).

    With bridge=True (scalar states only) each step additionally counts a
    within-step crossing with the Brownian-bridge probability
    exp(-2 (a-d_k)(a-d_{k+1}) / s^2 dt); this removes the O(sqrt(dt)) bias of
    monitoring the supremum on the grid only. The bridge uniforms come from
    their own derived streams, so the estimate stays a pure function of the
    seed.
    """

    delta: float
    side: str = "upper"
    bridge: bool = True

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError(f"threshold must be nonnegative, got {self.delta}")
        if self.side not in ("upper", "abs"):
            raise ValueError(f"side must be 'upper' or 'abs', got {self.side!r}")


@dataclass(frozen=True, eq=False)
class RateEstimate:
    """Empirical rare-event probabilities along an epsilon ladder.

    eps_log_p carries NaN where no hit was observed; such entries are
    censored (zero_hit_upper holds the one-sided 95% Clopper-Pearson bound)
    rather than reported as log 0.
    """

    epsilons: np.ndarray
    p_hat: np.ndarray
    std_err: np.ndarray
    eps_log_p: np.ndarray
    censored: np.ndarray
    trials: np.ndarray
    zero_hit_upper: np.ndarray
    reference_rate: Optional[float] = None

    def to_csv(self, path) -> None:
        """Write `epsilon,p_hat,se,eps_log_p`; censored rows leave the last field blank."""
        with open(path, "w", newline="") as fh:
            fh.write("epsilon,p_hat,se,eps_log_p\n")
            for e, p, s, lp, c in zip(self.epsilons, self.p_hat, self.std_err,
                                      self.eps_log_p, self.censored):
                tail = "" if c else repr(float(lp))
                fh.write(f"{float(e)!r},{float(p)!r},{float(s)!r},{tail}\n")

    def write_gnuplot(self, path, csv_name: str) -> None:
        ref = ""
        if self.reference_rate is not None:
            ref = f", {-self.reference_rate} title 'analytic rate' lw 2"
        with open(path, "w") as fh:
            fh.write(
                "set xlabel 'epsilon'\n"
                "set ylabel 'epsilon * log p'\n"
                "set datafile separator ','\n"
                f"plot '{csv_name}' using 1:4 with linespoints title 'estimate'{ref}\n")


def _bridge_crossing(gap0, gap1, s2dt):
    with np.errstate(divide="ignore", over="ignore"):
        q = np.exp(-2.0 * gap0 * gap1 / s2dt)
    return np.where((gap0 <= 0) | (gap1 <= 0), 1.0, np.minimum(q, 1.0))


def small_noise_experiment(model: CoefficientModel, x0, grid: TimeGrid,
                           epsilons: Sequence[float], event: ExitEvent,
                           trials, seed: int = 0) -> RateEstimate:
    """Estimate P(exit event) for the interacting system at each noise level.

    For every epsilon the diffusion is scaled by sqrt(epsilon) and `trials`
    particles are advanced as one interacting system, so the coefficients see
    the epsilon-system's own empirical law. The event is evaluated online
    (paths are never stored); p_hat is the hit fraction with the binomial
    standard error. `trials` may be one integer or one per epsilon;
    meaningful tail estimates need at least ~1e4 trials per level.
    Deterministic given seed; each epsilon runs on its own derived seed.
    """
    epsilons = [float(e) for e in epsilons]
    if np.isscalar(trials):
        trials = [int(trials)] * len(epsilons)
    trials = [int(v) for v in trials]
    if len(trials) != len(epsilons):
        raise ValueError("need one trial count per epsilon")
    if event.bridge and model.d != 1:
        raise ValueError("bridge-corrected exit events support scalar states only")
    if event.side == "upper" and model.d != 1:
        raise ValueError("one-sided exit events need scalar states")

    limit = limit_ode(model, x0, grid).states  # (n+1, d)
    delta = event.delta
    p_hat, se, elogp, cens, upper = [], [], [], [], []
    for case, (eps, n_tr) in enumerate(zip(epsilons, trials)):
        sub_seed = rng.derive_seed(seed, case)
        scaled = scale_diffusion(model, math.sqrt(eps))
        hit = np.zeros(n_tr, dtype=bool)

        def deviation(states, k):
            diff = states - limit[k][None, :]
            return diff[:, 0] if event.side == "upper" else np.linalg.norm(diff, axis=1)

        def observer(step, t, X, X_next, sig, _hit=hit, _seed=sub_seed):
            if step == 0:
                _hit |= deviation(X, 0) >= delta
            dev1 = deviation(X_next, step + 1)
            _hit |= dev1 >= delta
            if event.bridge:
                dev0 = deviation(X, step)
                s2dt = (sig[:, 0, 0] ** 2) * grid.dt
                alive = s2dt > 0
                q = _bridge_crossing(delta - dev0, delta - dev1, np.where(alive, s2dt, 1.0))
                if event.side == "abs":
                    qdn = _bridge_crossing(delta + dev0, delta + dev1,
                                           np.where(alive, s2dt, 1.0))
                    q = q + qdn - q * qdn
                u = rng.bridge_uniforms(_seed, step, n_tr)
                _hit |= alive & (u < q)

        _drive(scaled, grid, n_tr, 1, sub_seed,
               lambda n, gen: np.tile(np.atleast_1d(np.asarray(x0, float)), (n, 1)),
               frozen=False, observer=observer, record_paths=False)

        k_hits = int(hit.sum())
        p = k_hits / n_tr
        p_hat.append(p)
        se.append(math.sqrt(p * (1.0 - p) / n_tr))
        if k_hits == 0:
            cens.append(True)
            elogp.append(math.nan)
            upper.append(1.0 - 0.05 ** (1.0 / n_tr))
        else:
            cens.append(False)
            elogp.append(eps * math.log(p))
            upper.append(math.nan)
    return RateEstimate(
        epsilons=np.array(epsilons), p_hat=np.array(p_hat), std_err=np.array(se),
        eps_log_p=np.array(elogp), censored=np.array(cens),
        trials=np.array(trials), zero_hit_upper=np.array(upper))


def control_convergence_probe(model: CoefficientModel, x0,
                              target_control: Control,
                              refinements: Sequence[Control]) -> np.ndarray:
    """Sup-norm skeleton gaps between each approximating control and the target.

    All controls must live on the target's grid (coarser piecewise-constant
    approximations are represented there exactly by repetition). Returns one
    gap per refinement, in order.
    """
    grid = target_control.grid
    limit = limit_ode(model, x0, grid)
    base = skeleton_solve(model, x0, target_control, limit).states
    gaps = []
    for ctl in refinements:
        require_same_grid(ctl.grid, grid, "refinement and target controls")
        states = skeleton_solve(model, x0, ctl, limit).states
        gaps.append(float(np.max(np.linalg.norm(states - base, axis=1))))
    return np.array(gaps)
