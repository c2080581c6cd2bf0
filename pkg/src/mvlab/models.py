"""Coefficient models (drift, diffusion) for mean-field SDEs.

Every model evaluates its coefficients against an empirical measure, a
:class:`~mvlab.measures.ParticleEnsemble`. The measure enters in exactly one
of two ways:

* through declared summary statistics (`summary_hook`), e.g. the mean or an
  absolute moment, which solvers warm once per snapshot so per-step cost
  stays O(M);
* through the atoms themselves, for pairwise interaction kernels; those
  models cost O(M) per coefficient evaluation and O(N*M) per solver step.

Both the drift and the diffusion accept a single state of shape (d,) or a
batch of shape (B, d); the diffusion returns (d, m) respectively (B, d, m).

The module also ships numeric checkers for the structural conditions the
well-posedness theory rests on (coercivity, growth, local weak monotonicity
in plain and moment-weighted form). They estimate the smallest admissible
constant on a random sample and record witnesses where no constant below a
configured cap works.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import rng
from .measures import ParticleEnsemble, wasserstein_p, weighted_variation_2

# Summary statistic declarations understood by solvers.
MEAN = ("mean",)


def abs_moment(p: float) -> tuple:
    return ("abs_moment", float(p))


# Chunk bound for pairwise kernels, in scalar entries of the (B, C, d) block.
_PAIR_BLOCK = 1 << 22


@dataclass(frozen=True, eq=False)
class CoefficientModel:
    """A drift/diffusion pair with parameters and assumption metadata.

    kappa is the moment order the growth and monotonicity conditions use for
    this model. summary_hook, when not None, declares the ensemble statistics
    that fully determine the coefficients' measure dependence; an empty tuple
    means the coefficients ignore the measure entirely.
    """

    id: str
    d: int
    m: int
    kappa: float
    drift_fn: Callable[[float, np.ndarray, ParticleEnsemble], np.ndarray]
    diffusion_fn: Callable[[float, np.ndarray, ParticleEnsemble], np.ndarray]
    params: dict = field(default_factory=dict)
    summary_hook: Optional[tuple] = None

    def _batch(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return x[None, :], True
        return x, False

    def drift(self, t: float, x, mu: ParticleEnsemble) -> np.ndarray:
        X, single = self._batch(x)
        out = np.asarray(self.drift_fn(t, X, mu), dtype=float)
        return out[0] if single else out

    def diffusion(self, t: float, x, mu: ParticleEnsemble) -> np.ndarray:
        X, single = self._batch(x)
        out = np.asarray(self.diffusion_fn(t, X, mu), dtype=float)
        return out[0] if single else out

    def warm_summary(self, mu: ParticleEnsemble) -> None:
        """Precompute declared statistics on a snapshot (cached there)."""
        if not self.summary_hook:
            return
        for spec in self.summary_hook:
            if spec[0] == "mean":
                mu.mean_state()
            elif spec[0] == "abs_moment":
                mu.moment(spec[1])


def scale_diffusion(model: CoefficientModel, factor: float) -> CoefficientModel:
    """Same drift, diffusion multiplied by a constant factor."""
    base = model.diffusion_fn
    return replace(model, id=f"{model.id}@scale",
                   diffusion_fn=lambda t, X, mu: factor * base(t, X, mu))


def convolution_mean(grad_w, X: np.ndarray, mu: ParticleEnsemble) -> np.ndarray:
    """sum_z w_z grad_w(x - z) over the atoms, chunked to bound temporaries."""
    atoms, weights = mu.states, mu.weights
    B, d = X.shape
    out = np.zeros((B, d))
    step = max(1, _PAIR_BLOCK // max(1, B * d))
    for lo in range(0, atoms.shape[0], step):
        block = grad_w(X[:, None, :] - atoms[None, lo:lo + step, :])
        block = np.broadcast_to(block, (B, block.shape[1], d))
        out += np.einsum("bcd,c->bd", block, weights[lo:lo + step])
    return out


def pair_mean(kernel, X: np.ndarray, mu: ParticleEnsemble) -> np.ndarray:
    """sum_z w_z kernel(x, z) over the atoms, chunked to bound temporaries."""
    atoms, weights = mu.states, mu.weights
    B, d = X.shape
    out = np.zeros((B, d))
    step = max(1, _PAIR_BLOCK // max(1, B * d))
    for lo in range(0, atoms.shape[0], step):
        block = kernel(X[:, None, :], atoms[None, lo:lo + step, :])
        block = np.broadcast_to(block, (B, min(step, atoms.shape[0] - lo), d))
        out += np.einsum("bcd,c->bd", block, weights[lo:lo + step])
    return out


def _const_diffusion(matrix: np.ndarray):
    matrix = np.asarray(matrix, dtype=float)

    def diffusion(t, X, mu):
        return np.broadcast_to(matrix, (X.shape[0],) + matrix.shape)

    return diffusion


def model_zero(d: int = 1, m: int = 1) -> CoefficientModel:
    """b = 0, sigma = 0; every path is constant."""
    return CoefficientModel(
        id="zero", d=d, m=m, kappa=2.0,
        drift_fn=lambda t, X, mu: np.zeros_like(X),
        diffusion_fn=_const_diffusion(np.zeros((d, m))),
        summary_hook=())


def model_brownian(d: int = 1, scale: float = 1.0) -> CoefficientModel:
    """b = 0, sigma = scale * I; plain Brownian motion."""
    return CoefficientModel(
        id="brownian", d=d, m=d, kappa=2.0, params={"scale": scale},
        drift_fn=lambda t, X, mu: np.zeros_like(X),
        diffusion_fn=_const_diffusion(scale * np.eye(d)),
        summary_hook=())


def model_cubic(p: float = 2.0) -> CoefficientModel:
    """Scalar model with cubic drift damped by a moment of the law.

    drift(t, x, mu) = -x^3 * mu(|.|^p), diffusion = x. The drift alone is
    not monotone because of the moment factor, which is exactly what makes
    this the canonical stress test for the locally-monotone conditions.
    """
    if p < 1:
        raise ValueError(f"moment order must satisfy p >= 1, got {p}")

    def drift(t, X, mu):
        return -(X ** 3) * mu.moment(p)

    def diffusion(t, X, mu):
        return X[:, :, None]

    return CoefficientModel(
        id="cubic", d=1, m=1, kappa=6.0 + 2.0 * p, params={"p": p},
        drift_fn=drift, diffusion_fn=diffusion,
        summary_hook=(abs_moment(p),))


def model_granular(grad_v, grad_w, noise_scale: float = 1.0, d: int = 1,
                   kappa: float = 6.0, model_id: str = "granular",
                   params: dict | None = None,
                   summary_hook: Optional[tuple] = None) -> CoefficientModel:
    """Overdamped dynamics in a confining potential with pair interaction.

    drift(t, x, mu) = -grad_v(x) - sum_z w_z grad_w(x - z),
    diffusion = sqrt(2) * noise_scale * I. The interaction average runs over
    the atoms of mu (O(M) per evaluation) unless a summary_hook is supplied.
    """

    def drift(t, X, mu):
        return -grad_v(X) - convolution_mean(grad_w, X, mu)

    return CoefficientModel(
        id=model_id, d=d, m=d, kappa=kappa, params=dict(params or {}),
        drift_fn=drift,
        diffusion_fn=_const_diffusion(np.sqrt(2.0) * noise_scale * np.eye(d)),
        summary_hook=summary_hook)


def curie_weiss(beta: float = 1.0, K: float = 1.0,
                noise_scale: float = 1.0) -> CoefficientModel:
    """Mean-field lattice magnet: V(x) = beta(x^4/4 - x^2/2), W(x) = -beta K x.

    The interaction potential is linear, so the convolution gradient is the
    constant -beta*K no matter what the law is; the drift is computed in
    closed form, -beta(x^3 - x) + beta*K, and the empty summary_hook records
    that the measure dependence vanishes.
    """

    def drift(t, X, mu):
        return -beta * (X ** 3 - X) + beta * K

    return CoefficientModel(
        id="granular_curie_weiss", d=1, m=1, kappa=6.0,
        params={"beta": beta, "K": K, "noise_scale": noise_scale},
        drift_fn=drift,
        diffusion_fn=_const_diffusion(np.sqrt(2.0) * noise_scale * np.eye(1)),
        summary_hook=())


def model_plasma(grad_v, grad_xw, d: int = 1, kappa: float = 2.0,
                 model_id: str = "plasma", params: dict | None = None,
                 summary_hook: Optional[tuple] = None) -> CoefficientModel:
    """Confined dynamics with a two-argument interaction kernel.

    drift(t, x, mu) = -grad_v(x) - sum_z w_z grad_xw(x, z),
    diffusion = sqrt(2) * I.
    """

    def drift(t, X, mu):
        return -grad_v(X) - pair_mean(grad_xw, X, mu)

    return CoefficientModel(
        id=model_id, d=d, m=d, kappa=kappa, params=dict(params or {}),
        drift_fn=drift, diffusion_fn=_const_diffusion(np.sqrt(2.0) * np.eye(d)),
        summary_hook=summary_hook)


def cucker_smale(beta: float = 0.0, grad_v=None, d: int = 1) -> CoefficientModel:
    """Alignment-type kernel grad_xw(x, z) = z / (1 + |x|^2)^beta.

    The kernel is separable in (x, z), so the atom average collapses to the
    ensemble mean and a single summary statistic carries the whole measure
    dependence.
    """
    if beta < 0:
        raise ValueError(f"kernel exponent must be nonnegative, got {beta}")
    gv = grad_v if grad_v is not None else (lambda X: np.zeros_like(X))

    def drift(t, X, mu):
        mean = mu.mean_state()
        r2 = np.sum(X ** 2, axis=1, keepdims=True)
        return -gv(X) - mean[None, :] / (1.0 + r2) ** beta

    return CoefficientModel(
        id="plasma_cucker_smale", d=d, m=d, kappa=2.0, params={"beta": beta},
        drift_fn=drift, diffusion_fn=_const_diffusion(np.sqrt(2.0) * np.eye(d)),
        summary_hook=(MEAN,))


def model_kinetic(grad_u, grad_w, d: int = 1, kappa: float = 2.0,
                  model_id: str = "kinetic",
                  params: dict | None = None) -> CoefficientModel:
    """Second-order (position, velocity) dynamics with positional interaction.

    State is (x, v) in R^{2d}. drift = (v, -v - grad_u(x) - avg_z grad_w(x - z))
    where the average runs over the position block of the measure's atoms;
    noise sqrt(2) * I acts on the velocity block only.
    """

    def drift(t, X, mu):
        x, v = X[:, :d], X[:, d:]
        pos_atoms = ParticleEnsemble(states=mu.states[:, :d],
                                     weights=mu.weights, time=mu.time)
        inter = convolution_mean(grad_w, x, pos_atoms)
        return np.concatenate([v, -v - grad_u(x) - inter], axis=1)

    sig = np.zeros((2 * d, d))
    sig[d:, :] = np.sqrt(2.0) * np.eye(d)
    return CoefficientModel(
        id=model_id, d=2 * d, m=d, kappa=kappa, params=dict(params or {}),
        drift_fn=drift, diffusion_fn=_const_diffusion(sig))


def dorsogna(C1: float = 1.0, C2: float = 0.0, l1: float = 1.0,
             l2: float = 1.0, d: int = 1) -> CoefficientModel:
    """Kinetic swarming preset: Morse-type radial interaction, no confinement.

    W(x) = -C1 exp(-|x|^2/l1^2) + C2 exp(-|x|^2/l2^2), so
    grad_w(x) = (2 C1/l1^2) exp(-|x|^2/l1^2) x - (2 C2/l2^2) exp(-|x|^2/l2^2) x.
    """

    def grad_w(diff):
        r2 = np.sum(diff ** 2, axis=-1, keepdims=True)
        return (2.0 * C1 / l1 ** 2 * np.exp(-r2 / l1 ** 2)
                - 2.0 * C2 / l2 ** 2 * np.exp(-r2 / l2 ** 2)) * diff

    return model_kinetic(
        grad_u=lambda x: np.zeros_like(x), grad_w=grad_w, d=d, kappa=2.0,
        model_id="kinetic_dorsogna",
        params={"C1": C1, "C2": C2, "l1": l1, "l2": l2})


def model_bounded_sin(btilde, bound: float | None = None,
                      model_id: str = "bounded_sin",
                      params: dict | None = None) -> CoefficientModel:
    """Scalar model with bounded averaged drift and sin(x) noise.

    drift(t, x, mu) = sum_z w_z btilde(x, z), diffusion = sin(x). The caller
    supplies btilde together with its bound (metadata only).
    """

    def drift(t, X, mu):
        return pair_mean(btilde, X, mu)

    def diffusion(t, X, mu):
        return np.sin(X)[:, :, None]

    p = dict(params or {})
    if bound is not None:
        p["bound"] = bound
    return CoefficientModel(
        id=model_id, d=1, m=1, kappa=2.0, params=p,
        drift_fn=drift, diffusion_fn=diffusion)


def bounded_sin_tanh() -> CoefficientModel:
    """Preset btilde(x, z) = tanh(z); bounded by 1."""
    return model_bounded_sin(lambda x, z: np.tanh(z), bound=1.0,
                             model_id="bounded_sin_tanh")


def model_linear_meanfield(a: float, c: float, s: float) -> CoefficientModel:
    """Scalar test oracle with closed-form moments (not from the model zoo).

    drift = a x + c * mean(mu), diffusion = s (additive). The mean obeys
    m' = (a + c) m and the second moment q' = 2 a q + 2 c m^2 + s^2, which
    gives every solver an independent ODE oracle.
    """

    def drift(t, X, mu):
        return a * X + c * mu.mean_state()[None, :]

    return CoefficientModel(
        id="linear_meanfield", d=1, m=1, kappa=2.0,
        params={"a": a, "c": c, "s": s},
        drift_fn=drift, diffusion_fn=_const_diffusion(np.array([[s]])),
        summary_hook=(MEAN,))


# ---------------------------------------------------------------------------
# Numeric assumption checking
# ---------------------------------------------------------------------------

CONDITIONS = ("A2", "A2'''", "A3", "A4")


@dataclass(frozen=True)
class SamplerConfig:
    """Sampling plan for the assumption checkers.

    radii are the levels R for the locally-monotone condition (and the state
    scales for the global ones); each level gets points_per_radius tuples.
    Measures are Gaussian ensembles of ensemble_size atoms with scales drawn
    from measure_scales. Ratios above constant_cap are recorded as
    violations.
    """

    radii: tuple = (0.5, 1.0, 2.0, 4.0)
    points_per_radius: int = 64
    ensemble_size: int = 64
    measure_scales: tuple = (0.5, 1.0, 2.0)
    times: tuple = (0.0,)
    constant_cap: float = 1e8


@dataclass(frozen=True)
class Violation:
    condition: str
    radius: float
    t: float
    ratio: float
    x: np.ndarray
    y: Optional[np.ndarray]


@dataclass(frozen=True)
class AssumptionReport:
    """Empirical constants for one structural condition.

    constant is the smallest C making the condition's inequality hold on the
    whole sample; per_radius is the K(R) curve (max ratio at each sampled
    radius). violations is empty exactly when the constant is finite and
    below the configured cap.
    """

    condition: str
    sample_count: int
    constant: float
    per_radius: dict
    violations: tuple

    @property
    def ok(self) -> bool:
        return len(self.violations) == 0


def _ball_point(gen: np.random.Generator, d: int, R: float) -> np.ndarray:
    g = gen.standard_normal(d)
    nrm = np.linalg.norm(g)
    if nrm == 0.0:
        return np.zeros(d)
    return R * gen.random() ** (1.0 / d) * g / nrm


def _gaussian_ensemble(gen: np.random.Generator, d: int, size: int,
                       scale: float, t: float) -> ParticleEnsemble:
    return ParticleEnsemble(states=scale * gen.standard_normal((size, d)), time=t)


def check_assumption(model: CoefficientModel, condition_id: str,
                     sampler_config: SamplerConfig = SamplerConfig(),
                     seed: int = 0) -> AssumptionReport:
    """Estimate the smallest constant for one structural condition by sampling.

    For each sampled tuple (t, x, y, mu, nu) the condition's left-hand side
    is evaluated and divided by its structural right-hand factor; the report
    keeps the per-radius maxima (the empirical K(R) curve), the overall
    constant, and witnesses where the ratio exceeds the configured cap or is
    not finite. Deterministic given seed, and each tuple draws from its own
    derived stream so evaluation order cannot matter.
    """
    if condition_id not in CONDITIONS:
        raise ValueError(f"unknown condition {condition_id!r}, expected one of {CONDITIONS}")
    cfg = sampler_config
    d, kappa = model.d, model.kappa
    pairwise = condition_id in ("A2", "A2'''")

    per_radius: dict[float, float] = {}
    violations: list[Violation] = []
    count = 0
    tuple_index = 0
    for R in cfg.radii:
        worst = -np.inf
        for _ in range(cfg.points_per_radius):
            gen = rng.stream(seed, rng.ASSUMPTION, tuple_index)
            tuple_index += 1
            t = float(cfg.times[int(gen.integers(len(cfg.times)))])
            scale = float(cfg.measure_scales[int(gen.integers(len(cfg.measure_scales)))])
            x = _ball_point(gen, d, R)
            mu = _gaussian_ensemble(gen, d, cfg.ensemble_size, scale, t)
            y = nu = None
            if pairwise:
                y = _ball_point(gen, d, R)
                nu = _gaussian_ensemble(gen, d, cfg.ensemble_size, scale, t)

            with np.errstate(over="ignore", invalid="ignore"):
                ratio = _condition_ratio(model, condition_id, t, x, y, mu, nu, kappa)
            count += 1
            if not np.isfinite(ratio) or ratio > cfg.constant_cap:
                violations.append(Violation(condition_id, R, t, float(ratio), x, y))
            worst = max(worst, float(ratio))
        per_radius[float(R)] = worst
    constant = max(per_radius.values())
    return AssumptionReport(condition=condition_id, sample_count=count,
                            constant=constant, per_radius=per_radius,
                            violations=tuple(violations))


def _condition_ratio(model, condition_id, t, x, y, mu, nu, kappa) -> float:
    if condition_id == "A3":
        b = model.drift(t, x, mu)
        sig = model.diffusion(t, x, mu)
        lhs = 2.0 * float(b @ x) + float(np.sum(sig ** 2))
        den = 1.0 + float(x @ x) + mu.moment(2.0)
        return lhs / den
    if condition_id == "A4":
        b = model.drift(t, x, mu)
        sig = model.diffusion(t, x, mu)
        xn = float(np.linalg.norm(x))
        r_b = float(b @ b) / (1.0 + xn ** kappa + mu.moment(kappa))
        r_s = float(np.sum(sig ** 2)) / (1.0 + xn ** 2 + mu.moment(2.0))
        return max(r_b, r_s)
    # pairwise monotonicity conditions
    db = model.drift(t, x, mu) - model.drift(t, y, nu)
    ds = model.diffusion(t, x, mu) - model.diffusion(t, y, nu)
    lhs = 2.0 * float(db @ (x - y)) + float(np.sum(ds ** 2))
    gap2 = float(np.sum((x - y) ** 2))
    mom = mu.moment(kappa) + nu.moment(kappa)
    if condition_id == "A2":
        den = (1.0 + mom) * (gap2 + weighted_variation_2(mu, nu))
    else:  # A2'''
        xn, yn = float(np.linalg.norm(x)), float(np.linalg.norm(y))
        w2 = wasserstein_p(mu, nu, 2.0)
        den = (1.0 + xn ** kappa + yn ** kappa + mom) * gap2 + (1.0 + mom) * w2 ** 2
    if den == 0.0:
        return 0.0 if lhs <= 0 else np.inf
    return lhs / den
