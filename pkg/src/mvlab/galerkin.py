"""Spectral Galerkin solver for a mean-field stochastic porous-media system.

State space: sine modes e_k(x) = sin(k pi x) of the Dirichlet Laplacian on
(0, 1), eigenvalues lambda_k = (k pi)^2, truncated at K modes. The energy
space H is the dual of the form domain of the Laplacian, so the H-norm
weights mode k by 1/lambda_k:

    ||u||_H^2 = sum_k u_k^2 / lambda_k,      ||u||_{L2}^2 = sum_k u_k^2,

while the L^{r+1} norm is computed in physical space by composite-trapezoid
quadrature on at least max(4K, 2*ceil(r)*K) points (anti-aliasing margin for
the power nonlinearity).

Dynamics, in coefficient space, for the ensemble of M fields:

    dX_k = [ -lambda_k * PsiHat_k(X) + (X_k - mean over fields of X_k) ] dt
           + q_k X_k dbeta_k            (k <= K_noise)

where Psi(s) = |s|^{r-1} s is applied pointwise in physical space and
projected back (PsiHat = psi_apply), the interaction term is the ensemble
Bochner mean realization of u - E[u], and the noise is diagonal
multiplicative on the first K_noise modes with square-summable weights q_k
(the minimal Hilbert-Schmidt realization of state-proportional cylindrical
noise; a pointwise-product variant is possible future work).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import rng
from .errors import BlowUpError, ConfigError
from .grids import TimeGrid


def eigenvalues(K: int) -> np.ndarray:
    """Dirichlet Laplacian eigenvalues (k pi)^2 for k = 1..K."""
    return (np.arange(1, K + 1) * np.pi) ** 2


def quad_points(K: int, r: float) -> int:
    """Physical quadrature resolution for the degree-r nonlinearity."""
    return max(4 * K, 2 * int(np.ceil(r)) * K)


def psi_pointwise(s, r: float):
    """The porous-media nonlinearity |s|^{r-1} s, applied elementwise."""
    s = np.asarray(s, dtype=float)
    return np.abs(s) ** (r - 1.0) * s


class SineBasis:
    """Sine synthesis/analysis on a uniform interior grid of (0, 1).

    Discrete sine orthogonality makes analysis-after-synthesis exact for
    K < n_phys, so the round trip is the identity to rounding.
    """

    def __init__(self, K: int, n_phys: int):
        if n_phys <= K:
            raise ValueError(f"need n_phys > K, got n_phys={n_phys}, K={K}")
        self.K = K
        self.n_phys = n_phys
        j = np.arange(1, n_phys)
        k = np.arange(1, K + 1)
        self.x = j / n_phys
        self.S = np.sin(np.outer(k, np.pi * self.x))  # (K, n_phys-1)

    def synth(self, coeffs: np.ndarray) -> np.ndarray:
        """Coefficients (..., K) -> interior values (..., n_phys-1)."""
        return coeffs @ self.S

    def analyze(self, values: np.ndarray) -> np.ndarray:
        """Interior values -> coefficients; trapezoid of 2 * integral u e_k."""
        return (2.0 / self.n_phys) * (values @ self.S.T)

    def quad_weight(self) -> float:
        return 1.0 / self.n_phys


@dataclass(frozen=True, eq=False)
class SpectralField:
    """A truncated sine expansion u = sum_k u_k sin(k pi x)."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 1:
            raise ValueError("coefficients must be a flat mode vector")
        if not np.isfinite(c).all():
            raise ValueError("coefficients must be finite")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @property
    def K(self) -> int:
        return self.coeffs.shape[0]

    def h_norm_sq(self) -> float:
        return float(np.sum(self.coeffs ** 2 / eigenvalues(self.K)))

    def l2_norm_sq(self) -> float:
        return float(np.sum(self.coeffs ** 2))

    def lr_norm(self, r_exp: float) -> float:
        """||u||_{L^{r_exp}} by quadrature at the anti-aliased resolution."""
        basis = SineBasis(self.K, quad_points(self.K, r_exp))
        vals = basis.synth(self.coeffs)
        return float(np.sum(np.abs(vals) ** r_exp) * basis.quad_weight()) ** (1.0 / r_exp)


def psi_apply(field: SpectralField, r: float) -> SpectralField:
    """Synthesize, apply |s|^{r-1} s pointwise, project back to K modes."""
    if r < 1.0:
        raise ValueError(f"porous-media exponent must satisfy r >= 1, got {r}")
    basis = SineBasis(field.K, quad_points(field.K, r))
    vals = psi_pointwise(basis.synth(field.coeffs), r)
    return SpectralField(coeffs=basis.analyze(vals))


@dataclass(frozen=True)
class SpdeConfig:
    """Galerkin run plan.

    grid is the output grid (states are recorded at its points); each output
    interval is advanced with inner_steps explicit Euler substeps, which is
    the stability knob for the stiff high modes (dt ~ 1/lambda_K). q holds
    the K_noise diagonal noise weights; square-summability is automatic for
    finite K_noise but the values must be finite.
    """

    K: int
    r: float
    grid: TimeGrid
    M: int
    seed: int = 0
    K_noise: int = 0
    q: tuple = ()
    inner_steps: int = 1

    def __post_init__(self):
        if self.K < 1:
            raise ConfigError("need at least one mode")
        if not self.r > 1.0:
            raise ConfigError(f"porous-media exponent must satisfy r > 1, got {self.r}")
        if self.M < 1:
            raise ConfigError("need at least one field")
        if not (0 <= self.K_noise <= self.K):
            raise ConfigError(f"K_noise must lie in [0, K], got {self.K_noise}")
        q = tuple(float(v) for v in self.q)
        if len(q) != self.K_noise:
            raise ConfigError(f"need one noise weight per driven mode, got {len(q)}")
        if any(not np.isfinite(v) for v in q):
            raise ConfigError("noise weights must be finite")
        if self.inner_steps < 1:
            raise ConfigError("inner_steps must be >= 1")
        object.__setattr__(self, "q", q)


@dataclass(frozen=True, eq=False)
class FieldPathEnsemble:
    """Mode coefficients of M fields along the output grid: (M, n+1, K)."""

    grid: TimeGrid
    coeffs: np.ndarray
    r: float

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 3 or c.shape[1] != len(self.grid):
            raise ValueError(f"coefficients must be (M, {len(self.grid)}, K), got {c.shape}")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @property
    def M(self) -> int:
        return self.coeffs.shape[0]

    @property
    def K(self) -> int:
        return self.coeffs.shape[2]

    def field_at(self, i: int, k: int) -> SpectralField:
        return SpectralField(coeffs=self.coeffs[i, k])


def field_x0_single_mode(k: int = 1, amplitude: float = 1.0) -> Callable:
    """Deterministic start: every field is amplitude * sin(k pi x)."""

    def sampler(M: int, K: int, gen: np.random.Generator) -> np.ndarray:
        if k > K:
            raise ConfigError(f"initial mode {k} exceeds truncation K={K}")
        X = np.zeros((M, K))
        X[:, k - 1] = amplitude
        return X

    return sampler


def field_x0_smooth_random(scale: float = 1.0, decay: float = 2.0) -> Callable:
    """Random start with mode-k standard deviation scale / k^decay."""

    def sampler(M: int, K: int, gen: np.random.Generator) -> np.ndarray:
        sd = scale / np.arange(1, K + 1) ** decay
        return gen.standard_normal((M, K)) * sd

    return sampler


class SpdeSolver:
    """Explicit Euler-Maruyama in coefficient space for the ensemble."""

    def __init__(self, config: SpdeConfig):
        self.config = config
        self.lam = eigenvalues(config.K)
        self.basis = SineBasis(config.K, quad_points(config.K, config.r))
        self.qvec = np.asarray(config.q, dtype=float)

    def psi_hat(self, X: np.ndarray) -> np.ndarray:
        """Batched psi_apply on coefficient rows."""
        return self.basis.analyze(psi_pointwise(self.basis.synth(X), self.config.r))

    def step(self, X: np.ndarray, step_index: int, dt: float, t_next: float) -> np.ndarray:
        """One explicit substep for the whole ensemble (M, K)."""
        cfg = self.config
        # overflow on the way to blow-up is expected; it surfaces as the
        # structured error below, never as a warning or a silent NaN
        with np.errstate(over="ignore", invalid="ignore"):
            drift = -self.lam * self.psi_hat(X) + (X - X.mean(axis=0))
            X_next = X + dt * drift
            if cfg.K_noise:
                dB = rng.step_normals(cfg.seed, step_index,
                                      (X.shape[0], cfg.K_noise)) * np.sqrt(dt)
                X_next[:, :cfg.K_noise] += self.qvec * X[:, :cfg.K_noise] * dB
        if not np.isfinite(X_next).all():
            bad = np.argwhere(~np.isfinite(X_next))[0]
            raise BlowUpError(time=t_next, particle=int(bad[0]), mode=int(bad[1]) + 1)
        return X_next

    def solve(self, x0_sampler) -> FieldPathEnsemble:
        cfg = self.config
        gen0 = rng.stream(cfg.seed, rng.INIT, 0)
        X = np.asarray(x0_sampler(cfg.M, cfg.K, gen0), dtype=float)
        if X.shape != (cfg.M, cfg.K):
            raise ConfigError(f"field sampler returned {X.shape}, expected {(cfg.M, cfg.K)}")
        out = np.empty((cfg.M, cfg.grid.n + 1, cfg.K))
        out[:, 0] = X
        dt = cfg.grid.dt / cfg.inner_steps
        step = 0
        for k in range(cfg.grid.n):
            t_left = cfg.grid.points[k]
            for j in range(cfg.inner_steps):
                X = self.step(X, step, dt, t_left + (j + 1) * dt)
                step += 1
            out[:, k + 1] = X
        return FieldPathEnsemble(grid=cfg.grid, coeffs=out, r=cfg.r)


def spde_solve(config: SpdeConfig, x0_sampler) -> FieldPathEnsemble:
    """Evolve the ensemble of spectral fields; deterministic given config.seed."""
    return SpdeSolver(config).solve(x0_sampler)


@dataclass(frozen=True, eq=False)
class EnergyReport:
    """Variational energy statistics per field and ensemble-averaged.

    sup_h2[i] = sup over grid times of ||X_i||_H^2,
    int_lr[i] = trapezoid of ||X_i||_{L^{r+1}}^{r+1} over the grid,
    sup_hp[i] = sup over grid times of ||X_i||_H^p.
    """

    r: float
    p: float
    sup_h2: np.ndarray
    int_lr: np.ndarray
    sup_hp: np.ndarray

    @property
    def mean_sup_h2(self) -> float:
        return float(np.mean(self.sup_h2))

    @property
    def mean_int_lr(self) -> float:
        return float(np.mean(self.int_lr))

    @property
    def mean_sup_hp(self) -> float:
        return float(np.mean(self.sup_hp))


def energy_report(paths: FieldPathEnsemble, p: float = 2.0) -> EnergyReport:
    """Discrete-time quadrature of the a-priori energy quantities."""
    K = paths.K
    lam = eigenvalues(K)
    r_exp = paths.r + 1.0
    basis = SineBasis(K, quad_points(K, r_exp))
    h2 = np.sum(paths.coeffs ** 2 / lam, axis=2)            # (M, n+1)
    vals = paths.coeffs @ basis.S                           # (M, n+1, n_phys-1)
    lr = np.sum(np.abs(vals) ** r_exp, axis=2) * basis.quad_weight()
    int_lr = np.trapezoid(lr, paths.grid.points, axis=1)
    return EnergyReport(
        r=paths.r, p=p,
        sup_h2=h2.max(axis=1),
        int_lr=int_lr,
        sup_hp=(h2 ** (p / 2.0)).max(axis=1))


def fields_to_csv(paths: FieldPathEnsemble, path) -> None:
    """Write `time,field,mode,coeff` for every stored coefficient."""
    with open(path, "w", newline="") as fh:
        fh.write("time,field,mode,coeff\n")
        for k, tt in enumerate(paths.grid.points):
            t = float(tt)
            for i in range(paths.M):
                for mode in range(paths.K):
                    fh.write(f"{t!r},{i},{mode + 1},{float(paths.coeffs[i, k, mode])!r}\n")


def snapshots_to_csv(paths: FieldPathEnsemble, path, times: Sequence[float],
                     n_phys: int | None = None) -> None:
    """Write physical-space profiles `time,field,x,u` at the requested times."""
    n_phys = n_phys or quad_points(paths.K, paths.r + 1.0)
    basis = SineBasis(paths.K, n_phys)
    with open(path, "w", newline="") as fh:
        fh.write("time,field,x,u\n")
        for t_req in times:
            k = int(np.argmin(np.abs(paths.grid.points - t_req)))
            t = float(paths.grid.points[k])
            vals = basis.synth(paths.coeffs[:, k, :])
            for i in range(paths.M):
                fh.write(f"{t!r},{i},0.0,0.0\n")
                for x, u in zip(basis.x, vals[i]):
                    fh.write(f"{t!r},{i},{float(x)!r},{float(u)!r}\n")
                fh.write(f"{t!r},{i},1.0,0.0\n")
