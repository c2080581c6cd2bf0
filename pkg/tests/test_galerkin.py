"""Tests for the spectral basis, the nonlinearity, and the SPDE ensemble."""

import numpy as np
import pytest

from mvlab import (BlowUpError, SpdeConfig, SpectralField, TimeGrid,
                   energy_report, psi_apply, psi_pointwise, spde_solve)
from mvlab.galerkin import (SineBasis, field_x0_single_mode,
                            field_x0_smooth_random, fields_to_csv,
                            quad_points, snapshots_to_csv)


def test_round_trip_transform_identity():
    rng = np.random.default_rng(0)
    for K in (4, 16, 64):
        basis = SineBasis(K, quad_points(K, 3.0))
        coeffs = rng.standard_normal(K)
        back = basis.analyze(basis.synth(coeffs))
        assert np.max(np.abs(back - coeffs)) <= 1e-10


def test_psi_apply_zero_and_identity_limit():
    zero = SpectralField(coeffs=np.zeros(8))
    out = psi_apply(zero, 2.0)
    assert np.all(out.coeffs == 0.0)
    rng = np.random.default_rng(1)
    field = SpectralField(coeffs=rng.standard_normal(16) / np.arange(1, 17))
    ident = psi_apply(field, 1.0)
    assert np.max(np.abs(ident.coeffs - field.coeffs)) <= 1e-8


def test_psi_apply_single_mode_against_quadrature_oracle():
    # mode-1 coefficient of |sin| sin is 2 * int_0^1 sin^3 = 8 / (3 pi)
    field = SpectralField(coeffs=np.array([1.0] + [0.0] * 31))
    out = psi_apply(field, 2.0)
    xs = np.linspace(0.0, 1.0, 10**4 + 1)
    u = np.sin(np.pi * xs)
    oracle = np.trapezoid(2.0 * np.abs(u) * u * np.sin(np.pi * xs), xs)
    assert out.coeffs[0] == pytest.approx(8.0 / (3.0 * np.pi), abs=1e-6)
    assert out.coeffs[0] == pytest.approx(oracle, abs=1e-6)


def test_psi_monotonicity_with_sharp_constant():
    rng = np.random.default_rng(2)
    for r in (1.5, 2.0, 3.0):
        a = rng.normal(scale=3.0, size=10**4)
        b = rng.normal(scale=3.0, size=10**4)
        lhs = (psi_pointwise(a, r) - psi_pointwise(b, r)) * (a - b)
        assert np.all(lhs >= 0.0)
        rhs = 2.0 ** (1.0 - r) * np.abs(a - b) ** (r + 1.0)
        assert np.all(lhs >= rhs * (1.0 - 1e-12) - 1e-300)


def test_field_norms_single_mode():
    field = SpectralField(coeffs=np.array([1.0] + [0.0] * 7))
    assert field.h_norm_sq() == pytest.approx(1.0 / np.pi**2)
    assert field.l2_norm_sq() == pytest.approx(1.0)
    # ||sin(pi x)||_{L3}^3 = int sin^3 = 4/(3 pi)
    assert field.lr_norm(3.0) ** 3 == pytest.approx(4.0 / (3.0 * np.pi), rel=1e-5)


def make_config(K=16, M=4, T=0.1, n=20, inner=None, seed=0, noise=True, r=2.0):
    lam_max = (K * np.pi) ** 2
    if inner is None:
        inner = max(1, int(np.ceil((T / n) * lam_max / 0.5)))
    K_noise = min(4, K) if noise else 0
    q = tuple(0.5 / k for k in range(1, K_noise + 1))
    return SpdeConfig(K=K, r=r, grid=TimeGrid(T, n), M=M, seed=seed,
                      K_noise=K_noise, q=q, inner_steps=inner)


def test_zero_initial_field_stays_zero():
    cfg = make_config()
    paths = spde_solve(cfg, lambda M, K, gen: np.zeros((M, K)))
    assert np.all(paths.coeffs == 0.0)


def test_single_field_has_no_interaction():
    # M = 1: the ensemble mean is the field itself, and with the noise off
    # the dynamics reduce to the deterministic porous-media decay
    cfg = make_config(M=1, noise=False)
    paths = spde_solve(cfg, field_x0_single_mode())
    h2 = [paths.field_at(0, k).h_norm_sq() for k in range(cfg.grid.n + 1)]
    assert h2[0] == pytest.approx(1.0 / np.pi**2)
    assert all(np.diff(h2) <= 1e-12)  # dissipative without interaction/noise
    # one substep equals the pure decay update X + dt * (-lam * psi_hat(X))
    from mvlab.galerkin import SpdeSolver, eigenvalues
    solver = SpdeSolver(cfg)
    X0 = np.zeros((1, cfg.K))
    X0[0, 0] = 1.0
    stepped = solver.step(X0, 0, cfg.grid.dt, cfg.grid.dt)
    by_hand = X0 + cfg.grid.dt * (-eigenvalues(cfg.K) * solver.psi_hat(X0))
    np.testing.assert_array_equal(stepped, by_hand)


def test_spde_deterministic_given_seed():
    cfg = make_config(seed=42)
    a = spde_solve(cfg, field_x0_smooth_random())
    b = spde_solve(cfg, field_x0_smooth_random())
    np.testing.assert_array_equal(a.coeffs, b.coeffs)


def test_spde_blowup_reports_field_and_mode():
    # a huge step size makes the stiff top mode overshoot to infinity
    cfg = SpdeConfig(K=32, r=2.0, grid=TimeGrid(1.0, 12), M=2, seed=1,
                     inner_steps=1)
    with pytest.raises(BlowUpError) as err:
        spde_solve(cfg, lambda M, K, gen: np.full((M, K), 1.0))
    assert err.value.particle is not None
    assert err.value.mode is not None


def test_energy_report_zero_paths():
    cfg = make_config(M=3, noise=False)
    paths = spde_solve(cfg, lambda M, K, gen: np.zeros((M, K)))
    rep = energy_report(paths)
    assert rep.mean_sup_h2 == 0.0 and rep.mean_int_lr == 0.0 and rep.mean_sup_hp == 0.0


def test_energy_report_constant_single_mode():
    # constant-in-time sin(pi x): sup ||u||_H^2 = 1/pi^2 and
    # int_0^T ||u||_{L3}^3 dt = T * 4/(3 pi)
    grid = TimeGrid(0.5, 10)
    from mvlab import FieldPathEnsemble
    coeffs = np.zeros((2, len(grid), 8))
    coeffs[:, :, 0] = 1.0
    paths = FieldPathEnsemble(grid=grid, coeffs=coeffs, r=2.0)
    rep = energy_report(paths, p=4.0)
    assert rep.mean_sup_h2 == pytest.approx(1.0 / np.pi**2)
    assert rep.mean_int_lr == pytest.approx(0.5 * 4.0 / (3.0 * np.pi), rel=1e-5)
    assert rep.mean_sup_hp == pytest.approx((1.0 / np.pi**2) ** 2)


def test_energy_invariant_under_field_relabeling():
    cfg = make_config(M=5, seed=7)
    paths = spde_solve(cfg, field_x0_smooth_random())
    rep = energy_report(paths)
    from mvlab import FieldPathEnsemble
    perm = np.random.default_rng(0).permutation(cfg.M)
    rep2 = energy_report(FieldPathEnsemble(grid=cfg.grid,
                                           coeffs=paths.coeffs[perm], r=cfg.r))
    assert rep.mean_sup_h2 == pytest.approx(rep2.mean_sup_h2, rel=1e-14)
    assert rep.mean_int_lr == pytest.approx(rep2.mean_int_lr, rel=1e-14)


def test_field_csv_outputs(tmp_path):
    cfg = make_config(K=4, M=2, n=5)
    paths = spde_solve(cfg, field_x0_single_mode())
    f1 = tmp_path / "fields.csv"
    fields_to_csv(paths, f1)
    assert f1.read_text().splitlines()[0] == "time,field,mode,coeff"
    f2 = tmp_path / "snap.csv"
    snapshots_to_csv(paths, f2, times=[0.0, cfg.grid.T])
    lines = f2.read_text().splitlines()
    assert lines[0] == "time,field,x,u"
    assert len(lines) > 10


def test_spde_config_validation():
    grid = TimeGrid(0.1, 10)
    from mvlab import ConfigError
    with pytest.raises(ConfigError):
        SpdeConfig(K=8, r=1.0, grid=grid, M=2)  # r must exceed 1
    with pytest.raises(ConfigError):
        SpdeConfig(K=8, r=2.0, grid=grid, M=2, K_noise=9)
    with pytest.raises(ConfigError):
        SpdeConfig(K=8, r=2.0, grid=grid, M=2, K_noise=2, q=(0.1,))
