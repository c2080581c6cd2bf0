"""Tests for the coefficient zoo and the numeric assumption checkers."""

import numpy as np
import pytest

from mvlab import (ParticleEnsemble, SamplerConfig, bounded_sin_tanh,
                   check_assumption, cucker_smale, curie_weiss, dirac,
                   dorsogna, model_bounded_sin, model_cubic, model_granular,
                   model_kinetic, model_linear_meanfield, model_plasma)
from mvlab.models import CoefficientModel, abs_moment


def ens(*points, weights=None):
    return ParticleEnsemble(states=np.atleast_2d(np.asarray(points, float)).T
                            if np.ndim(points[0]) == 0 else np.asarray(points, float),
                            weights=weights)


# ---------------------------------------------------------------------------
# Model zoo examples
# ---------------------------------------------------------------------------

def test_cubic_examples():
    m = model_cubic(p=1.0)
    mu = dirac([2.0])
    assert m.drift(0.0, [1.0], mu) == pytest.approx([-2.0])
    np.testing.assert_allclose(m.diffusion(0.0, [1.0], mu), [[1.0]])
    assert m.drift(0.0, [0.0], mu) == pytest.approx([0.0])
    np.testing.assert_allclose(m.diffusion(0.0, [0.0], mu), [[0.0]])
    m2 = model_cubic(p=2.0)
    half = ens(0.0, 2.0)
    assert m2.drift(0.0, [2.0], half) == pytest.approx([-16.0])
    with pytest.raises(ValueError):
        model_cubic(p=0.5)


def test_cubic_batch_matches_single():
    m = model_cubic(p=2.0)
    mu = ens(0.5, -1.0, 2.0)
    X = np.array([[0.3], [-1.2], [2.0]])
    batch = m.drift(0.0, X, mu)
    singles = np.stack([m.drift(0.0, x, mu) for x in X])
    np.testing.assert_array_equal(batch, singles)


def test_granular_curie_weiss_examples():
    m = curie_weiss(beta=1.0, K=1.0)
    assert m.drift(0.0, [0.0], dirac([0.0])) == pytest.approx([1.0])
    assert m.drift(0.0, [1.0], dirac([1.0])) == pytest.approx([1.0])
    np.testing.assert_allclose(m.diffusion(0.0, [0.3], dirac([0.0])), [[np.sqrt(2.0)]])
    assert m.summary_hook == ()  # affine interaction: no measure dependence


def test_granular_generic_matches_curie_weiss_closed_form():
    beta, K = 0.7, 1.3
    generic = model_granular(
        grad_v=lambda x: beta * (x**3 - x),
        grad_w=lambda u: np.full_like(u, -beta * K))
    preset = curie_weiss(beta=beta, K=K)
    mu = ens(-0.4, 0.9, 2.0)
    X = np.array([[0.0], [1.0], [-2.0]])
    np.testing.assert_allclose(generic.drift(0.0, X, mu),
                               preset.drift(0.0, X, mu), atol=1e-12)


def test_granular_zero_potentials():
    m = model_granular(grad_v=lambda x: np.zeros_like(x),
                       grad_w=lambda u: np.zeros_like(u), noise_scale=1.0)
    mu = ens(1.0, 2.0)
    assert m.drift(0.0, [5.0], mu) == pytest.approx([0.0])
    np.testing.assert_allclose(m.diffusion(0.0, [5.0], mu), [[np.sqrt(2.0)]])


def test_plasma_cucker_smale_examples():
    m0 = cucker_smale(beta=0.0)
    assert m0.drift(0.0, [7.0], dirac([3.0])) == pytest.approx([-3.0])
    m1 = cucker_smale(beta=1.0)
    assert m1.drift(0.0, [1.0], dirac([2.0])) == pytest.approx([-1.0])
    centered = ens(-1.0, 1.0)
    assert m0.drift(0.0, [4.0], centered) == pytest.approx([0.0], abs=1e-15)
    with pytest.raises(ValueError):
        cucker_smale(beta=-1.0)


def test_plasma_generic_pairwise_matches_preset():
    beta = 1.0
    generic = model_plasma(
        grad_v=lambda x: np.zeros_like(x),
        grad_xw=lambda x, z: z / (1.0 + np.sum(x**2, axis=-1, keepdims=True))**beta)
    preset = cucker_smale(beta=beta)
    mu = ens(0.5, -2.0, 1.0)
    X = np.array([[0.0], [1.5], [-0.3]])
    np.testing.assert_allclose(generic.drift(0.0, X, mu),
                               preset.drift(0.0, X, mu), atol=1e-12)


def test_kinetic_examples():
    free = model_kinetic(grad_u=lambda x: np.zeros_like(x),
                         grad_w=lambda u: np.zeros_like(u))
    mu = dirac([0.0, 0.0])
    assert free.drift(0.0, [0.0, 1.0], mu) == pytest.approx([1.0, -1.0])
    # position block of the drift equals the velocity block of the state
    rng = np.random.default_rng(5)
    X = rng.standard_normal((10, 2))
    mu10 = ParticleEnsemble(states=rng.standard_normal((6, 2)))
    m = dorsogna(C1=1.0, C2=0.5, l1=1.0, l2=2.0)
    np.testing.assert_array_equal(m.drift(0.0, X, mu10)[:, :1], X[:, 1:])
    # all atoms at the same position: radial symmetry kills the interaction
    same = ParticleEnsemble(states=np.tile([[0.7, 0.0]], (4, 1)))
    d = dorsogna(C1=2.0, C2=1.0, l1=1.0, l2=3.0)
    assert d.drift(0.0, [0.7, 0.0], same)[1] == pytest.approx(-0.0, abs=1e-15)
    # hand-differentiated Morse kernel at x=1 against a point mass at 0
    d2 = dorsogna(C1=1.0, C2=0.0, l1=1.0)
    val = d2.drift(0.0, [1.0, 0.5], dirac([0.0, 0.0]))
    assert val[1] == pytest.approx(-0.5 - 2.0 * np.exp(-1.0))
    # diffusion acts on the velocity block only
    sig = d2.diffusion(0.0, [1.0, 0.5], dirac([0.0, 0.0]))
    np.testing.assert_allclose(sig, [[0.0], [np.sqrt(2.0)]])


def test_bounded_sin_examples():
    zero_kernel = model_bounded_sin(lambda x, z: np.zeros(np.broadcast_shapes(x.shape, z.shape)))
    mu = dirac([0.0])
    assert zero_kernel.drift(0.0, [1.0], mu) == pytest.approx([0.0])
    np.testing.assert_allclose(zero_kernel.diffusion(0.0, [0.0], mu), [[0.0]])
    tanh_model = bounded_sin_tanh()
    assert tanh_model.drift(0.0, [3.0], dirac([0.0])) == pytest.approx([0.0])
    np.testing.assert_allclose(tanh_model.diffusion(0.0, [np.pi / 2], mu), [[1.0]])


def test_linear_meanfield_coefficients():
    m = model_linear_meanfield(a=-1.0, c=0.5, s=0.3)
    mu = ens(0.0, 2.0)  # mean 1
    assert m.drift(0.0, [2.0], mu) == pytest.approx([-2.0 + 0.5])
    np.testing.assert_allclose(m.diffusion(0.0, [2.0], mu), [[0.3]])


def test_zoo_continuity_probes():
    # finite-difference continuity in the state at random points
    rng = np.random.default_rng(23)
    mu = ParticleEnsemble(states=rng.standard_normal((16, 1)))
    mu2 = ParticleEnsemble(states=rng.standard_normal((16, 2)))
    cases = [(model_cubic(2.0), mu), (curie_weiss(), mu), (cucker_smale(1.0), mu),
             (bounded_sin_tanh(), mu), (model_linear_meanfield(-1, 0.5, 0.3), mu),
             (dorsogna(), mu2)]
    for model, measure in cases:
        for _ in range(20):
            x = rng.standard_normal(model.d)
            h = 1e-6 * rng.standard_normal(model.d)
            jump = np.linalg.norm(model.drift(0.0, x + h, measure)
                                  - model.drift(0.0, x, measure))
            scale = 1.0 + np.linalg.norm(model.drift(0.0, x, measure))
            assert jump <= 1e-3 * scale * (1 + np.linalg.norm(x)**3)


# ---------------------------------------------------------------------------
# Assumption checking
# ---------------------------------------------------------------------------

def test_linear_meanfield_coercivity_constant():
    a, c, s = -1.0, 0.5, 0.3
    m = model_linear_meanfield(a, c, s)
    rep = check_assumption(m, "A3", SamplerConfig(points_per_radius=32), seed=1)
    assert rep.ok
    # 2<ax + c mean, x> + s^2 <= (|a| + |c| + s^2 + 1)(1 + x^2 + mu(|.|^2))
    assert rep.constant <= abs(a) + abs(c) + s**2 + 1.0


def test_cubic_coercivity_sign_structure():
    rep = check_assumption(model_cubic(2.0), "A3",
                           SamplerConfig(points_per_radius=32), seed=2)
    assert rep.ok
    assert rep.constant <= 1.0 + 1e-12  # drift term is dissipative, sigma = x


def test_flipped_cubic_violates_monotonicity():
    good = model_cubic(2.0)
    bad = CoefficientModel(
        id="cubic_flipped", d=1, m=1, kappa=good.kappa,
        drift_fn=lambda t, X, mu: (X**3) * mu.moment(2.0),
        diffusion_fn=good.diffusion_fn, summary_hook=(abs_moment(2.0),))
    cfg = SamplerConfig(radii=(50.0,), points_per_radius=64, constant_cap=1e3)
    rep = check_assumption(bad, "A2", cfg, seed=3)
    assert not rep.ok
    assert len(rep.violations) > 0
    # the honest sign passes under the same cap
    rep_good = check_assumption(good, "A2", cfg, seed=3)
    assert rep_good.ok


def test_cubic_growth_holds_with_declared_kappa():
    rep = check_assumption(model_cubic(2.0), "A4",
                           SamplerConfig(points_per_radius=48), seed=4)
    assert rep.ok
    assert np.isfinite(rep.constant)


def test_a2ppp_finite_for_curie_weiss():
    rep = check_assumption(curie_weiss(), "A2'''",
                           SamplerConfig(points_per_radius=32), seed=5)
    assert rep.ok


def test_check_assumption_deterministic_and_validates_id():
    m = model_linear_meanfield(-1.0, 0.5, 0.3)
    r1 = check_assumption(m, "A3", SamplerConfig(points_per_radius=16), seed=9)
    r2 = check_assumption(m, "A3", SamplerConfig(points_per_radius=16), seed=9)
    assert r1.constant == r2.constant
    assert r1.per_radius == r2.per_radius
    with pytest.raises(ValueError):
        check_assumption(m, "A5")


def test_report_invariant_violations_iff_capped():
    m = model_linear_meanfield(-1.0, 0.5, 0.3)
    rep = check_assumption(m, "A3", SamplerConfig(points_per_radius=16), seed=9)
    assert rep.ok == (np.isfinite(rep.constant)
                      and rep.constant <= SamplerConfig().constant_cap)
