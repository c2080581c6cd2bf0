"""mvlab: a numerical laboratory for mean-field SDEs and SPDEs.

Particle approximations of distribution-dependent stochastic equations
(frozen-measure Euler and interacting-particle schemes), empirical
probability metrics, small-noise rate-function experiments, and a spectral
Galerkin solver for a mean-field stochastic porous-media system, together
with the property tests that pin the quantitative estimates down at desk
scale.
"""

__version__ = "0.1.0"

from .errors import (BlowUpError, ConfigError, DimensionMismatchError,
                     GridMismatchError, MvlabError)
from .grids import TimeGrid
from .measures import (ParticleEnsemble, Path, PathEnsemble, dirac,
                       local_path_w2, moment, wasserstein_p,
                       weighted_variation_2)
from .models import (AssumptionReport, CoefficientModel, SamplerConfig,
                     bounded_sin_tanh, check_assumption, cucker_smale,
                     curie_weiss, dorsogna, model_bounded_sin, model_brownian,
                     model_cubic, model_granular, model_kinetic,
                     model_linear_meanfield, model_plasma, model_zero,
                     scale_diffusion)
from .solvers import (MeasureFlow, NoisePath, SolverConfig, decoupled_solve,
                      euler_frozen_measure, flow_from_binary, flow_to_binary,
                      flow_to_csv, holder_increment_stats,
                      interacting_particles, paths_from_binary,
                      paths_to_binary, paths_to_csv, x0_constant, x0_gaussian)
from .ldp import (Control, ExitEvent, RateEstimate, control_convergence_probe,
                  limit_ode, rate_function_hit_level, rate_of_control,
                  skeleton_solve, small_noise_experiment)
from .galerkin import (EnergyReport, FieldPathEnsemble, SpdeConfig,
                       SpectralField, energy_report, psi_apply, psi_pointwise,
                       spde_solve)
