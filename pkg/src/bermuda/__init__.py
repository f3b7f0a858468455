"""Parallel Monte Carlo pricing of Bermudan options on one or many assets.

Two exercise-rule constructions are provided:

* ``iz`` -- parameterize the exercise boundary itself: per date and
  asset, solve the value-matching condition at a lattice of probe
  points and regress a quadratic surface through the solutions
  (Ibanez & Zapatero, 2004, style);
* ``cmc`` -- characterize the exercise *region*: label simulated states
  by the sign of (intrinsic - continuation) and fit a boosted-stump
  classifier per date (classification Monte Carlo, Picazo, 2002,
  style).

Either rule then prices by plain forward Monte Carlo. All phases run on
a deterministic master-worker engine: results are bit-identical for any
worker count at a fixed seed.
"""

from ._kernels import available_backends, get_backend
from .boosting import StumpEnsemble, TrainingSet, fit_ensemble, fit_stump
from .boundary_cmc import (CmcBuildConfig, CmcBuildReport, CmcRule,
                           build_cmc_rule, label_point, sample_training_points)
from .boundary_iz import (BoundaryPointJob, IzBoundary, IzBuildReport,
                          build_iz_boundary, continuation_value,
                          regress_boundary, solve_boundary_point)
from .engine import Engine, TaskPlan, WorkerReport, partition, run
from .lowdisc import SeedGrid, default_box, generate_glp
from .market import (BermudanSpec, ConfigError, MarketParams, PathState,
                     PayoffKind, bridge_sample, bridge_values, discount,
                     gbm_step, gbm_step_values, payoff, payoff_values)
from .oracle import (CrrResult, TreeSpec, bs_european, crr_price,
                     extract_exercise_threshold)
from .pricer import (CmcScoreRule, EuropeanRule, ImmediateAtDate, IzRule,
                     PriceEstimate, cmc_exercise_rule, iz_exercise_rule,
                     pool_moments, price)
from .rng import NormalStream, Phase, StreamKey, make_stream

__version__ = "0.1.0"
