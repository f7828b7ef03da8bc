"""Numerics for fractional-Brownian-motion driven equations: sampling, lifts,
sewing, Young and rough integration, the heat semigroup, solvers and the
verification experiments."""
from ._backend import BACKEND
from .errors import (Divergence, DivergenceWarning, EstimationFailure, InvalidArgument,
                     NumericalFailure, PrecisionFailure, RoughwaveError, UnsupportedDimension)
from .grids import (Germ, SamplePath, TimeGrid, additive_germ, delta, dyadic_pairs,
                    estimate_holder_exponent, holder_seminorm, increment, make_uniform_grid,
                    read_path_csv, write_path_csv)
from .fbm import (FbmSample, HistoryUpdateSplit, HurstParams, c_H, decompose_history_update,
                  fbm_covariance, kernel_sq_integral, resample_update, rho_squared, sample_fbm,
                  sample_paths, volterra_kernel, y_moment_check)
from .lift import (RoughPath, chen_defect, geometric_defect, lift_from_cells, lift_ito,
                   lift_piecewise_linear, lift_update_process, rough_path_distance,
                   rough_path_norm)
from .sewing import RateFit, SewingReport, germ_rate, sew, stochastic_germ_moments
from .integrators import (ControlledPath, ModifiedRoughDriver, controlled, controlled_norm,
                          driver_norm, integral_against_modified, modified_chen_defect,
                          modified_metric, remainder_rate, rough_integral, young_integral)
from .heat import (ConductanceMatrix, RidgeField, ScalarField, apply_semigroup, constant_field,
                   difference_check, dilate, heat_kernel, neg_holder_norm, regularisation_check)
from .solvers import (Coefficient, SolveResult, build_linearisation, holder_sigma,
                      linearisation_sides, mollify, solve_linear_modified, solve_rde, solve_yde,
                      threshold_gamma)
from .experiments import (ExperimentReport, exp_averaging_identity, exp_fbm_integral_rate,
                          exp_iterated_rates, exp_uniqueness)

__version__ = "0.1.0"
