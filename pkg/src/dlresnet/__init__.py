"""Deep linear residual networks trained by GD and SGD, with runtime checks
of the convergence conditions, step sizes and bounds that govern them."""

from .spectral import (SpectralStats, least_squares_map, numerical_rank,
                       singular_values, spectral_stats)
from .model import (Dataset, ResNetParams, end_to_end, forward, layer_factors, loss,
                    standard_linear_forward, zero_init)
from .gradients import (GradientSet, example_gradient, fd_gradient, full_gradient,
                        minibatch_gradient)
from .transforms import (ConditionReport, TransformSpec, build_transforms,
                         check_gd_condition, check_sgd_condition)
from .optimum import OptimalFit, fit_optimum, residual_decomposition
from .theory import (BoundReport, contraction_rate, lemma1_check, lemma2_check,
                     prop1_validate, width_requirement)
from .trainer import (Trace, TrainConfig, horizon, run_gd, run_sgd,
                      run_standard_baseline, sgd_schedule, step_size_gd, step_size_sgd)
from .config import ExperimentConfig
from .experiment import RunArtifact, gen_synthetic, run_experiment, sweep

__version__ = "0.1.0"
