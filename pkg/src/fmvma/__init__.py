"""Model averaging for censored linear regression after marginal screening."""

from .averaging import (AveragingProblem, WeightSolution, average_predict,
                        build_problem, info_criterion_weights,
                        optimize_weights_box, optimize_weights_simplex)
from .errors import (ConfigError, ConvergenceError, DegenerateSlicingError,
                     FMVMAError, InfiniteFitError, IngestionError,
                     InvalidArgumentError, LeverageOneError,
                     SingularDesignError, UndefinedMetricError,
                     UnsupportedOperationError, WeightUndefinedError)
from .pipeline import METHODS, build_candidates, fit_model_average, weigh
from .regression import CandidateFit, fit_candidates, hat_matrix, wls_fit
from .screening import (ScreeningResult, SlicingScheme, build_candidate_groups,
                        screen_fks, screen_fmv, screen_sis, uniform_slices)
from .simulation import SimulationConfig, generate_dataset, run_replications
from .survival import SurvivalDataset, ipcw_weights, kaplan_meier

__version__ = "0.1.0"

__all__ = [
    "AveragingProblem",
    "WeightSolution",
    "average_predict",
    "build_problem",
    "info_criterion_weights",
    "optimize_weights_box",
    "optimize_weights_simplex",
    "ConfigError",
    "ConvergenceError",
    "DegenerateSlicingError",
    "FMVMAError",
    "InfiniteFitError",
    "IngestionError",
    "InvalidArgumentError",
    "LeverageOneError",
    "SingularDesignError",
    "UndefinedMetricError",
    "UnsupportedOperationError",
    "WeightUndefinedError",
    "METHODS",
    "build_candidates",
    "fit_model_average",
    "weigh",
    "CandidateFit",
    "fit_candidates",
    "hat_matrix",
    "wls_fit",
    "ScreeningResult",
    "SlicingScheme",
    "build_candidate_groups",
    "screen_fks",
    "screen_fmv",
    "screen_sis",
    "uniform_slices",
    "SimulationConfig",
    "generate_dataset",
    "run_replications",
    "SurvivalDataset",
    "ipcw_weights",
    "kaplan_meier",
]
