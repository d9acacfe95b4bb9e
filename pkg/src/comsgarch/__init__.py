"""Regime-switching GARCH on irregular time grids.

Simulation, noise-injected iterative path selection, cross-validated
rate tuning, branch-tree volatility forecasting, and the verification
harnesses behind them.
"""

from .analysis import (
    PathEnumeration,
    StabilityResult,
    dispersion_product,
    ensemble_weight,
    enumerate_paths,
    exact_state_conditional,
    perturbation_gaps,
    stability_experiment,
    stability_ratio,
    state_bias,
    vol_rel_bias,
)
from .core import (
    default_sigma2_0,
    diff_series,
    gaussian_block_nll,
    neg_log_pseudo_likelihood,
    rho2_approx,
    rho2_exact,
    sigma2_next,
    stay_prob,
    transition_block_nll,
    transition_matrix,
    transition_prob,
    volatility_path,
)
from .crops import CropsConfig, CropsResult, IterationRecord, NoiseMask, bernoulli_ni, run_crops
from .errors import ComsGarchError, DomainError, ValidationError
from .forecast import ForecastState, forecast, forecast_tree
from .inference import (
    ConvergenceWarning,
    InferenceConfig,
    gibbs_sweep,
    joint_log_posterior,
    map_eta,
    map_theta,
    sample_state,
    state_conditional,
)
from .simulate import SimConfig, balanced_params, perturb, simulate
from .tuning import CvConfig, CvReport, interpolate_states, partition_folds, predict_y2, run_cv, select_rate
from .types import (
    DiffSeries,
    ObservedSeries,
    PivotalWindow,
    RegimeParams,
    StatePath,
    TransitionRates,
    VolatilitySeries,
)

__version__ = "0.1.0"
