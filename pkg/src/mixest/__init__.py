"""Online estimation of mixture weights over a fixed kernel dictionary by
stochastic mirror descent, with classical baselines and a benchmark harness."""

__version__ = "0.1.0"

from .baselines import eval_kde, eval_knn, fit_add_constant, fit_kde, fit_knn
from .bench import ExperimentConfig, load_config, run_experiment, sweep, verify_theorems
from .dictionary import (
    build_categorical,
    build_multiscale_gaussian,
    estimate_g_infinity,
    evaluate,
    stochastic_gradient,
)
from .estimators import (
    exp_smd_step,
    make_schedule,
    run_estimator,
    sgd_step,
    smd_step,
    softmax_sgd_baseline,
)
from .evaluation import (
    bound_proposition1,
    bound_theorem1,
    bound_theorem2,
    estimate_nu,
    fit_rate,
    kl_continuous,
    solve_best_in_class,
)
from .simplex import (
    EUCLIDEAN,
    NEGATIVE_ENTROPY,
    bregman_divergence,
    kl_divergence,
    project_simplex,
    r_phi,
)
from .targets import build_four_mode, build_sparse_categorical, build_wide_plus_spikes, density, sample

