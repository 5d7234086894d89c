"""Sparse variational Bayesian MLPs with spike-and-slab node selection.

The package trains mean-field variational networks whose hidden nodes carry
Bernoulli inclusion indicators relaxed through a coupled binary
Gumbel-softmax, computes the theory-driven layer-wise prior inclusion
probabilities, and ships the simulation benchmarks plus a CLI
(``nodeslab hyper | simulate | train | eval | export``).
"""

from .data import Dataset, gen_sim1, gen_sim2, load_csv, save_csv, split, standardize
from .evaluate import (
    MetricsReport,
    accuracy,
    node_weight_summary,
    predict_posterior_mean,
    rmse,
    sparsity_estimate,
)
from .model import (
    Architecture,
    Gradients,
    PriorConfig,
    RealizedSample,
    VariationalState,
    draw_sample,
    forward,
    init_state,
    loss_and_gradients,
)
from .numerics import RandomStream
from .objective import LossBreakdown, negative_elbo
from .priors import PriorReport, build_prior_report
from .trainer import (
    PRESETS,
    AdamConfig,
    TraceLog,
    TrainConfig,
    TrainingDivergedError,
    load_checkpoint,
    median_sparsity_over_window,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AdamConfig",
    "Architecture",
    "Dataset",
    "Gradients",
    "LossBreakdown",
    "MetricsReport",
    "PRESETS",
    "PriorConfig",
    "PriorReport",
    "RandomStream",
    "RealizedSample",
    "TraceLog",
    "TrainConfig",
    "TrainingDivergedError",
    "VariationalState",
    "accuracy",
    "build_prior_report",
    "draw_sample",
    "forward",
    "gen_sim1",
    "gen_sim2",
    "init_state",
    "load_checkpoint",
    "load_csv",
    "loss_and_gradients",
    "median_sparsity_over_window",
    "negative_elbo",
    "node_weight_summary",
    "predict_posterior_mean",
    "rmse",
    "save_checkpoint",
    "save_csv",
    "sparsity_estimate",
    "split",
    "standardize",
    "train",
]
