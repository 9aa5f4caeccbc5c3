"""Generative mixture model of shot placement on the goal plane.

Shots are modeled as draws from a player-specific mixture of bivariate
Gaussians truncated at the ground, laid out on a fixed grid over the goal
mouth.  From the fitted mixture come two skill metrics (rb_postxg from a
player's shrunk weight profile, gen_postxg from per-shot responsibilities),
evaluated against goals-minus-xg baselines by split-half stability.
"""

__version__ = "0.1.0"

from .backend import BACKEND
from .errors import (
    ConvergenceError,
    DegenerateComponentError,
    DegenerateDataError,
    DegenerateTrajectoryError,
    InsufficientSampleError,
    InvalidInputError,
    InvalidParameterError,
    ModelHashMismatchError,
    PruneError,
    ShotmixError,
)
from .geometry import (
    DEFAULT_FRAME,
    GoalFrame,
    GoalPoint,
    TruncatedGaussian,
    acceptance_probability,
    in_goal_frame,
    sample,
    trunc_logpdf,
    trunc_pdf,
)
from .mixture import (
    GridSpec,
    MixtureComponent,
    MixtureModel,
    build_grid,
    fit_global_weights,
    fit_mixture,
    interpolate_covariance,
    model_hash,
    prune,
    prune_and_refit,
)
from .players import HierarchyConfig, PlayerWeights, fit_player_weights, log_likelihood_per_shot
from .preprocess import (
    CanonicalShot,
    Outcome,
    BodyPart,
    PipelineConfig,
    ShotRecord,
    correct_post_bias,
    preprocess_file,
    project_to_goal_line,
    reflect_left_footed,
    run_pipeline,
)
from .valuation import ComponentValue, PostXgModel, component_value, component_values, fit_postxg, postxg
from .metrics import MetricRow, MetricTable, compute_metrics, gen_postxg_shot, player_table, rb_postxg
from .evaluation import (
    PipelineSettings,
    StabilityReport,
    build_stability_report,
    run_full_pipeline,
    sensitivity_grid,
    split_half_correlations,
    threshold_sweep,
)
from .simulate import SimulationSpec, default_generator, simulate_corpus
