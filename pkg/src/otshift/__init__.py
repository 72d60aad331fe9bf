"""Label-shift adaptation for probabilistic classifiers via optimal transport."""

from .adapter import Hierarchy, h_otter, otter, otter_transport, zero_shot
from .core import (
    CostMatrix,
    LabelDistribution,
    Predictions,
    ScoreMatrix,
    TransportPlan,
    argmax_labels,
    empirical_distribution,
    scores_to_cost,
    validate_scores,
)
from .diagnostics import (
    PerturbationReport,
    accuracy,
    empirical_kappa,
    perturbation_report,
    recall_std,
)
from .reweight import (
    PmFit,
    PmSelection,
    ReweightVector,
    RotterFit,
    apply_reweight,
    fit_prior_matching,
    fit_rotter,
    grid_search_pm,
    pm_predict,
    reweight_predict,
    temper_scores,
)
from .shift_est import (
    ConfusionMatrix,
    bbse_estimate,
    estimation_error,
    soft_confusion,
)
from .solver import (
    LpDiagnostics,
    SinkhornDiagnostics,
    TransportProblem,
    plan_to_predictions,
    solve_entropic,
    solve_exact,
)
from .synthlab import (
    GaussianMixtureSpec,
    LogisticModel,
    SweepConfig,
    SweepRow,
    adversarial_interpolation,
    bayes_predict,
    calibrated_scores,
    default_target_grid,
    fit_logistic,
    model_scores,
    perturb_distribution,
    perturb_scores,
    run_shift_sweep,
    sample_mixture,
    sweep_to_csv,
)

__version__ = "0.1.0"
