"""Prediction metrics and perturbation-stability reporting.

The perturbation report decomposes how far a solved transport instance moved
after its inputs were disturbed: input-side terms (demand change, cost
increases, dual-pairing suboptimality) against output-side terms (plan and
dual distances). Their ratio is an empirical stability constant; the true
worst-case constant is not computable, so the ratio is tracked per instance
pair instead of asserted against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Predictions
from .errors import DimensionMismatch, MissingClass
from .solver import TransportPlan, TransportProblem


def accuracy(pred: Predictions, truth: Predictions) -> float:
    """Fraction of matching labels."""
    if pred.labels.shape[0] != truth.labels.shape[0]:
        raise DimensionMismatch(
            f"{pred.labels.shape[0]} predictions for "
            f"{truth.labels.shape[0]} truths"
        )
    return float((pred.labels == truth.labels).mean())


def recall_std(pred: Predictions, truth: Predictions, k: int) -> float:
    """Population standard deviation of per-class recalls, in points.

    Every class must appear in the truth, otherwise its recall is undefined.
    A balanced classifier scores 0; predicting one class everywhere on
    balanced binary truth scores 50.
    """
    if pred.labels.shape[0] != truth.labels.shape[0]:
        raise DimensionMismatch(
            f"{pred.labels.shape[0]} predictions for "
            f"{truth.labels.shape[0]} truths"
        )
    counts = np.bincount(truth.labels - 1, minlength=k)[:k]
    if counts.min() == 0:
        missing = int(np.argmin(counts)) + 1
        raise MissingClass(f"class {missing} absent from the truth labels")
    hits = np.bincount(
        (truth.labels - 1)[pred.labels == truth.labels], minlength=k
    )[:k]
    recalls = hits / counts
    return float(recalls.std() * 100.0)


@dataclass(frozen=True)
class PerturbationReport:
    """Single-pair stability decomposition.

    The squared-distance fields are sums of squares and so nonnegative by
    construction. suboptimality is the signed pairing residual
    <C, plan_pert> - (mu . u_pert + nu . v_pert); it is nonnegative when the
    perturbation does not increase any cost entry, but a cost increase can
    drive it below zero, which is why it enters the bracket squared.
    """

    delta_nu_sq: float
    delta_c_pos_sq: float
    suboptimality: float
    plan_distance_sq: float
    dual_distance_sq: float

    @property
    def bracket(self) -> float:
        return self.delta_nu_sq + self.delta_c_pos_sq + self.suboptimality**2


def perturbation_report(
    base_problem: TransportProblem,
    base_plan: TransportPlan,
    pert_problem: TransportProblem,
    pert_plan: TransportPlan,
) -> PerturbationReport:
    """Compare a solved instance with a solved perturbation of it.

    Both plans must come from the exact solver so that the dual fields are
    true LP potentials. Deltas are perturbed minus base.
    """
    if base_problem.cost.values.shape != pert_problem.cost.values.shape:
        raise DimensionMismatch(
            f"shapes {base_problem.cost.values.shape} and "
            f"{pert_problem.cost.values.shape} differ"
        )
    c_base = base_problem.cost.values
    c_pert = pert_problem.cost.values
    delta_nu = pert_problem.col_masses - base_problem.col_masses
    delta_c_pos = np.clip(c_pert - c_base, 0.0, None)
    pairing = float(
        base_problem.row_masses @ pert_plan.row_duals
        + base_problem.col_masses @ pert_plan.col_duals
    )
    subopt = float((c_base * pert_plan.coupling).sum()) - pairing
    plan_d = float(((base_plan.coupling - pert_plan.coupling) ** 2).sum())
    dual_d = float(
        ((base_plan.row_duals - pert_plan.row_duals) ** 2).sum()
        + ((base_plan.col_duals - pert_plan.col_duals) ** 2).sum()
    )
    return PerturbationReport(
        delta_nu_sq=float((delta_nu**2).sum()),
        delta_c_pos_sq=float((delta_c_pos**2).sum()),
        suboptimality=subopt,
        plan_distance_sq=plan_d,
        dual_distance_sq=dual_d,
    )


def empirical_kappa(report: PerturbationReport):
    """Smallest stability constant consistent with this pair, or None.

    Solves kappa^2 * bracket = plan_distance_sq + dual_distance_sq for
    kappa. With a zero bracket (identical inputs) the ratio is 0/0 and no
    value is defined.
    """
    if report.bracket == 0.0:
        return None
    return float(
        np.sqrt(
            (report.plan_distance_sq + report.dual_distance_sq)
            / report.bracket
        )
    )
