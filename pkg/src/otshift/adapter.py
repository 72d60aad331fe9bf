"""Rebalancing classifier predictions toward a target label distribution.

The central operation takes a score matrix and a target distribution, casts
prediction as a transportation problem (each sample carries mass 1/n, each
class demands its target share, moving sample i to class j costs
-log score), solves it, and reads labels off the plan by row argmax.  When
the target distribution equals the empirical distribution of the plain
argmax predictions, the result provably coincides with plain argmax; when
it reflects the deployment-time class balance, predictions are corrected
for label shift.

A two-stage hierarchical variant first assigns superclass labels, then
rebalances within each induced partition using per-group conditional
distributions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    COST_CLAMP,
    LabelDistribution,
    Predictions,
    ScoreMatrix,
    argmax_labels,
    scores_to_cost,
    validate_scores,
)
from .errors import DimensionMismatch, EmptyPartition, ValidationError
from .solver import TransportProblem, solve_entropic, solve_exact


def zero_shot(scores: ScoreMatrix) -> Predictions:
    """Plain per-row argmax of the scores; ties go to the lowest class."""
    return Predictions(labels=argmax_labels(scores.probs), k=scores.k,
                       method="zero-shot")


def _balanced_problem(scores: ScoreMatrix, nu_hat: LabelDistribution,
                      clamp_eps: float) -> TransportProblem:
    if scores.k != nu_hat.k:
        raise DimensionMismatch(
            f"scores have {scores.k} classes but the target distribution has "
            f"{nu_hat.k}"
        )
    cost = scores_to_cost(scores, clamp_eps)
    row = np.full(scores.n, 1.0 / scores.n)
    col = np.asarray(nu_hat.probs, float)
    # absorb the (bounded by 1e-9) simplex slack so the problem balances to
    # machine precision
    col = col * (row.sum() / col.sum())
    return TransportProblem(cost=cost, row_masses=row, col_masses=col)


def otter_transport(scores: ScoreMatrix, nu_hat: LabelDistribution,
                    solver: str = "exact", clamp_eps: float = COST_CLAMP,
                    reg: float = 0.05, max_iter: int = 5000,
                    tol: float = 1e-9, mode: str = "auto"):
    """Build and solve the rebalancing transport problem.

    Returns ``(problem, plan, diagnostics)`` so callers can inspect duals
    and certificates; most users want :func:`otter` instead.
    """
    problem = _balanced_problem(scores, nu_hat, clamp_eps)
    if solver == "exact":
        plan, diag = solve_exact(problem)
    elif solver == "entropic":
        plan, diag = solve_entropic(problem, reg=reg, max_iter=max_iter,
                                    tol=tol, mode=mode)
    else:
        raise ValidationError(f"unknown solver {solver!r}")
    return problem, plan, diag


def otter(scores: ScoreMatrix, nu_hat: LabelDistribution,
          solver: str = "exact", clamp_eps: float = COST_CLAMP,
          reg: float = 0.05, max_iter: int = 5000, tol: float = 1e-9,
          mode: str = "auto") -> Predictions:
    """Predictions rebalanced to (approximately) match ``nu_hat``.

    The empirical distribution of the output can deviate from ``nu_hat`` by
    at most k/(2n) in total variation (argmax splits at most k-1 fractional
    rows of an exact plan) plus solver tolerance.
    """
    _, plan, _ = otter_transport(scores, nu_hat, solver=solver,
                                 clamp_eps=clamp_eps, reg=reg,
                                 max_iter=max_iter, tol=tol, mode=mode)
    return Predictions(labels=argmax_labels(plan.coupling), k=scores.k,
                       method="otter")


@dataclass(frozen=True)
class Hierarchy:
    """A partition of the k subclasses into disjoint superclass groups.

    ``groups`` holds 1-based subclass indices; together the groups must
    cover 1..k exactly once.
    """

    groups: tuple

    def __post_init__(self):
        try:
            groups = tuple(tuple(int(i) for i in g) for g in self.groups)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"malformed hierarchy groups: {exc}") from exc
        if not groups:
            raise ValidationError("hierarchy needs at least one group")
        if any(len(g) == 0 for g in groups):
            raise ValidationError("hierarchy groups must be nonempty")
        flat = [i for g in groups for i in g]
        k = len(flat)
        if sorted(flat) != list(range(1, k + 1)):
            raise ValidationError(
                "hierarchy groups must partition 1..k exactly (disjoint and "
                "exhaustive)"
            )
        object.__setattr__(self, "groups", groups)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def k(self) -> int:
        return sum(len(g) for g in self.groups)

    def super_label_of(self) -> np.ndarray:
        """Map from 1-based subclass index to 1-based group index."""
        out = np.zeros(self.k + 1, dtype=np.int64)
        for gi, g in enumerate(self.groups, start=1):
            for sub in g:
                out[sub] = gi
        return out


def super_scores(scores: ScoreMatrix, hierarchy: Hierarchy) -> ScoreMatrix:
    """Default superclass scores: within-group sums of subclass scores."""
    if scores.k != hierarchy.k:
        raise DimensionMismatch(
            f"scores have {scores.k} classes but hierarchy covers {hierarchy.k}"
        )
    cols = [scores.probs[:, [i - 1 for i in g]].sum(axis=1)
            for g in hierarchy.groups]
    return validate_scores(np.stack(cols, axis=1))


def h_otter(s_sub: ScoreMatrix, hierarchy: Hierarchy,
            nu_super: LabelDistribution, nu_sub_given_super,
            s_super: ScoreMatrix | None = None, solver: str = "exact",
            clamp_eps: float = COST_CLAMP, reg: float = 0.05,
            max_iter: int = 5000, tol: float = 1e-9,
            mode: str = "auto") -> Predictions:
    """Two-stage rebalancing: superclasses first, then within each group.

    ``nu_sub_given_super`` is a sequence of per-group conditional
    distributions (one LabelDistribution per group, over that group's
    subclasses in group order).  ``s_super`` defaults to within-group score
    sums.
    """
    if s_sub.k != hierarchy.k:
        raise DimensionMismatch(
            f"subclass scores have {s_sub.k} classes but hierarchy covers "
            f"{hierarchy.k}"
        )
    if nu_super.k != hierarchy.n_groups:
        raise DimensionMismatch(
            f"superclass distribution has {nu_super.k} entries for "
            f"{hierarchy.n_groups} groups"
        )
    conditionals = list(nu_sub_given_super)
    if len(conditionals) != hierarchy.n_groups:
        raise DimensionMismatch(
            f"need {hierarchy.n_groups} conditional distributions, got "
            f"{len(conditionals)}"
        )
    for g, cond in zip(hierarchy.groups, conditionals):
        if cond.k != len(g):
            raise DimensionMismatch(
                f"conditional for a {len(g)}-subclass group has {cond.k} entries"
            )
    if s_super is None:
        s_super = super_scores(s_sub, hierarchy)
    elif s_super.k != hierarchy.n_groups:
        raise DimensionMismatch(
            f"superclass scores have {s_super.k} columns for "
            f"{hierarchy.n_groups} groups"
        )
    if s_super.n != s_sub.n:
        raise DimensionMismatch("superclass and subclass scores disagree on n")

    kwargs = dict(solver=solver, clamp_eps=clamp_eps, reg=reg,
                  max_iter=max_iter, tol=tol, mode=mode)
    stage1 = otter(s_super, nu_super, **kwargs)

    labels = np.zeros(s_sub.n, dtype=np.int64)
    for gi, (group, cond) in enumerate(zip(hierarchy.groups, conditionals),
                                       start=1):
        idx = np.flatnonzero(stage1.labels == gi)
        if idx.size == 0:
            if nu_super.probs[gi - 1] > 0:
                raise EmptyPartition(
                    f"superclass {gi} received no points but its mass is "
                    f"{nu_super.probs[gi - 1]:g}"
                )
            continue
        block = s_sub.probs[np.ix_(idx, [i - 1 for i in group])]
        sums = block.sum(axis=1, keepdims=True)
        # points whose mass sits entirely outside the group carry no
        # preference; give them a flat row instead of dividing by zero
        flat = np.full(len(group), 1.0 / len(group))
        block = np.where(sums > 0, block / np.where(sums > 0, sums, 1.0), flat)
        local = otter(validate_scores(block), cond, **kwargs)
        labels[idx] = np.asarray(group, dtype=np.int64)[local.labels - 1]
    return Predictions(labels=labels, k=s_sub.k, method="h-otter")
