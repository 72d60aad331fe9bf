"""Core domain types: score matrices, label distributions, costs, plans.

Conventions used throughout the package:

* scores are row-stochastic ``(n, k)`` arrays; row i is a probability
  vector over k classes for sample i,
* class indices are 1-based everywhere a human sees them (files, labels,
  Predictions); internal array columns stay 0-based,
* argmax ties always break toward the lowest class index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    NegativeEntry,
    NonFiniteEntry,
    RowSumViolation,
    ValidationError,
)

# Row sums within this tolerance of 1 are silently renormalized; anything
# worse is an error, not a fixup.
ROW_SUM_TOL = 1e-6

# Default probability clamp used when mapping scores to costs.
COST_CLAMP = 1e-12

DIST_TOL = 1e-9


def _as_2d_float(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"{name} must be non-empty, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class ScoreMatrix:
    """Row-stochastic probabilistic predictions for n samples over k classes.

    Build instances through :func:`validate_scores`; the constructor does not
    re-check the simplex condition.
    """

    probs: np.ndarray

    @property
    def n(self) -> int:
        return self.probs.shape[0]

    @property
    def k(self) -> int:
        return self.probs.shape[1]


@dataclass(frozen=True)
class LabelDistribution:
    """A probability vector over k classes.  Zero entries are allowed."""

    probs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.probs, dtype=float)
        if arr.ndim != 1 or arr.size < 1:
            raise ValidationError(f"distribution must be a non-empty vector, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteEntry("distribution contains non-finite entries")
        if np.any(arr < 0):
            raise NegativeEntry("distribution contains negative entries")
        if abs(arr.sum() - 1.0) > DIST_TOL:
            raise ValidationError(f"distribution sums to {arr.sum():.12g}, expected 1 within {DIST_TOL}")
        object.__setattr__(self, "probs", arr)

    @property
    def k(self) -> int:
        return self.probs.shape[0]


@dataclass(frozen=True)
class CostMatrix:
    """A dense (n, k) matrix of finite transport costs."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_2d_float(self.values, "cost matrix")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteEntry("cost matrix contains non-finite entries")
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class TransportPlan:
    """A coupling between n samples and k classes plus its dual potentials.

    ``coupling[i, j]`` is the mass sample i sends to class j.  For plans
    produced by the exact solver, ``row_duals``/``col_duals`` are the LP
    potentials (normalized so ``row_duals[0] == 0``) and complementary
    slackness holds on the support.  The entropic solver stores its scaling
    potentials in the same fields; they satisfy the marginal conditions only
    up to the solver tolerance.
    """

    coupling: np.ndarray
    row_duals: np.ndarray
    col_duals: np.ndarray
    objective: float = 0.0

    @property
    def n(self) -> int:
        return self.coupling.shape[0]

    @property
    def k(self) -> int:
        return self.coupling.shape[1]

    def row_marginals(self) -> np.ndarray:
        return self.coupling.sum(axis=1)

    def col_marginals(self) -> np.ndarray:
        return self.coupling.sum(axis=0)


@dataclass(frozen=True)
class Predictions:
    """Hard labels (1-based) for n samples, tagged with their provenance."""

    labels: np.ndarray
    k: int
    method: str = "unknown"

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.ndim != 1:
            raise ValidationError(f"labels must be a vector, got shape {arr.shape}")
        if arr.size and not np.issubdtype(arr.dtype, np.integer):
            flt = np.asarray(arr, dtype=float)
            if not np.all(np.isfinite(flt)) or np.any(flt != np.round(flt)):
                raise ValidationError("labels must be integers")
            arr = flt.astype(np.int64)
        arr = arr.astype(np.int64, copy=False)
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if arr.size and (arr.min() < 1 or arr.max() > self.k):
            raise ValidationError(f"labels must lie in 1..{self.k}")
        object.__setattr__(self, "labels", arr)

    @property
    def n(self) -> int:
        return self.labels.shape[0]


def validate_scores(raw, tol: float = ROW_SUM_TOL) -> ScoreMatrix:
    """Check and repair a raw score array, returning a ScoreMatrix.

    Rows whose sum deviates from 1 by at most ``tol`` are renormalized in
    place (silent fixup for accumulated rounding); larger deviations raise
    RowSumViolation.  Non-finite entries and negative entries are always
    errors.
    """
    arr = _as_2d_float(raw, "score matrix")
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise NonFiniteEntry(f"non-finite score at row {bad[0] + 1}, column {bad[1] + 1}")
    if np.any(arr < 0):
        bad = np.argwhere(arr < 0)[0]
        raise NegativeEntry(f"negative score at row {bad[0] + 1}, column {bad[1] + 1}")
    sums = arr.sum(axis=1)
    off = np.abs(sums - 1.0)
    if np.any(off > tol):
        i = int(np.argmax(off))
        raise RowSumViolation(
            f"row {i + 1} sums to {sums[i]:.12g}, outside 1 +/- {tol:g}"
        )
    return ScoreMatrix(arr / sums[:, None])


def scores_to_cost(scores: ScoreMatrix, clamp_eps: float = COST_CLAMP) -> CostMatrix:
    """Map probabilities to transport costs via the negative log.

    Probabilities below ``clamp_eps`` are clamped before taking the log so
    exact zeros stay finite (cost -log(clamp_eps), about 27.6 at the
    default).
    """
    if not (0 < clamp_eps < 1):
        raise ValidationError(f"clamp_eps must be in (0, 1), got {clamp_eps}")
    return CostMatrix(-np.log(np.maximum(scores.probs, clamp_eps)))


def argmax_labels(values: np.ndarray) -> np.ndarray:
    """Row argmax as 1-based labels; ties go to the lowest class index."""
    return np.argmax(values, axis=1).astype(np.int64) + 1


def empirical_distribution(pred: Predictions, k: int | None = None) -> LabelDistribution:
    """Fraction of samples assigned to each class (classes with no samples get 0)."""
    kk = pred.k if k is None else int(k)
    if kk < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if pred.n == 0:
        raise ValidationError("cannot take the empirical distribution of zero samples")
    if pred.labels.max(initial=1) > kk:
        raise DimensionMismatch(f"labels exceed k={kk}")
    counts = np.bincount(pred.labels - 1, minlength=kk).astype(float)
    return LabelDistribution(counts / pred.n)
