"""Estimate the target label distribution from scores (black-box shift
estimation).

The estimator needs two ingredients: a soft confusion matrix built from a
small labeled source sample, and the mean score vector on unlabeled target
data. Under label shift the mean target scores are a linear image of the
target distribution through the confusion matrix, so inverting that system
recovers an estimate of it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LabelDistribution, Predictions, ScoreMatrix
from .errors import (
    DimensionMismatch,
    MissingClass,
    SingularConfusion,
    ValidationError,
)

ROW_TOL = 1e-9
COND_LIMIT = 1e12


@dataclass(frozen=True)
class ConfusionMatrix:
    """Soft confusion: row j is the mean score vector over samples whose
    true label is j. counts[j] is how many samples backed that row."""

    k: int
    a: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        counts = np.asarray(self.counts, dtype=np.int64)
        if a.shape != (self.k, self.k):
            raise DimensionMismatch(
                f"confusion matrix must be {self.k}x{self.k}, got {a.shape}"
            )
        if counts.shape != (self.k,):
            raise DimensionMismatch(
                f"counts must have length {self.k}, got {counts.shape}"
            )
        if not np.all(np.isfinite(a)):
            raise ValidationError("confusion matrix has non-finite entries")
        if a.min() < 0.0 or a.max() > 1.0:
            raise ValidationError("confusion entries must lie in [0, 1]")
        rowsums = a.sum(axis=1)
        bad = np.abs(rowsums - 1.0) > ROW_TOL
        if np.any(bad):
            j = int(np.argmax(bad))
            raise ValidationError(
                f"confusion row {j + 1} sums to {rowsums[j]:.12g}, not 1"
            )
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "counts", counts)


def soft_confusion(s_src: ScoreMatrix, y_src: Predictions) -> ConfusionMatrix:
    """Average the score rows within each true-label group.

    y_src carries ground-truth labels (1-based). Every class must appear at
    least once, otherwise its confusion row would be undefined.
    """
    probs = s_src.probs
    k = s_src.k
    if y_src.k != k:
        raise DimensionMismatch(
            f"labels cover {y_src.k} classes but scores have {k}"
        )
    labels = y_src.labels
    if labels.shape[0] != probs.shape[0]:
        raise DimensionMismatch(
            f"{labels.shape[0]} labels for {probs.shape[0]} score rows"
        )
    counts = np.bincount(labels - 1, minlength=k)
    if counts.min() == 0:
        missing = int(np.argmin(counts)) + 1
        raise MissingClass(f"class {missing} has no labeled samples")
    a = np.zeros((k, k))
    for j in range(k):
        a[j] = probs[labels == j + 1].mean(axis=0)
    return ConfusionMatrix(k=k, a=a, counts=counts)


def bbse_estimate(
    cm: ConfusionMatrix,
    s_tgt: ScoreMatrix,
    nu_src: LabelDistribution,
    variant: str = "inverse",
) -> LabelDistribution:
    """Estimate the target label distribution from unlabeled target scores.

    The naive balance nu_tilde is the columnwise mean of the target scores.
    variant="inverse" solves A^T diag(nu_src) w = nu_tilde for importance
    weights w, then returns clip(nu_src * w, >=0) renormalized. This is the
    standard estimator and recovers the truth when the confusion matrix is
    exact. variant="multiply" returns A @ nu_tilde renormalized; it is a
    cruder one-step correction kept for comparison.
    """
    if s_tgt.k != cm.k:
        raise DimensionMismatch(
            f"target scores have {s_tgt.k} classes, confusion has {cm.k}"
        )
    if nu_src.k != cm.k:
        raise DimensionMismatch(
            f"source distribution has {nu_src.k} classes, confusion has {cm.k}"
        )
    nu_tilde = s_tgt.probs.mean(axis=0)
    if variant == "inverse":
        system = cm.a.T * nu_src.probs[np.newaxis, :]
        cond = np.linalg.cond(system)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise SingularConfusion(
                f"confusion system condition number {cond:.3g} exceeds "
                f"{COND_LIMIT:.0e}"
            )
        w = np.linalg.solve(system, nu_tilde)
        est = np.clip(nu_src.probs * w, 0.0, None)
    elif variant == "multiply":
        est = cm.a @ nu_tilde
        est = np.clip(est, 0.0, None)
    else:
        raise ValidationError(
            f"unknown variant {variant!r}, expected 'inverse' or 'multiply'"
        )
    total = est.sum()
    if total <= 0.0:
        raise SingularConfusion("estimated distribution collapsed to zero")
    return LabelDistribution(est / total)


def estimation_error(
    nu_true: LabelDistribution, nu_hat: LabelDistribution
) -> float:
    """Total variation distance, half the L1 difference. Lies in [0, 1]."""
    if nu_true.k != nu_hat.k:
        raise DimensionMismatch(
            f"distributions have {nu_true.k} and {nu_hat.k} classes"
        )
    return 0.5 * float(np.abs(nu_true.probs - nu_hat.probs).sum())
