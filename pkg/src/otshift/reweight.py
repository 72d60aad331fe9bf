"""Per-class score reweighting: distilled and marginal-matching fits.

A ReweightVector r rescales each class column of a score matrix and
renormalizes rows, which is exactly a posterior prior swap: with
r = target_prior / source_prior on calibrated scores, the reweighted argmax
is the target-optimal decision rule.  Two fitting routes are provided:

* fit_rotter distills batch-rebalanced predictions into r by minimizing
  cross-entropy, giving a per-sample rule usable online (no batch OT at
  serving time).
* fit_prior_matching picks r so the mean reweighted score marginals match a
  specified distribution; grid_search_pm tunes its temperature and learning
  rate on a labeled validation split.

Both fits are deterministic given their configuration.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import LabelDistribution, Predictions, ScoreMatrix, argmax_labels
from .errors import DegenerateLabels, DimensionMismatch, ValidationError

SCORE_FLOOR = 1e-12


@dataclass(frozen=True)
class ReweightVector:
    """Strictly positive per-class multipliers; scale-free under argmax."""

    r: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.r, dtype=float)
        if arr.ndim != 1 or arr.size < 1:
            raise ValidationError(f"r must be a nonempty vector, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("r contains non-finite entries")
        if np.any(arr <= 0):
            raise ValidationError("r entries must be strictly positive")
        object.__setattr__(self, "r", arr)

    @property
    def k(self) -> int:
        return self.r.shape[0]


@dataclass(frozen=True)
class RotterFit:
    """Fit record for the distilled reweighting."""

    final_loss: float
    loss_curve: tuple
    missing_classes: tuple


@dataclass(frozen=True)
class PmFit:
    final_mismatch: float
    temperature: float
    lr: float
    steps: int


@dataclass(frozen=True)
class PmSelection:
    temperature: float
    lr: float
    val_accuracy: float
    mismatch: float


def apply_reweight(scores: ScoreMatrix, rw: ReweightVector) -> ScoreMatrix:
    """Multiply each class column by its weight and renormalize rows."""
    if scores.k != rw.k:
        raise DimensionMismatch(
            f"scores have {scores.k} classes but the reweight vector has {rw.k}"
        )
    w = scores.probs * rw.r[None, :]
    return ScoreMatrix(w / w.sum(axis=1, keepdims=True))


def reweight_predict(scores: ScoreMatrix, rw: ReweightVector,
                     method: str = "rotter") -> Predictions:
    """Argmax after reweighting (the online per-sample decision rule)."""
    return Predictions(labels=argmax_labels(apply_reweight(scores, rw).probs),
                       k=scores.k, method=method)


def _log_scores(scores: ScoreMatrix) -> np.ndarray:
    return np.log(np.maximum(scores.probs, SCORE_FLOOR))


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def temper_scores(scores: ScoreMatrix, temperature: float) -> ScoreMatrix:
    """Sharpen (T < 1) or flatten (T > 1) scores by scaling log-probabilities."""
    if temperature <= 0:
        raise ValidationError(f"temperature must be positive, got {temperature}")
    if temperature == 1.0:
        return scores
    return ScoreMatrix(_softmax(_log_scores(scores) / temperature))


def fit_rotter(s_val: ScoreMatrix, pseudo: Predictions, lr: float = 1e-2,
               steps: int = 500, seed: int = 0):
    """Distill pseudo-labels into a reweighting vector by cross-entropy.

    Optimizes rho = log r with adaptive-moment gradient steps; each step is
    halved until the loss does not increase, so the reported loss curve is
    non-increasing.  Classes absent from the pseudo-labels are excluded from
    the fit and pinned to the smallest fitted weight afterwards (with a
    DegenerateLabels warning).  ``seed`` is accepted for interface
    stability; the procedure is deterministic.
    """
    if s_val.n != pseudo.n:
        raise DimensionMismatch("scores and pseudo-labels disagree on n")
    if pseudo.k != s_val.k:
        raise DimensionMismatch("scores and pseudo-labels disagree on k")
    k = s_val.k
    n = s_val.n
    logs = _log_scores(s_val)
    y = pseudo.labels - 1
    onehot_mean = np.bincount(y, minlength=k) / n
    present = np.bincount(y, minlength=k) > 0
    missing = tuple(int(j + 1) for j in np.flatnonzero(~present))

    def loss(rho):
        z = logs + rho[None, :]
        z = z - z.max(axis=1, keepdims=True)
        lse = np.log(np.exp(z).sum(axis=1))
        return float(np.mean(lse - z[np.arange(n), y]))

    def grad(rho):
        p = _softmax(logs + rho[None, :])
        g = p.mean(axis=0) - onehot_mean
        g[~present] = 0.0
        return g

    rho = np.zeros(k)
    m = np.zeros(k)
    v = np.zeros(k)
    b1, b2, eps = 0.9, 0.999, 1e-8
    cur = loss(rho)
    curve = [cur]
    for t in range(1, steps + 1):
        g = grad(rho)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        step = lr * mhat / (np.sqrt(vhat) + eps)
        scale = 1.0
        for _ in range(30):
            cand = rho - scale * step
            new = loss(cand)
            if new <= cur:
                rho = cand
                cur = new
                break
            scale *= 0.5
        curve.append(cur)
    # rho is identified only up to a constant; pin the mean of the fitted
    # components to zero
    rho = rho - rho[present].mean()
    r = np.exp(rho)
    if missing:
        r[~present] = r[present].min()
        warnings.warn(
            f"classes {missing} absent from pseudo-labels; their weights are "
            "pinned to the smallest fitted weight",
            DegenerateLabels,
        )
    return ReweightVector(r), RotterFit(final_loss=cur, loss_curve=tuple(curve),
                                        missing_classes=missing)


def _pm_mismatch(probs: np.ndarray, rho: np.ndarray, nu: np.ndarray) -> float:
    w = probs * np.exp(rho)[None, :]
    p = w / w.sum(axis=1, keepdims=True)
    return float(np.abs(p.mean(axis=0) - nu).sum())


def fit_prior_matching(scores: ScoreMatrix, nu_hat: LabelDistribution,
                       temperature: float = 1.0, lr: float = 1e-3,
                       steps: int = 500, seed: int = 0):
    """Fit r so mean reweighted score marginals match ``nu_hat``.

    The objective is the summed absolute marginal mismatch after optional
    temperature sharpening of the scores; optimization is adaptive-moment
    gradient descent in log space with subgradient 0 at exact matches.
    Returns the best iterate seen.  Deterministic; ``seed`` is accepted for
    interface stability.
    """
    if scores.k != nu_hat.k:
        raise DimensionMismatch(
            f"scores have {scores.k} classes but the target distribution has "
            f"{nu_hat.k}"
        )
    tempered = temper_scores(scores, temperature)
    probs = tempered.probs
    nu = nu_hat.probs
    k = scores.k

    def subgrad(rho):
        w = probs * np.exp(rho)[None, :]
        p = w / w.sum(axis=1, keepdims=True)
        diff = p.mean(axis=0) - nu
        sign = np.sign(diff)
        # d mean_i p_ij / d rho_l = mean_i p_ij (1[j=l] - p_il)
        jac = (p[:, :, None] * (np.eye(k)[None, :, :] - p[:, None, :])).mean(axis=0)
        return sign @ jac

    rho = np.zeros(k)
    m = np.zeros(k)
    v = np.zeros(k)
    b1, b2, eps = 0.9, 0.999, 1e-8
    best_rho = rho.copy()
    best = _pm_mismatch(probs, rho, nu)
    for t in range(1, steps + 1):
        g = subgrad(rho)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        rho = rho - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        cur = _pm_mismatch(probs, rho, nu)
        if cur < best:
            best = cur
            best_rho = rho.copy()
    best_rho = best_rho - best_rho.mean()
    fit = PmFit(final_mismatch=best, temperature=temperature, lr=lr, steps=steps)
    return ReweightVector(np.exp(best_rho)), fit


PM_TEMPERATURES = (1e-3, 1e-4, 1e-5, 1e-6, 1e-7)
PM_LRS = (1e-3, 1e-4, 1e-5, 1e-6, 1e-7)


def grid_search_pm(s_val: ScoreMatrix, y_val: Predictions,
                   nu_hat: LabelDistribution,
                   temperatures=PM_TEMPERATURES, lrs=PM_LRS,
                   steps: int = 200, seed: int = 0):
    """Fit prior matching per (temperature, lr) and pick by validation accuracy.

    Ties break to the smaller final mismatch, then to grid order.  Returns
    ``(ReweightVector, PmSelection)``.
    """
    if s_val.n != y_val.n:
        raise DimensionMismatch("validation scores and labels disagree on n")
    if s_val.n < 1:
        raise ValidationError("validation split must be nonempty")
    best = None
    for temperature in temperatures:
        for lr in lrs:
            rw, fit = fit_prior_matching(s_val, nu_hat, temperature=temperature,
                                         lr=lr, steps=steps, seed=seed)
            pred = reweight_predict(temper_scores(s_val, temperature), rw,
                                    method="pm")
            acc = float((pred.labels == y_val.labels).mean())
            key = (-acc, fit.final_mismatch)
            if best is None or key < best[0]:
                best = (key, rw, PmSelection(temperature=temperature, lr=lr,
                                             val_accuracy=acc,
                                             mismatch=fit.final_mismatch))
    return best[1], best[2]


def pm_predict(scores: ScoreMatrix, rw: ReweightVector,
               temperature: float) -> Predictions:
    """Deployment rule for a prior-matching fit: temper, reweight, argmax."""
    return reweight_predict(temper_scores(scores, temperature), rw, method="pm")
