"""Synthetic label-shift laboratory.

One-dimensional two-Gaussian mixture with a movable class balance: sample
data, train or analytically calibrate a logistic scorer, run the reference
threshold rule, inject score / distribution noise, and sweep target shifts
comparing naive argmax, transport rebalancing, the threshold reference, and
fitted reweighting.

Class convention: class 1 sits at mean -1, class 2 at mean +1.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .adapter import otter, zero_shot
from .core import (
    LabelDistribution,
    Predictions,
    ScoreMatrix,
    validate_scores,
)
from .errors import (
    AlphaTooLarge,
    DimensionMismatch,
    MissingClass,
    OffSimplex,
    Separable,
    ValidationError,
    ZeroMass,
)
from .reweight import fit_rotter, reweight_predict

SCORE_CLIP = 1e-6
PARAM_CAP = 50.0
METHODS = ("naive", "otter", "bayes", "rotter")
NOISE_KINDS = ("none", "score", "dist", "adversarial")


@dataclass(frozen=True)
class GaussianMixtureSpec:
    """Mixture of unit-interval-indexed Gaussians, one component per class."""

    nu: LabelDistribution
    means: tuple = (-1.0, 1.0)
    stds: tuple = (1.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        means = tuple(float(m) for m in np.atleast_1d(self.means))
        stds = np.atleast_1d(self.stds)
        if stds.size == 1:
            stds = np.repeat(stds, len(means))
        stds = tuple(float(s) for s in stds)
        if len(means) != self.nu.k or len(stds) != self.nu.k:
            raise DimensionMismatch(
                f"{self.nu.k} classes need {self.nu.k} means and stds, got "
                f"{len(means)} and {len(stds)}"
            )
        if min(stds) <= 0.0:
            raise ValidationError("stds must be positive")
        if not all(np.isfinite(means)) or not all(np.isfinite(stds)):
            raise ValidationError("means and stds must be finite")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)


@dataclass(frozen=True)
class LogisticModel:
    weight: float
    bias: float
    separable: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.weight) and np.isfinite(self.bias)):
            raise ValidationError("model parameters must be finite")


def sample_mixture(spec: GaussianMixtureSpec, n: int):
    """Draw n points: labels from spec.nu, features from the class Gaussians.

    Returns (x, truth) with x a length-n float array and truth a Predictions
    carrying the sampled labels. Same spec (same seed) gives identical output.
    """
    if n < 1:
        raise ValidationError(f"need n >= 1, got {n}")
    rng = np.random.default_rng(spec.seed)
    labels = 1 + rng.choice(spec.nu.k, size=n, p=spec.nu.probs)
    means = np.asarray(spec.means)[labels - 1]
    stds = np.asarray(spec.stds)[labels - 1]
    x = rng.normal(means, stds)
    return x, Predictions(labels=labels, k=spec.nu.k)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def calibrated_scores(x: np.ndarray, nu: LabelDistribution) -> ScoreMatrix:
    """Exact posterior of the unit-variance mixture at prior nu.

    P(class 2 | x) = sigmoid(2x + ln(nu_2 / nu_1)). A zero prior entry gives
    the constant 0/1 posterior.
    """
    if nu.k != 2:
        raise ValidationError("calibrated scores are defined for 2 classes")
    with np.errstate(divide="ignore"):
        bias = np.log(nu.probs[1]) - np.log(nu.probs[0])
    x = np.asarray(x, dtype=np.float64)
    if bias == np.inf:
        p2 = np.ones_like(x)
    elif bias == -np.inf:
        p2 = np.zeros_like(x)
    else:
        p2 = _sigmoid(2.0 * x + bias)
    return validate_scores(np.stack([1.0 - p2, p2], axis=1))


def model_scores(model: LogisticModel, x: np.ndarray) -> ScoreMatrix:
    """Probability rows (P(class 1), P(class 2)) under the fitted model."""
    p2 = _sigmoid(model.weight * np.asarray(x, dtype=np.float64) + model.bias)
    return validate_scores(np.stack([1.0 - p2, p2], axis=1))


def fit_logistic(
    x: np.ndarray,
    y: Predictions,
    lr: float = 1.0,
    max_iter: int = 20000,
    tol: float = 1e-6,
) -> LogisticModel:
    """Maximum-likelihood logistic fit by gradient descent with backtracking.

    Runs until the gradient 2-norm drops to tol. Perfectly separated data has
    no finite optimum; the fit is then capped at +-50 and flagged, with a
    Separable warning.
    """
    x = np.asarray(x, dtype=np.float64)
    if y.k != 2:
        raise ValidationError("logistic fit requires exactly 2 classes")
    if x.shape[0] != y.labels.shape[0]:
        raise DimensionMismatch(
            f"{x.shape[0]} features for {y.labels.shape[0]} labels"
        )
    t = (y.labels == 2).astype(np.float64)
    if t.min() == t.max():
        raise MissingClass("both classes must appear in the training labels")
    x1, x2 = x[t == 0.0], x[t == 1.0]
    separable = bool(x1.max() < x2.min() or x2.max() < x1.min())
    if separable:
        warnings.warn(
            "perfectly separated classes: the likelihood is unbounded, "
            f"parameters capped at +-{PARAM_CAP:.0f}",
            Separable,
        )

    def loss_grad(w, b):
        z = w * x + b
        # logaddexp(0, z) = log(1 + e^z) without overflow
        nll = float(np.mean(np.logaddexp(0.0, z) - t * z))
        resid = _sigmoid(z) - t
        return nll, float(np.mean(resid * x)), float(np.mean(resid))

    w, b = 0.0, 0.0
    nll, gw, gb = loss_grad(w, b)
    step = lr
    for _ in range(max_iter):
        gnorm = np.hypot(gw, gb)
        if gnorm <= tol:
            break
        for _ in range(60):
            w_new, b_new = w - step * gw, b - step * gb
            nll_new, gw_new, gb_new = loss_grad(w_new, b_new)
            if nll_new <= nll - 1e-4 * step * gnorm * gnorm:
                break
            step *= 0.5
        w, b, nll, gw, gb = w_new, b_new, nll_new, gw_new, gb_new
        step *= 2.0
        if max(abs(w), abs(b)) > PARAM_CAP:
            break
    return LogisticModel(
        weight=float(np.clip(w, -PARAM_CAP, PARAM_CAP)),
        bias=float(np.clip(b, -PARAM_CAP, PARAM_CAP)),
        separable=separable,
    )


def bayes_predict(x: np.ndarray, nu_t: LabelDistribution) -> Predictions:
    """Reference threshold rule: class 2 iff x >= (ln(nu_1/nu_2) + 1) / 2.

    A zero-mass prior pushes the threshold to +-infinity; the rule then
    predicts the surviving class everywhere (ZeroMass warning).
    """
    if nu_t.k != 2:
        raise ValidationError("threshold rule is defined for 2 classes")
    x = np.asarray(x, dtype=np.float64)
    p1, p2 = nu_t.probs
    if p1 == 0.0 or p2 == 0.0:
        survivor = 2 if p1 == 0.0 else 1
        warnings.warn(
            f"zero-mass class: constant prediction {survivor}", ZeroMass
        )
        return Predictions(
            labels=np.full(x.shape[0], survivor, dtype=np.int64), k=2
        )
    threshold = 0.5 * (np.log(p1 / p2) + 1.0)
    return Predictions(labels=1 + (x >= threshold).astype(np.int64), k=2)


def perturb_scores(s: ScoreMatrix, sigma: float, seed: int) -> ScoreMatrix:
    """Add N(0, sigma^2) noise to the class-2 probability of each row.

    Perturbed values are clipped to [1e-6, 1 - 1e-6] and the row rebuilt as
    (1-p, p). The underlying standard normal draw depends only on the seed,
    so raising sigma scales a fixed noise pattern instead of redrawing it.
    """
    if s.k != 2:
        raise ValidationError("score noise is defined for 2 classes")
    if sigma < 0.0:
        raise ValidationError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0.0:
        return s
    z = np.random.default_rng(seed).standard_normal(s.n)
    p = np.clip(s.probs[:, 1] + sigma * z, SCORE_CLIP, 1.0 - SCORE_CLIP)
    return validate_scores(np.stack([1.0 - p, p], axis=1))


def perturb_distribution(
    nu: LabelDistribution, epsilon: float
) -> LabelDistribution:
    """Shift mass between the two classes: nu + (epsilon, -epsilon)."""
    if nu.k != 2:
        raise ValidationError("distribution noise is defined for 2 classes")
    if epsilon == 0.0:
        return nu
    shifted = nu.probs + np.array([epsilon, -epsilon])
    if shifted.min() < 0.0 or shifted.max() > 1.0:
        raise OffSimplex(
            f"{tuple(nu.probs)} + ({epsilon}, {-epsilon}) leaves the simplex"
        )
    return LabelDistribution(shifted)


def adversarial_interpolation(
    nu_true: LabelDistribution, alpha: float
) -> LabelDistribution:
    """Move alpha of total-variation budget toward the worst-case corner.

    The corner puts all mass on the rarest class (ties to the lowest index).
    The returned distribution sits at TV distance exactly alpha from nu_true.
    """
    if nu_true.k < 2:
        raise ValidationError("need at least 2 classes")
    if alpha < 0.0:
        raise ValidationError(f"alpha must be nonnegative, got {alpha}")
    if alpha == 0.0:
        return nu_true
    j = int(np.argmin(nu_true.probs))
    adv = np.zeros(nu_true.k)
    adv[j] = 1.0
    tv = 0.5 * float(np.abs(nu_true.probs - adv).sum())
    if alpha > min(0.2, tv):
        raise AlphaTooLarge(
            f"alpha {alpha} exceeds the budget {min(0.2, tv):.6g}"
        )
    frac = alpha / tv
    return LabelDistribution((1.0 - frac) * nu_true.probs + frac * adv)


def default_target_grid():
    """Class-1 target mass 0.1 through 0.9 in steps of 0.1."""
    return tuple(
        LabelDistribution(np.array([round(0.1 * i, 1), round(1 - 0.1 * i, 1)]))
        for i in range(1, 10)
    )


@dataclass(frozen=True)
class SweepConfig:
    """Settings for one shift sweep. noise_kind picks what noise_levels
    mean: score noise sigma, distribution noise epsilon, or adversarial
    interpolation alpha. score_mode chooses the analytic posterior or a
    logistic model fitted per seed on fresh source data."""

    nu_s: LabelDistribution
    nu_t_list: tuple = ()
    n_train: int = 10000
    n_test: int = 10000
    n_val: int = 2000
    methods: tuple = METHODS
    seeds: tuple = (0, 1, 2, 3, 4, 5, 6, 7, 8, 9)
    noise_kind: str = "none"
    noise_levels: tuple = (0.0,)
    score_mode: str = "calibrated"

    def __post_init__(self):
        if self.nu_s.k != 2:
            raise ValidationError("sweep is defined for 2 classes")
        if not self.nu_t_list:
            object.__setattr__(self, "nu_t_list", default_target_grid())
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValidationError(f"unknown methods: {sorted(unknown)}")
        if self.noise_kind not in NOISE_KINDS:
            raise ValidationError(f"unknown noise kind {self.noise_kind!r}")
        if self.score_mode not in ("calibrated", "fitted"):
            raise ValidationError(f"unknown score mode {self.score_mode!r}")
        if self.noise_kind == "none" and tuple(self.noise_levels) != (0.0,):
            raise ValidationError('noise_kind "none" takes levels (0.0,)')


@dataclass(frozen=True)
class SweepRow:
    tv_distance: float
    method: str
    noise_kind: str
    noise_level: float
    seed: int
    accuracy: float


def _tv(p, q):
    return 0.5 * float(np.abs(p - q).sum())


def run_shift_sweep(config: SweepConfig):
    """Run the sweep and return one SweepRow per (target, level, seed,
    method). Everything derives from the configured seeds, so repeated runs
    are identical.

    The reference threshold rule is always evaluated on clean inputs; score
    noise corrupts the scores every other method consumes, and distribution
    or adversarial noise corrupts only the target balance handed to the
    transport step.
    """
    rows = []
    for ti, nu_t in enumerate(config.nu_t_list):
        if nu_t.k != 2:
            raise ValidationError("sweep targets must have 2 classes")
        tv = _tv(config.nu_s.probs, nu_t.probs)
        for seed in config.seeds:
            ss = np.random.SeedSequence(entropy=seed, spawn_key=(ti,))
            test_seed, val_seed, noise_seed, train_seed = [
                int(s.generate_state(1)[0]) for s in ss.spawn(4)
            ]
            x_test, truth = sample_mixture(
                GaussianMixtureSpec(nu=nu_t, seed=test_seed), config.n_test
            )
            if config.score_mode == "calibrated":
                scorer = lambda x: calibrated_scores(x, config.nu_s)
            else:
                x_train, y_train = sample_mixture(
                    GaussianMixtureSpec(nu=config.nu_s, seed=train_seed),
                    config.n_train,
                )
                model = fit_logistic(x_train, y_train)
                scorer = lambda x: model_scores(model, x)
            s_clean = scorer(x_test)
            for level in config.noise_levels:
                s_used = s_clean
                nu_hat = nu_t
                if config.noise_kind == "score":
                    s_used = perturb_scores(s_clean, level, noise_seed)
                elif config.noise_kind == "dist":
                    nu_hat = perturb_distribution(nu_t, level)
                elif config.noise_kind == "adversarial":
                    nu_hat = adversarial_interpolation(nu_t, level)
                for method in config.methods:
                    if method == "naive":
                        pred = zero_shot(s_used)
                    elif method == "bayes":
                        pred = bayes_predict(x_test, nu_t)
                    elif method == "otter":
                        pred = otter(s_used, nu_hat)
                    else:
                        x_val, _ = sample_mixture(
                            GaussianMixtureSpec(nu=nu_t, seed=val_seed),
                            config.n_val,
                        )
                        s_val = scorer(x_val)
                        pseudo = otter(s_val, nu_hat)
                        rw, _ = fit_rotter(s_val, pseudo)
                        pred = reweight_predict(s_used, rw)
                    acc = float((pred.labels == truth.labels).mean())
                    rows.append(
                        SweepRow(
                            tv_distance=tv,
                            method=method,
                            noise_kind=config.noise_kind,
                            noise_level=float(level),
                            seed=int(seed),
                            accuracy=acc,
                        )
                    )
    return rows


def sweep_to_csv(rows) -> str:
    """Serialize sweep rows with stable 17-significant-digit floats."""
    lines = ["tv_distance,method,noise_kind,noise_level,seed,accuracy"]
    for r in rows:
        lines.append(
            f"{r.tv_distance:.17g},{r.method},{r.noise_kind},"
            f"{r.noise_level:.17g},{r.seed},{r.accuracy:.17g}"
        )
    return "\n".join(lines) + "\n"
