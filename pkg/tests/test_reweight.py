import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from otshift.core import LabelDistribution, validate_scores
from otshift.errors import DegenerateLabels, DimensionMismatch, ValidationError
from otshift.reweight import (
    PM_LRS,
    PM_TEMPERATURES,
    ReweightVector,
    apply_reweight,
    fit_prior_matching,
    fit_rotter,
    grid_search_pm,
    pm_predict,
    reweight_predict,
    temper_scores,
)
from otshift.adapter import zero_shot


def random_scores(rng, n, k):
    return validate_scores(rng.dirichlet(np.ones(k), size=n))


class TestReweightVector:
    def test_rejects_nonpositive(self):
        with pytest.raises(ValidationError):
            ReweightVector(np.array([1.0, 0.0]))
        with pytest.raises(ValidationError):
            ReweightVector(np.array([1.0, -2.0]))

    def test_rejects_nonfinite(self):
        with pytest.raises(ValidationError):
            ReweightVector(np.array([1.0, np.inf]))


class TestApplyReweight:
    def test_identity(self):
        s = random_scores(np.random.default_rng(0), 10, 3)
        out = apply_reweight(s, ReweightVector(np.ones(3)))
        assert_allclose(out.probs, s.probs, rtol=0, atol=1e-15)

    def test_direct_arithmetic(self):
        s = validate_scores(np.array([[0.4, 0.6]]))
        out = apply_reweight(s, ReweightVector(np.array([3.0, 1.0])))
        assert_allclose(out.probs, [[2.0 / 3.0, 1.0 / 3.0]], rtol=0, atol=1e-15)

    def test_rows_stay_stochastic(self):
        rng = np.random.default_rng(1)
        s = random_scores(rng, 50, 5)
        out = apply_reweight(s, ReweightVector(rng.uniform(0.1, 10, 5)))
        assert_allclose(out.probs.sum(axis=1), np.ones(50), rtol=0, atol=1e-12)

    def test_scale_free_argmax(self):
        rng = np.random.default_rng(2)
        s = random_scores(rng, 80, 4)
        r = ReweightVector(rng.uniform(0.5, 2.0, 4))
        r_scaled = ReweightVector(r.r * 37.5)
        assert_array_equal(reweight_predict(s, r).labels,
                           reweight_predict(s, r_scaled).labels)

    def test_dimension_mismatch(self):
        s = random_scores(np.random.default_rng(3), 4, 3)
        with pytest.raises(DimensionMismatch):
            apply_reweight(s, ReweightVector(np.ones(2)))

    def test_prior_swap_recovers_target_rule(self):
        # calibrated binary scores under a source prior, reweighted by the
        # prior ratio, must follow the target-posterior decision rule
        x = np.linspace(-3, 3, 201) + 0.0137
        nu_s = np.array([0.3, 0.7])
        nu_t = np.array([0.8, 0.2])
        p2 = 1.0 / (1.0 + np.exp(-(2 * x + np.log(nu_s[1] / nu_s[0]))))
        s = validate_scores(np.stack([1 - p2, p2], axis=1))
        pred = reweight_predict(s, ReweightVector(nu_t / nu_s))
        target_rule = np.where(2 * x + np.log(nu_t[1] / nu_t[0]) > 0, 2, 1)
        assert_array_equal(pred.labels, target_rule)


class TestFitRotter:
    def test_self_consistency_no_shift(self):
        # peaked rows keep most points away from decision boundaries, so a
        # no-shift fit should barely move the labels
        rng = np.random.default_rng(5)
        s_fit = validate_scores(rng.dirichlet(np.full(4, 0.3), size=1000))
        s_holdout = validate_scores(rng.dirichlet(np.full(4, 0.3), size=1000))
        rw, fit = fit_rotter(s_fit, zero_shot(s_fit))
        assert rw.r.max() / rw.r.min() < 2.0
        agree = (reweight_predict(s_holdout, rw).labels
                 == zero_shot(s_holdout).labels).mean()
        assert agree >= 0.95

    def test_loss_non_increasing(self):
        rng = np.random.default_rng(6)
        for _ in range(5):
            n = int(rng.integers(50, 300))
            k = int(rng.integers(2, 6))
            s = random_scores(rng, n, k)
            # skewed pseudo-labels to force real movement
            pseudo = zero_shot(s)
            _, fit = fit_rotter(s, pseudo)
            diffs = np.diff(fit.loss_curve)
            assert np.all(diffs <= 1e-12)

    def test_moves_toward_skewed_pseudo_labels(self):
        rng = np.random.default_rng(7)
        s = random_scores(rng, 500, 3)
        skewed = zero_shot(s).labels.copy()
        skewed[: 400] = 1
        from otshift.core import Predictions
        pseudo = Predictions(labels=skewed, k=3, method="otter")
        rw, fit = fit_rotter(s, pseudo)
        assert rw.r[0] > rw.r[1]
        assert rw.r[0] > rw.r[2]
        assert fit.final_loss < fit.loss_curve[0]

    def test_degenerate_class_warns_and_pins(self):
        rng = np.random.default_rng(8)
        s = random_scores(rng, 200, 3)
        labels = 1 + (rng.random(200) > 0.5).astype(np.int64)  # never class 3
        from otshift.core import Predictions
        with pytest.warns(DegenerateLabels):
            rw, fit = fit_rotter(s, Predictions(labels=labels, k=3))
        assert fit.missing_classes == (3,)
        assert rw.r[2] == min(rw.r[0], rw.r[1])

    def test_single_class(self):
        s = validate_scores(np.ones((5, 1)))
        from otshift.core import Predictions
        rw, fit = fit_rotter(s, Predictions(labels=np.ones(5, dtype=int), k=1))
        assert_allclose(rw.r, [1.0])
        assert fit.final_loss <= 1e-12

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        s = random_scores(rng, 300, 4)
        pseudo = zero_shot(s)
        r1, _ = fit_rotter(s, pseudo)
        r2, _ = fit_rotter(s, pseudo)
        assert r1.r.tobytes() == r2.r.tobytes()


class TestPriorMatching:
    def test_already_matched_is_fixed_point(self):
        s = validate_scores(np.array([[0.7, 0.3], [0.3, 0.7]] * 10))
        nu = LabelDistribution(np.array([0.5, 0.5]))
        rw, fit = fit_prior_matching(s, nu)
        assert fit.final_mismatch <= 1e-6
        assert_allclose(rw.r, np.ones(2), rtol=0, atol=1e-9)

    def test_mismatch_decreases(self):
        rng = np.random.default_rng(11)
        s = random_scores(rng, 400, 3)
        nu = LabelDistribution(np.array([0.6, 0.3, 0.1]))
        initial = float(np.abs(s.probs.mean(axis=0) - nu.probs).sum())
        rw, fit = fit_prior_matching(s, nu, lr=1e-2, steps=500)
        assert fit.final_mismatch < initial * 0.2

    def test_temper_identity_at_one(self):
        s = random_scores(np.random.default_rng(12), 20, 4)
        assert temper_scores(s, 1.0) is s

    def test_temper_sharpens(self):
        s = validate_scores(np.array([[0.4, 0.6]]))
        sharp = temper_scores(s, 0.25)
        assert sharp.probs[0, 1] > 0.6
        flat = temper_scores(s, 4.0)
        assert flat.probs[0, 1] < 0.6

    def test_temper_rejects_nonpositive(self):
        s = random_scores(np.random.default_rng(13), 5, 2)
        with pytest.raises(ValidationError):
            temper_scores(s, 0.0)


class TestGridSearchPM:
    def _shifted_setup(self, rng, n=150):
        k = 3
        s = random_scores(rng, n, k)
        truth = zero_shot(s)
        nu = LabelDistribution(np.array([0.2, 0.3, 0.5]))
        return s, truth, nu

    def test_single_point_returned(self):
        rng = np.random.default_rng(15)
        s, truth, nu = self._shifted_setup(rng)
        rw, sel = grid_search_pm(s, truth, nu, temperatures=(1.0,), lrs=(1e-2,))
        assert sel.temperature == 1.0
        assert sel.lr == 1e-2
        direct, fit = fit_prior_matching(s, nu, temperature=1.0, lr=1e-2,
                                         steps=200)
        assert rw.r.tobytes() == direct.r.tobytes()
        assert sel.mismatch == fit.final_mismatch

    def test_selects_higher_accuracy(self):
        rng = np.random.default_rng(16)
        s, truth, nu = self._shifted_setup(rng)
        rw, sel = grid_search_pm(s, truth, nu, temperatures=(1.0,),
                                 lrs=(1e-2, 1e-12))
        # the near-zero lr leaves r at 1; pick whichever scored better and
        # confirm the choice is reproducible
        rw2, sel2 = grid_search_pm(s, truth, nu, temperatures=(1.0,),
                                   lrs=(1e-2, 1e-12))
        assert sel == sel2
        assert rw.r.tobytes() == rw2.r.tobytes()

    def test_full_grid_deterministic(self):
        rng = np.random.default_rng(17)
        s, truth, nu = self._shifted_setup(rng, n=60)
        rw1, sel1 = grid_search_pm(s, truth, nu, steps=50)
        rw2, sel2 = grid_search_pm(s, truth, nu, steps=50)
        assert sel1 == sel2
        assert rw1.r.tobytes() == rw2.r.tobytes()
        assert sel1.temperature in PM_TEMPERATURES
        assert sel1.lr in PM_LRS

    def test_pm_predict_matches_manual(self):
        rng = np.random.default_rng(18)
        s, truth, nu = self._shifted_setup(rng, n=40)
        rw, sel = grid_search_pm(s, truth, nu, temperatures=(1.0, 0.5),
                                 lrs=(1e-2,), steps=50)
        pred = pm_predict(s, rw, sel.temperature)
        manual = reweight_predict(temper_scores(s, sel.temperature), rw)
        assert_array_equal(pred.labels, manual.labels)
        assert pred.method == "pm"
