import numpy as np
import pytest
from numpy.testing import assert_allclose

from otshift.core import Predictions
from otshift.diagnostics import (
    PerturbationReport,
    accuracy,
    empirical_kappa,
    perturbation_report,
    recall_std,
)
from otshift.errors import DimensionMismatch, MissingClass
from otshift.solver import TransportProblem, solve_exact


def preds(*labels, k=None):
    arr = np.array(labels, dtype=np.int64)
    return Predictions(labels=arr, k=k or int(arr.max()))


class TestAccuracy:
    def test_identical(self):
        p = preds(1, 2, 2, 1)
        assert accuracy(p, p) == 1.0

    def test_disjoint(self):
        assert accuracy(preds(1, 1, k=2), preds(2, 2, k=2)) == 0.0

    def test_half(self):
        assert accuracy(preds(1, 2), preds(1, 1, k=2)) == 0.5

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatch):
            accuracy(preds(1, 2), preds(1, 2, 1))


class TestRecallStd:
    def test_perfect_zero(self):
        p = preds(1, 2, 3, 2)
        assert recall_std(p, p, 3) == 0.0

    def test_one_good_one_bad(self):
        pred = preds(1, 1, 1, 1, k=2)
        truth = preds(1, 1, 2, 2)
        assert recall_std(pred, truth, 2) == 50.0

    def test_equal_recalls_zero(self):
        truth = preds(1, 1, 2, 2, 3, 3)
        pred = preds(1, 2, 2, 3, 3, 1, k=3)  # every class at recall 1/2
        assert recall_std(pred, truth, 3) == 0.0

    def test_missing_class(self):
        with pytest.raises(MissingClass):
            recall_std(preds(1, 2, k=3), preds(1, 2, k=3), 3)

    def test_relabel_invariance(self):
        rng = np.random.default_rng(0)
        truth = 1 + rng.integers(0, 4, 200)
        pred = 1 + rng.integers(0, 4, 200)
        base = recall_std(Predictions(labels=pred, k=4),
                          Predictions(labels=truth, k=4), 4)
        perm = rng.permutation(4)
        truth_p = perm[truth - 1] + 1
        pred_p = perm[pred - 1] + 1
        swapped = recall_std(Predictions(labels=pred_p, k=4),
                             Predictions(labels=truth_p, k=4), 4)
        assert_allclose(swapped, base, rtol=0, atol=1e-12)


def solved(cost, a, b):
    problem = TransportProblem(cost=np.asarray(cost, float),
                               row_masses=a, col_masses=b)
    plan, _ = solve_exact(problem)
    return problem, plan


def random_pair(rng, n=6, k=3, dc_scale=0.1, dnu_scale=0.1):
    cost = rng.uniform(0, 3, (n, k))
    a = np.full(n, 1.0 / n)
    b = rng.dirichlet(np.ones(k))
    base = solved(cost, a, b)
    cost2 = cost + rng.uniform(-dc_scale, dc_scale, (n, k))
    shift = rng.dirichlet(np.ones(k))
    b2 = (1 - dnu_scale) * b + dnu_scale * shift
    pert = solved(cost2, a, b2)
    return base, pert


class TestPerturbationReport:
    def test_identical_all_zero(self):
        rng = np.random.default_rng(1)
        (bp, bpl), _ = random_pair(rng)
        rep = perturbation_report(bp, bpl, bp, bpl)
        assert rep.delta_nu_sq == 0.0
        assert rep.delta_c_pos_sq == 0.0
        assert rep.plan_distance_sq == 0.0
        assert rep.dual_distance_sq == 0.0
        assert abs(rep.suboptimality) <= 1e-9

    def test_delta_nu_arithmetic(self):
        cost = [[1.0, 2.0], [2.0, 1.0]]
        a = [0.5, 0.5]
        bp, bpl = solved(cost, a, [0.5, 0.5])
        pp, ppl = solved(cost, a, [0.6, 0.4])
        rep = perturbation_report(bp, bpl, pp, ppl)
        assert_allclose(rep.delta_nu_sq, 0.02, rtol=0, atol=1e-15)
        assert rep.delta_c_pos_sq == 0.0

    def test_column_constant_cost_keeps_plan(self):
        rng = np.random.default_rng(2)
        cost = rng.uniform(0, 3, (8, 3))
        a = np.full(8, 1.0 / 8)
        b = np.array([0.2, 0.5, 0.3])
        bp, bpl = solved(cost, a, b)
        pp, ppl = solved(cost + np.array([0.4, -0.2, 0.1]), a, b)
        rep = perturbation_report(bp, bpl, pp, ppl)
        assert rep.plan_distance_sq == 0.0

    def test_cost_decrease_has_zero_positive_part(self):
        rng = np.random.default_rng(3)
        cost = rng.uniform(1, 3, (5, 3))
        a = np.full(5, 0.2)
        b = np.array([0.3, 0.3, 0.4])
        bp, bpl = solved(cost, a, b)
        pp, ppl = solved(cost - rng.uniform(0, 0.5, (5, 3)), a, b)
        rep = perturbation_report(bp, bpl, pp, ppl)
        assert rep.delta_c_pos_sq == 0.0
        assert rep.suboptimality >= -1e-9

    def test_pairing_identity(self):
        # for exactly solved pairs the signed suboptimality collapses to
        # dnu . v_pert - <dC, plan_pert>
        rng = np.random.default_rng(4)
        for _ in range(10):
            (bp, bpl), (pp, ppl) = random_pair(rng)
            rep = perturbation_report(bp, bpl, pp, ppl)
            dnu = pp.col_masses - bp.col_masses
            dc = pp.cost.values - bp.cost.values
            expected = float(dnu @ ppl.col_duals) - float(
                (dc * ppl.coupling).sum())
            assert_allclose(rep.suboptimality, expected, rtol=0, atol=1e-9)

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(5)
        (bp, bpl), _ = random_pair(rng, n=4, k=3)
        (pp, ppl), _ = random_pair(rng, n=5, k=3)
        with pytest.raises(DimensionMismatch):
            perturbation_report(bp, bpl, pp, ppl)


class TestEmpiricalKappa:
    def test_identical_undefined(self):
        rep = PerturbationReport(0.0, 0.0, 0.0, 0.0, 0.0)
        assert empirical_kappa(rep) is None

    def test_finite_for_real_pair(self):
        rng = np.random.default_rng(6)
        (bp, bpl), (pp, ppl) = random_pair(rng)
        kappa = empirical_kappa(perturbation_report(bp, bpl, pp, ppl))
        assert kappa is not None
        assert np.isfinite(kappa)
        assert kappa >= 0.0

    def test_sweep_max_finite(self):
        rng = np.random.default_rng(7)
        cost = rng.uniform(0, 3, (6, 3))
        a = np.full(6, 1 / 6)
        b = np.array([0.2, 0.3, 0.5])
        bp, bpl = solved(cost, a, b)
        kappas = []
        for _ in range(20):
            cost2 = cost + rng.uniform(-0.2, 0.2, (6, 3))
            b2 = np.clip(b + rng.uniform(-0.05, 0.05, 3), 0.01, None)
            b2 = b2 / b2.sum()
            pp, ppl = solved(cost2, a, b2)
            kappa = empirical_kappa(perturbation_report(bp, bpl, pp, ppl))
            if kappa is not None:
                kappas.append(kappa)
        assert kappas
        assert np.isfinite(max(kappas))
