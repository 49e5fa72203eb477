import math

import numpy as np
import pytest

from robustlogit.core import ChoiceDataset, ModelSpec, log_likelihood, log_likelihood_gradient, probabilities
from robustlogit.optimizer import (
    Estimator,
    FitConfig,
    fit_nominal,
    fit_robust_feature,
    fit_robust_label,
    maximize,
)
from robustlogit.robust_feature import FeatureUncertainty, rf_objective
from robustlogit.robust_label import LabelBudget
from robustlogit.synthetic import SimulationConfig, simulate_dataset, three_mode_design


@pytest.fixture(scope="module")
def mnl():
    d = three_mode_design(n_obs=600, seed=3)
    return d.spec, simulate_dataset(d.spec, d.beta, d.config)


@pytest.fixture(scope="module")
def mnl_nominal(mnl):
    spec, data = mnl
    return fit_nominal(data, spec)


def intercept_spec():
    return ModelSpec.from_lists(["a", "b"], ["one"], {"one": ["b"]})


class TestConfig:
    @pytest.mark.parametrize("kw", [{"grad_tol": 0}, {"shrink": 1.0}, {"max_iters": 0}, {"armijo": -1}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            FitConfig(**kw)

    def test_empty_data_rejected(self):
        spec = intercept_spec()
        with pytest.raises(ValueError):
            fit_nominal(ChoiceDataset(np.zeros((0, 1)), np.zeros((0, 2), bool), []), spec)


class TestMaximize:
    def test_concave_quadratic(self):
        c = np.array([1.0, -2.0, 3.0])

        def fun(x):
            return -np.sum((x - c) ** 2), -2 * (x - c)

        opt = maximize(fun, np.zeros(3), FitConfig())
        assert opt.converged
        assert opt.x == pytest.approx(c, abs=1e-6)

    def test_nonsmooth_absolute_value(self):
        def fun(x):
            return -abs(x[0] - 1.5) - 0.5 * x[1] ** 2, np.array([-np.sign(x[0] - 1.5), -x[1]])

        opt = maximize(fun, np.array([0.0, 2.0]), FitConfig())
        assert opt.f == pytest.approx(0.0, abs=1e-4)

    def test_trace_is_monotone(self, mnl):
        spec, data = mnl
        res = fit_robust_label(data, spec, LabelBudget(3.5))
        assert all(b >= a for a, b in zip(res.objective_trace, res.objective_trace[1:]))
        assert res.objective == res.objective_trace[-1]


class TestNominal:
    def test_balanced_intercept(self):
        spec = intercept_spec()
        data = ChoiceDataset(np.ones((10, 1)), np.ones((10, 2), bool), [0, 1] * 5)
        res = fit_nominal(data, spec)
        assert res.converged
        assert abs(res.beta[1, 0]) <= 1e-6

    def test_first_order_condition(self, mnl, mnl_nominal):
        spec, data = mnl
        g = log_likelihood_gradient(spec, mnl_nominal.beta, data)
        assert mnl_nominal.converged
        assert np.max(np.abs(g)) <= 1e-5

    def test_recovers_true_coefficients(self):
        spec = ModelSpec.from_lists(["a", "b"], ["one", "x"], {"one": ["b"], "x": ["b"]})
        true = np.array([[0.0, 0.0], [0.5, -1.0]])
        data = simulate_dataset(spec, true, SimulationConfig(10000, (1.0, -2.0), (1.0, 2.0), seed=7))
        res = fit_nominal(data, spec)
        p = probabilities(spec, res.beta, data)[:, 1]
        info = (data.X * (p * (1 - p))[:, None]).T @ data.X
        se = np.sqrt(np.diag(np.linalg.inv(info)))
        assert np.all(np.abs(res.beta[1] - true[1]) <= 3 * se)

    def test_separable_data(self):
        spec = ModelSpec.from_lists(["a", "b"], ["x"], {"x": ["b"]})
        x = np.array([-2.0, -1.0, 1.0, 2.0])
        data = ChoiceDataset(x[:, None], np.ones((4, 2), bool), (x > 0).astype(int))
        res = fit_nominal(data, spec, FitConfig(max_iters=50))
        assert not res.converged
        assert res.status in ("separated", "max_iters")
        assert res.objective_trace[-1] > res.objective_trace[0]
        assert res.beta[1, 0] > 5

    def test_masked_coordinates_stay_zero(self, mnl, mnl_nominal):
        spec, _ = mnl
        assert np.all(mnl_nominal.beta[~spec.mask] == 0.0)

    def test_deterministic(self, mnl, mnl_nominal):
        spec, data = mnl
        again = fit_nominal(data, spec)
        assert np.array_equal(again.beta, mnl_nominal.beta)
        assert again.objective_trace == mnl_nominal.objective_trace


class TestReductions:
    def test_zero_radius(self, mnl, mnl_nominal):
        spec, data = mnl
        res = fit_robust_feature(data, spec, FeatureUncertainty.single(2, 0.0))
        assert np.max(np.abs(res.beta - mnl_nominal.beta)) <= 1e-6

    def test_zero_budget(self, mnl, mnl_nominal):
        spec, data = mnl
        res = fit_robust_label(data, spec, LabelBudget(0))
        assert np.max(np.abs(res.beta - mnl_nominal.beta)) <= 1e-6


class TestRobustFeature:
    def test_huge_radius_shrinks_to_zero(self, mnl):
        spec, data = mnl
        res = fit_robust_feature(data, spec, FeatureUncertainty.single(2, 1e3))
        assert np.linalg.norm(res.beta) <= 1e-3

    def test_norm_non_increasing_in_radius(self, mnl, mnl_nominal):
        spec, data = mnl
        norms = [np.linalg.norm(mnl_nominal.beta)]
        for rho in (0.01, 0.1, 0.3, 1.0):
            norms.append(np.linalg.norm(fit_robust_feature(data, spec, FeatureUncertainty.single(2, rho)).beta))
        assert all(b <= a + 1e-4 for a, b in zip(norms, norms[1:]))

    def test_fit_beats_nominal_on_robust_objective(self, mnl, mnl_nominal):
        spec, data = mnl
        bud = FeatureUncertainty.single(2, 0.2)
        res = fit_robust_feature(data, spec, bud)
        assert res.objective >= rf_objective(spec, mnl_nominal.beta, data, bud)

    def test_multi_norm_fit(self, mnl):
        spec, data = mnl
        small = data.subset(range(150))
        res = fit_robust_feature(small, spec, FeatureUncertainty.multi([(2, 0.1), (math.inf, 0.05)]))
        assert res.w is not None and res.w.shape == (150, 3, 2, spec.n_features)
        single = fit_robust_feature(small, spec, FeatureUncertainty.single(2, 0.1))
        # a smaller uncertainty set can only help the worst case
        assert res.objective >= single.objective - 1e-6


class TestRobustLabel:
    def test_full_budget_shrinks(self, mnl, mnl_nominal):
        spec, data = mnl
        res = fit_robust_label(data, spec, LabelBudget(data.n_obs))
        assert np.linalg.norm(res.beta) < np.linalg.norm(mnl_nominal.beta)
        # at full budget every observation takes its least likely label and
        # the objective is bounded by the uniform value, attained only at 0
        assert np.linalg.norm(res.beta) <= 1e-4

    def test_training_likelihood_decreases_with_budget(self, mnl, mnl_nominal):
        spec, data = mnl
        lls = [log_likelihood(spec, mnl_nominal.beta, data)]
        for g in (1, 2, 4, 8):
            lls.append(log_likelihood(spec, fit_robust_label(data, spec, LabelBudget(g)).beta, data))
        assert all(b <= a + 1e-8 for a, b in zip(lls, lls[1:]))


class TestEstimator:
    def test_aliases_and_labels(self):
        assert Estimator("mle").label == "nominal"
        assert Estimator("rf", rho=0.1).label == "robust_feature(p=2,rho=0.1)"
        assert Estimator("rl", gamma=4).label == "robust_label(gamma=4)"
        assert Estimator("rf", rho=[0.1, 0.2]).label == "robust_feature(p=2,rho=vector[2])"

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            Estimator("ridge")

    def test_with_value(self):
        assert Estimator("rl").with_value(3).gamma == 3.0
        assert Estimator("rf", p=math.inf).with_value(0.5) == Estimator("rf", rho=0.5, p=math.inf)

    def test_dispatch(self, mnl, mnl_nominal):
        spec, data = mnl
        assert np.array_equal(Estimator("nominal").fit(data, spec).beta, mnl_nominal.beta)
