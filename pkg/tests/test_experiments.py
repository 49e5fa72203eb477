import math

import numpy as np
import pytest

from robustlogit.core import ChoiceDataset
from robustlogit.experiments import (
    METRICS,
    PerturbationScheme,
    default_alpha_grid,
    evaluate_revenue,
    generate_synthetic_test,
    grid_search_tune,
    pricing_optimization,
    run_replications,
)
from robustlogit.optimizer import Estimator, fit_nominal
from robustlogit.synthetic import binary_mode_design, simulate_dataset, three_mode_design


@pytest.fixture(scope="module")
def design():
    return three_mode_design(n_obs=400, seed=5)


@pytest.fixture(scope="module")
def sets(design):
    train = simulate_dataset(design.spec, design.beta, design.config, replication=0)
    clean = simulate_dataset(design.spec, design.beta, design.config, replication=1)
    return train, clean


def scheme_for(design, **kw):
    kw.setdefault("time_feature_indices", design.time_features)
    kw.setdefault("green_mode_indices", design.green_modes)
    kw.setdefault("exempt_features", design.exempt_features)
    return PerturbationScheme(**kw)


class TestScheme:
    @pytest.mark.parametrize(
        "kw", [{"kind": "random"}, {"feature_magnitude": -0.1}, {"label_flip_prob": 1.5}, {"kind": "social_desirability"}]
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            PerturbationScheme(**kw)


class TestGenerator:
    def test_zero_perturbation(self, design, sets):
        _, clean = sets
        s = scheme_for(design, feature_magnitude=0.0, label_flip_prob=0.0, seed=3)
        out = generate_synthetic_test(clean, design.spec, s, details=True)
        assert np.array_equal(out.perturbed.X, out.clean.X)
        assert np.array_equal(out.perturbed.X, clean.X)
        assert np.array_equal(out.perturbed.choice, out.clean.choice)
        assert not out.flipped.any()

    def test_flip_count(self, design):
        d = three_mode_design(n_obs=1000, seed=6)
        clean = simulate_dataset(d.spec, d.beta, d.config)
        beta = fit_nominal(clean, d.spec).beta
        lim = 3 * math.sqrt(1000 * 0.1 * 0.9)
        for seed in range(10):
            out = generate_synthetic_test(clean, d.spec, scheme_for(d, seed=seed), beta_test=beta, details=True)
            n_flip = int(out.flipped.sum())
            assert abs(n_flip - 100) <= lim
            changed = out.perturbed.choice != out.clean.choice
            assert np.array_equal(changed, out.flipped)

    def test_deterministic(self, design, sets):
        _, clean = sets
        s = scheme_for(design, seed=11)
        b1, p1 = generate_synthetic_test(clean, design.spec, s)
        b2, p2 = generate_synthetic_test(clean, design.spec, s)
        assert np.array_equal(b1, b2)
        assert np.array_equal(p1.X, p2.X) and np.array_equal(p1.choice, p2.choice)

    def test_noise_within_box(self, design, sets):
        _, clean = sets
        out = generate_synthetic_test(clean, design.spec, scheme_for(design, seed=1), details=True)
        dx = out.perturbed.X - clean.X
        half = 0.3 * np.abs(clean.X.mean(axis=0))
        assert np.all(np.abs(dx) <= half + 1e-12)
        assert np.all(dx[:, list(design.exempt_features)] == 0)

    @pytest.mark.parametrize("kind,sign", [("over_report", 1), ("under_report", -1)])
    def test_one_sided_time_noise(self, design, sets, kind, sign):
        _, clean = sets
        out = generate_synthetic_test(clean, design.spec, scheme_for(design, kind=kind, seed=2), details=True)
        dx = out.perturbed.X - clean.X
        times = list(design.time_features)
        assert np.all(sign * dx[:, times] >= 0)
        others = [k for k in range(clean.X.shape[1]) if k not in times and k not in design.exempt_features]
        assert (dx[:, others] < 0).any() and (dx[:, others] > 0).any()

    def test_social_desirability_moves_to_green(self, design, sets):
        _, clean = sets
        out = generate_synthetic_test(
            clean, design.spec, scheme_for(design, kind="social_desirability", label_flip_prob=0.5, seed=4), details=True
        )
        green = set(design.green_modes)
        idx = np.flatnonzero(out.flipped)
        assert idx.size > 0
        assert all(out.perturbed.choice[n] in green for n in idx)
        assert all(out.clean.choice[n] not in green for n in idx)

    def test_failed_mechanism_fit(self, design):
        # completely separated data: the nominal fit has no finite maximiser
        spec = binary_mode_design(10).spec
        X = np.array([[1.0, 1.0, 1.0, 0.5, 1.0], [1.0, 1.0, 2.0, 0.5, 1.0]])
        bad = ChoiceDataset(X, [[1, 1], [1, 1]], [0, 1])
        with pytest.raises(ValueError):
            generate_synthetic_test(bad, spec, PerturbationScheme(), fit_config=None)


class TestReplications:
    def test_single_replication(self, design, sets):
        train, clean = sets
        rep, fits = run_replications(train, clean, design.spec, [Estimator()], scheme_for(design), R=1)
        assert len(rep.rows) == 1
        agg = rep.aggregate()
        assert set(agg["nominal"]) == set(METRICS)
        assert agg["nominal"]["test_ll"]["std"] == 0.0
        assert "nominal" in fits

    def test_reductions_agree(self, design, sets):
        train, clean = sets
        models = [Estimator(), Estimator("rf", rho=0.0), Estimator("rl", gamma=0.0)]
        rep, _ = run_replications(train, clean, design.spec, models, scheme_for(design), R=3)
        base = rep.values("nominal", "test_ll")
        for m in models[1:]:
            for k in METRICS:
                assert np.allclose(rep.values(m.label, k), rep.values("nominal", k), atol=1e-6)
        assert base.shape == (3,)

    def test_threads_do_not_change_results(self, design, sets):
        train, clean = sets
        models = [Estimator(), Estimator("rl", gamma=2)]
        a, _ = run_replications(train, clean, design.spec, models, scheme_for(design), R=4)
        b, _ = run_replications(train, clean, design.spec, models, scheme_for(design), R=4, threads=3)
        assert a.rows == b.rows

    def test_duplicate_models(self, design, sets):
        train, clean = sets
        with pytest.raises(ValueError):
            run_replications(train, clean, design.spec, [Estimator(), Estimator("mle")], scheme_for(design), R=1)


class TestTuning:
    def test_single_value(self, design, sets):
        train, _ = sets
        best, table = grid_search_tune(train, design.spec, Estimator("rf"), [0.1])
        assert best == 0.1 and len(table) == 1

    def test_huge_radius_loses(self, design, sets):
        train, _ = sets
        best, table = grid_search_tune(train, design.spec, Estimator("rf"), [0.0, 1e6])
        assert best == 0.0
        assert table[0][1] > table[1][1]

    def test_tie_goes_to_smaller(self, design, sets):
        train, _ = sets
        # both budgets exceed the sub-training size, so the fits are identical
        best, table = grid_search_tune(train, design.spec, Estimator("rl"), [1e9, 1e8])
        assert table[0][1] == table[1][1]
        assert best == 1e8

    def test_empty_grid(self, design, sets):
        train, _ = sets
        with pytest.raises(ValueError):
            grid_search_tune(train, design.spec, Estimator("rf"), [])


class TestPricing:
    def test_grid(self):
        g = default_alpha_grid()
        assert g.size == 1001 and g[0] == 0.0 and g[-1] == 10.0
        assert g[255] == 2.55

    def test_zero_cost_coefficient(self, design, sets):
        _, clean = sets
        beta = design.beta.copy()
        beta[design.priced_alternative, design.cost_feature] = 0.0
        alpha, rev = pricing_optimization(clean, design.spec, beta, design.cost_feature, design.priced_alternative)
        assert alpha == 10.0 and rev > 0

    def test_hand_evaluation(self, design):
        k, i = design.cost_feature, design.priced_alternative
        x = np.array([[1.0, 0.6, 1.2, 0.5, 0.8, 0.7, 1.0, 1.0]])
        one = ChoiceDataset(x, [[1, 0, 1]], [0])
        b = design.beta
        for a in (0.5, 1.0, 3.0):
            v_train = x[0] @ b[0]
            xa = x[0].copy()
            xa[k] *= a
            v_sm = xa @ b[i]
            expect = a * x[0, k] * math.exp(v_sm) / (math.exp(v_sm) + math.exp(v_train))
            _, got = pricing_optimization(one, design.spec, b, k, i, alpha_grid=[a])
            assert got == pytest.approx(expect, abs=1e-12)

    def test_zero_price(self, design, sets):
        _, clean = sets
        assert evaluate_revenue(clean, design.spec, design.beta, 0.0, design.cost_feature, design.priced_alternative) == 0.0
        _, rev = pricing_optimization(clean, design.spec, design.beta, design.cost_feature, design.priced_alternative)
        assert rev >= 0.0

    def test_oracle_dominates(self, design, sets):
        train, clean = sets
        k, i = design.cost_feature, design.priced_alternative
        a_star, _ = pricing_optimization(clean, design.spec, design.beta, k, i)
        best = evaluate_revenue(clean, design.spec, design.beta, a_star, k, i)
        for est in (Estimator(), Estimator("rf", rho=0.3), Estimator("rl", gamma=8)):
            a_m, _ = pricing_optimization(clean, design.spec, est.fit(train, design.spec).beta, k, i)
            assert best >= evaluate_revenue(clean, design.spec, design.beta, a_m, k, i)

    def test_predicted_equals_actual(self, design, sets):
        _, clean = sets
        k, i = design.cost_feature, design.priced_alternative
        a, pred = pricing_optimization(clean, design.spec, design.beta, k, i)
        assert pred == evaluate_revenue(clean, design.spec, design.beta, a, k, i)

    def test_errors(self, design, sets):
        _, clean = sets
        with pytest.raises(ValueError):
            pricing_optimization(clean, design.spec, design.beta, design.cost_feature, design.priced_alternative, [])
        with pytest.raises(ValueError):
            pricing_optimization(clean, design.spec, design.beta, design.cost_feature, 0)
