import math

import numpy as np
import pytest

from robustlogit.core import ChoiceDataset, log_likelihood, log_likelihood_gradient, log_probabilities
from robustlogit.robust_label import (
    LabelBudget,
    inner_relabel_minimization,
    relabel_bruteforce_oracle,
    rl_objective,
    rl_subgradient,
)

from conftest import fd_gradient, random_instance, rel_err


def two_obs(binary_spec):
    """Alternative 'b' chosen twice with probabilities 0.9 and 0.6."""
    beta = np.array([[0.0], [1.0]])
    data = ChoiceDataset([[math.log(9.0)], [math.log(1.5)]], np.ones((2, 2), bool), [1, 1])
    return beta, data


def test_negative_or_infinite_budget():
    with pytest.raises(ValueError):
        LabelBudget(-1)
    with pytest.raises(ValueError):
        LabelBudget(math.inf)


def test_zero_budget(rng):
    spec, data, beta = random_instance(rng, N=10)
    R, sel = inner_relabel_minimization(spec, beta, data, LabelBudget(0))
    assert R == 0.0 and sel.flipped.size == 0
    assert rl_objective(spec, beta, data, LabelBudget(0)) == log_likelihood(spec, beta, data)
    assert np.array_equal(rl_subgradient(spec, beta, data, LabelBudget(0)), log_likelihood_gradient(spec, beta, data))


def test_two_observation_example(binary_spec):
    beta, data = two_obs(binary_spec)
    R, sel = inner_relabel_minimization(binary_spec, beta, data, LabelBudget(1))
    assert list(sel.flipped) == [0]
    assert sel.target[0] == 0
    assert R == pytest.approx(math.log(0.1) - math.log(0.9), abs=1e-12)
    assert R == pytest.approx(-2.19722, abs=1e-5)
    assert log_likelihood(binary_spec, beta, data) == pytest.approx(-0.61619, abs=1e-5)
    assert rl_objective(binary_spec, beta, data, LabelBudget(1)) == pytest.approx(-2.81341, abs=1e-5)
    assert relabel_bruteforce_oracle(binary_spec, beta, data, LabelBudget(1)) == pytest.approx(R, abs=1e-12)


def test_fractional_budget(binary_spec):
    beta, data = two_obs(binary_spec)
    R, sel = inner_relabel_minimization(binary_spec, beta, data, LabelBudget(1.5))
    assert sel.flip == pytest.approx([1.0, 0.5])
    assert R == pytest.approx(math.log(1 / 9) + 0.5 * math.log(0.4 / 0.6), abs=1e-12)


def test_delta_y_is_a_label_move(binary_spec):
    beta, data = two_obs(binary_spec)
    _, sel = inner_relabel_minimization(binary_spec, beta, data, LabelBudget(1))
    dy = sel.delta_y(2, data.choice)
    assert np.array_equal(dy, [[1.0, -1.0], [0.0, 0.0]])


def test_never_flips_a_positive_margin(binary_spec):
    beta = np.array([[0.0], [1.0]])
    # second observation's chosen alternative is the less likely one
    data = ChoiceDataset([[2.0], [1.0]], np.ones((2, 2), bool), [1, 0])
    R, sel = inner_relabel_minimization(binary_spec, beta, data, LabelBudget(2))
    assert list(sel.flipped) == [0]
    assert sel.margin[1] > 0


def test_zero_beta(rng):
    spec, data, _ = random_instance(rng, N=12, C=4)
    R, sel = inner_relabel_minimization(spec, spec.zeros(), data, LabelBudget(5))
    assert R == 0.0 and sel.flipped.size == 0
    expected = -np.log(data.avail.sum(axis=1)).sum()
    assert rl_objective(spec, spec.zeros(), data, LabelBudget(5)) == pytest.approx(expected, abs=1e-12)
    assert np.allclose(
        rl_subgradient(spec, spec.zeros(), data, LabelBudget(5)), log_likelihood_gradient(spec, spec.zeros(), data)
    )


def test_budget_above_n_saturates(rng):
    spec, data, beta = random_instance(rng, N=6)
    R_n, _ = inner_relabel_minimization(spec, beta, data, LabelBudget(6))
    R_big, _ = inner_relabel_minimization(spec, beta, data, LabelBudget(60))
    assert R_n == R_big


def test_monotone_in_budget(rng):
    spec, data, beta = random_instance(rng, N=15, beta_scale=2.0)
    vals = [rl_objective(spec, beta, data, LabelBudget(g)) for g in (0, 0.5, 1, 2, 3.7, 8, 15)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_concave_midpoints():
    rng = np.random.default_rng(9)
    for _ in range(50):
        spec, data, a = random_instance(rng, N=8, C=3, K=3)
        b = spec.project(rng.normal(scale=2, size=a.shape))
        bud = LabelBudget(float(rng.integers(0, 5)) + rng.choice([0.0, 0.5]))
        mid = rl_objective(spec, (a + b) / 2, data, bud)
        assert mid >= 0.5 * (rl_objective(spec, a, data, bud) + rl_objective(spec, b, data, bud)) - 1e-12


def test_greedy_matches_bruteforce():
    rng = np.random.default_rng(10)
    for _ in range(200):
        N = int(rng.integers(1, 7))
        spec, data, beta = random_instance(rng, N=N, C=int(rng.integers(2, 5)), K=2, beta_scale=2.0)
        g = int(rng.integers(0, 4))
        R, _ = inner_relabel_minimization(spec, beta, data, LabelBudget(g))
        assert R == pytest.approx(relabel_bruteforce_oracle(spec, beta, data, LabelBudget(g)), abs=1e-10)


def test_bruteforce_saturated_budget(binary_spec):
    beta = np.array([[0.0], [1.0]])
    data = ChoiceDataset([[1.0], [2.0], [0.5]], np.ones((3, 2), bool), [1, 1, 1])
    _, sel = inner_relabel_minimization(binary_spec, beta, data, LabelBudget(0))
    assert np.all(sel.margin < 0)
    assert relabel_bruteforce_oracle(binary_spec, beta, data, LabelBudget(3)) == pytest.approx(sel.margin.sum())
    assert relabel_bruteforce_oracle(binary_spec, beta, data, LabelBudget(0)) == 0.0


def test_bruteforce_refuses_large_instances(rng):
    spec, data, beta = random_instance(rng, N=11)
    with pytest.raises(ValueError):
        relabel_bruteforce_oracle(spec, beta, data, LabelBudget(1))
    spec, data, beta = random_instance(rng, N=4)
    with pytest.raises(ValueError):
        relabel_bruteforce_oracle(spec, beta, data, LabelBudget(1.5))


def _smooth(spec, beta, data, gamma, h=1e-3):
    """Unique selection with a clear gap at the budget boundary."""
    _, sel = inner_relabel_minimization(spec, beta, data, LabelBudget(gamma))
    if sel.tie:
        return False
    m = np.sort(sel.margin)
    if np.min(np.abs(sel.margin)) < h or np.min(np.diff(m)) < h:
        return False
    logp = log_probabilities(spec, beta, data)
    for n in sel.flipped:
        comp = np.sort(logp[n][data.avail[n] & (np.arange(spec.n_alternatives) != data.choice[n])])
        if comp.size > 1 and comp[1] - comp[0] < h:
            return False
    return True


def test_subgradient_finite_differences():
    rng = np.random.default_rng(11)
    checked = 0
    while checked < 100:
        spec, data, beta = random_instance(rng, N=8, C=3, K=3, beta_scale=1.5)
        gamma = float(rng.choice([1, 2, 2.5, 4]))
        if not _smooth(spec, beta, data, gamma):
            continue
        bud = LabelBudget(gamma)
        g = rl_subgradient(spec, beta, data, bud)
        fd = fd_gradient(lambda b: rl_objective(spec, b, data, bud), spec, beta)
        assert rel_err(g, fd) <= 1e-5
        checked += 1
