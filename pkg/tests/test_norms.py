import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robustlogit.norms import (
    dual_norm_maximizer,
    dual_norm_value,
    dual_order,
    lp_norm,
    norm_gradient,
    norm_hessian_diag,
)


def test_dual_orders():
    assert dual_order(1) == math.inf
    assert dual_order(math.inf) == 1.0
    assert dual_order(2) == 2.0
    assert dual_order(3) == pytest.approx(1.5)


def test_invalid_order():
    with pytest.raises(ValueError):
        dual_order(0.5)
    with pytest.raises(ValueError):
        dual_norm_value([1.0], 2, -1.0)


@pytest.mark.parametrize(
    "v,p,rho,expected",
    [((3, 4), 2, 1.0, 5.0), ((3, -4), 1, 2.0, 8.0), ((3, -4), math.inf, 0.5, 3.5)],
)
def test_dual_norm_examples(v, p, rho, expected):
    assert dual_norm_value(np.array(v, float), p, rho) == pytest.approx(expected)


def test_lp_norm_large_order_no_overflow():
    v = np.array([1e200, 1e200])
    assert lp_norm(v, 50) == pytest.approx(1e200 * 2 ** (1 / 50))


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 2**31 - 1),
    p=st.sampled_from([1.0, 1.5, 2.0, 3.0, 10.0, math.inf]),
    rho=st.floats(0.0, 5.0),
)
def test_maximizer_attains_value_and_is_feasible(seed, p, rho):
    v = np.random.default_rng(seed).normal(size=5)
    d = dual_norm_maximizer(v, p, rho)
    assert lp_norm(d, p) <= rho * (1 + 1e-12) + 1e-15
    assert v @ d == pytest.approx(dual_norm_value(v, p, rho), rel=1e-9, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), p=st.sampled_from([1.0, 2.0, 3.0, math.inf]))
def test_holder_inequality_on_samples(seed, p):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=4)
    rho = rng.uniform(0, 3)
    D = rng.normal(size=(500, 4))
    D *= (rho * rng.random((500, 1))) / lp_norm(D, p)[:, None]
    assert np.all(D @ v <= dual_norm_value(v, p, rho) + 1e-12)


def test_gradient_at_zero_is_zero():
    for q in (1.0, 2.0, 3.0, math.inf):
        assert not np.any(norm_gradient(np.zeros(3), q))


@pytest.mark.parametrize("q", [1.5, 2.0, 3.0, 7.0])
def test_gradient_and_hessian_by_finite_differences(q):
    rng = np.random.default_rng(1)
    v = rng.normal(size=4)
    h = 1e-5
    g = norm_gradient(v, q)
    H = norm_hessian_diag(v, q)
    for k in range(4):
        e = np.zeros(4)
        e[k] = h
        fd = (lp_norm(v + e, q) - lp_norm(v - e, q)) / (2 * h)
        assert g[k] == pytest.approx(fd, rel=1e-6)
        fd2 = (lp_norm(v + e, q) - 2 * lp_norm(v, q) + lp_norm(v - e, q)) / h**2
        assert H[k] == pytest.approx(fd2, rel=1e-4, abs=1e-5)


def test_hessian_vanishes_for_polyhedral_norms():
    v = np.array([1.0, -2.0, 0.5])
    assert not norm_hessian_diag(v, 1.0).any()
    assert not norm_hessian_diag(v, math.inf).any()
