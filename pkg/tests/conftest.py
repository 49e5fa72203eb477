import numpy as np
import pytest

from robustlogit.core import ChoiceDataset, ModelSpec


def random_spec(rng, C, K):
    """Base alternative 0 has an empty row; every feature enters >= 1 other alternative."""
    mask = np.zeros((C, K), dtype=bool)
    for k in range(K):
        n_in = rng.integers(1, C)  # between 1 and C-1 alternatives
        alts = rng.choice(np.arange(1, C), size=n_in, replace=False)
        mask[alts, k] = True
    return ModelSpec(tuple(f"a{i}" for i in range(C)), tuple(f"f{k}" for k in range(K)), mask, 0)


def random_data(rng, spec, N, avail_prob=0.8, scale=1.0):
    C, K = spec.n_alternatives, spec.n_features
    X = rng.uniform(-1, 1, size=(N, K)) * scale
    avail = rng.random((N, C)) < avail_prob
    avail[avail.sum(axis=1) < 2] = True
    choice = np.array([rng.choice(np.flatnonzero(a)) for a in avail])
    return ChoiceDataset(X, avail, choice)


def random_instance(rng, N=6, C=3, K=3, avail_prob=0.8, beta_scale=1.0):
    spec = random_spec(rng, C, K)
    data = random_data(rng, spec, N, avail_prob)
    beta = spec.project(rng.normal(scale=beta_scale, size=(C, K)))
    return spec, data, beta


def fd_gradient(f, spec, beta, h=1e-5):
    """Central differences over the free coordinates."""
    g = np.zeros(spec.mask.shape)
    for i, k in zip(*np.nonzero(spec.mask)):
        e = np.zeros_like(beta)
        e[i, k] = h
        g[i, k] = (f(beta + e) - f(beta - e)) / (2 * h)
    return g


def rel_err(a, b):
    return float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b))))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def binary_spec():
    # one feature entering alternative "b" only
    return ModelSpec.from_lists(["a", "b"], ["x"], {"x": ["b"]})


# one line per acceptance criterion, printed after the test session
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
