"""Perturbed test-set generation, replications, tuning and pricing."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .core import ChoiceDataset, ModelSpec, accuracy, log_likelihood
from .optimizer import Estimator, FitConfig, fit_nominal
from .synthetic import simulate_choices

log = logging.getLogger(__name__)

__all__ = [
    "PerturbationScheme",
    "SyntheticTest",
    "generate_synthetic_test",
    "ReplicationReport",
    "run_replications",
    "grid_search_tune",
    "default_alpha_grid",
    "pricing_optimization",
    "evaluate_revenue",
]

KINDS = ("independent", "over_report", "under_report", "social_desirability")


@dataclass(frozen=True)
class PerturbationScheme:
    """How the synthetic test set is corrupted.

    ``exempt_features`` lists columns left unperturbed (constants such as
    alternative-specific intercepts).
    """

    kind: str = "independent"
    feature_magnitude: float = 0.3
    label_flip_prob: float = 0.1
    time_feature_indices: tuple = ()
    green_mode_indices: tuple = ()
    exempt_features: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}; expected one of {KINDS}")
        if not self.feature_magnitude >= 0:
            raise ValueError("feature_magnitude must be non-negative")
        if not 0.0 <= self.label_flip_prob <= 1.0:
            raise ValueError("label_flip_prob must lie in [0, 1]")
        if self.kind == "social_desirability" and not self.green_mode_indices:
            raise ValueError("social_desirability needs green_mode_indices")
        for name in ("time_feature_indices", "green_mode_indices", "exempt_features"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))


@dataclass(frozen=True, eq=False)
class SyntheticTest:
    beta_test: np.ndarray
    clean: ChoiceDataset  # simulated choices, unperturbed features
    perturbed: ChoiceDataset
    flipped: np.ndarray  # bool mask of relabelled rows


def _feature_noise(X, scheme: PerturbationScheme, rng) -> np.ndarray:
    N, K = X.shape
    half = scheme.feature_magnitude * np.abs(X.mean(axis=0))
    lo, hi = -half, half.copy()
    times = list(scheme.time_feature_indices)
    if scheme.kind == "over_report":
        lo[times] = 0.0
    elif scheme.kind == "under_report":
        hi[times] = 0.0
    lo[list(scheme.exempt_features)] = 0.0
    hi[list(scheme.exempt_features)] = 0.0
    return lo + (hi - lo) * rng.random((N, K))


def _relabel(avail, choice, scheme: PerturbationScheme, rng):
    N, C = avail.shape
    new = choice.copy()
    hit = rng.random(N) < scheme.label_flip_prob
    pick = rng.random(N)
    if scheme.kind == "social_desirability":
        green = np.zeros(C, bool)
        green[list(scheme.green_mode_indices)] = True
        pool = avail & green[None, :]
        eligible = hit & ~green[choice] & pool.any(axis=1)
    else:
        pool = avail.copy()
        pool[np.arange(N), choice] = False
        eligible = hit
    for n in np.flatnonzero(eligible):
        opts = np.flatnonzero(pool[n])
        new[n] = opts[min(int(pick[n] * opts.size), opts.size - 1)]
    return new, eligible


def generate_synthetic_test(
    clean_test: ChoiceDataset,
    spec: ModelSpec,
    scheme: PerturbationScheme,
    beta_test=None,
    fit_config: FitConfig | None = None,
    details: bool = False,
):
    """Build a test set with feature and label errors.

    1. Fit a nominal model on ``clean_test`` and treat it as the true
       mechanism (skipped when ``beta_test`` is given).
    2. Simulate a choice for every row from those probabilities.
    3. Add uniform feature noise of half-width ``m * |mean_k|`` per
       coordinate (one-sided on time features for the reporting schemes) and
       relabel with probability ``label_flip_prob``.  Independent relabelling
       moves the choice to a different available alternative drawn
       uniformly; social desirability moves non-green choices to an
       available green mode.

    Returns ``(beta_test, perturbed)``, or a :class:`SyntheticTest` when
    ``details`` is set.
    """
    if beta_test is None:
        res = fit_nominal(clean_test, spec, fit_config)
        if not res.converged or not np.all(np.isfinite(res.beta)):
            raise ValueError("nominal fit on the clean test set failed; cannot define the test mechanism")
        beta_test = res.beta
    beta_test = spec.project(beta_test)
    rng_y, rng_x, rng_flip = (np.random.default_rng(s) for s in np.random.SeedSequence(scheme.seed).spawn(3))
    simulated = simulate_choices(spec, beta_test, clean_test.X, clean_test.avail, rng_y)
    clean = clean_test.replace(choice=simulated)
    dx = _feature_noise(clean_test.X, scheme, rng_x)
    labels, flipped = _relabel(clean_test.avail, simulated, scheme, rng_flip)
    perturbed = clean_test.replace(X=clean_test.X + dx, choice=labels)
    if details:
        return SyntheticTest(beta_test, clean, perturbed, flipped)
    return beta_test, perturbed


METRICS = ("train_accuracy", "train_ll", "test_accuracy", "test_ll")


@dataclass
class ReplicationReport:
    """Per-replication metrics and their mean and standard deviation per model.

    ``rows`` holds dicts with keys ``model``, ``replication`` and the
    entries of ``METRICS``.  Standard deviations use ``ddof=1`` (0 for a
    single replication).
    """

    models: list
    rows: list = field(default_factory=list)

    def values(self, model: str, metric: str) -> np.ndarray:
        return np.array([r[metric] for r in self.rows if r["model"] == model])

    def aggregate(self) -> dict:
        out = {}
        for m in self.models:
            out[m] = {}
            for k in METRICS:
                v = self.values(m, k)
                out[m][k] = {
                    "mean": float(v.mean()),
                    "std": float(v.std(ddof=1)) if v.size > 1 else 0.0,
                }
        return out

    def mean(self, model: str, metric: str) -> float:
        return float(self.values(model, metric).mean())


def _evaluate(spec, beta, train, test):
    return {
        "train_accuracy": accuracy(spec, beta, train),
        "train_ll": log_likelihood(spec, beta, train),
        "test_accuracy": accuracy(spec, beta, test),
        "test_ll": log_likelihood(spec, beta, test),
    }


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))  # map preserves input order


def run_replications(
    train: ChoiceDataset,
    clean_test: ChoiceDataset,
    spec: ModelSpec,
    models: Sequence[Estimator],
    scheme: PerturbationScheme,
    R: int,
    fit_config: FitConfig | None = None,
    threads: int = 1,
    beta_test=None,
) -> tuple[ReplicationReport, dict]:
    """Fit every model on ``train`` and score it on ``R`` perturbed test sets.

    Replication ``r`` (1-based) perturbs with seed ``scheme.seed + r``.  The
    training set is the same for every replication so each model is fitted
    once.  Returns the report and the fitted results keyed by model label.
    """
    if R < 1:
        raise ValueError("R must be at least 1")
    models = list(models)
    labels = [m.label for m in models]
    if len(set(labels)) != len(labels):
        raise ValueError("model list contains duplicates")

    def fit(m):
        try:
            return m.fit(train, spec, fit_config)
        except Exception as exc:
            raise RuntimeError(f"fitting {m.label} failed: {exc}") from exc

    fits = dict(zip(labels, _map(fit, models, threads)))
    for lab, res in fits.items():
        if not res.converged:
            log.warning("%s did not converge", lab)
    if beta_test is None:
        beta_test, _ = generate_synthetic_test(clean_test, spec, scheme, fit_config=fit_config)

    def one(r):
        test = generate_synthetic_test(
            clean_test, spec, replace(scheme, seed=scheme.seed + r), beta_test=beta_test
        )[1]
        rows = []
        for lab in labels:
            try:
                row = _evaluate(spec, fits[lab].beta, train, test)
            except Exception as exc:
                raise RuntimeError(f"replication {r}, model {lab}: {exc}") from exc
            rows.append({"model": lab, "replication": r, **row})
        return rows

    report = ReplicationReport(labels)
    for rows in _map(one, range(1, R + 1), threads):
        report.rows.extend(rows)
    return report, fits


def grid_search_tune(
    train: ChoiceDataset,
    spec: ModelSpec,
    estimator: Estimator,
    grid: Sequence[float],
    validation_fraction: float = 0.2,
    seed: int = 0,
    fit_config: FitConfig | None = None,
    threads: int = 1,
) -> tuple[float, list]:
    """Pick the hyper-parameter with the best validation log-likelihood.

    ``estimator`` fixes the kind (and ``p`` for robust-feature); each grid
    value is plugged in as ``rho`` or ``gamma``.  Ties go to the smaller
    value.  Returns ``(best_value, table)`` with table rows
    ``(value, validation_ll, converged)`` in grid order.
    """
    grid = [float(v) for v in grid]
    if not grid:
        raise ValueError("grid must not be empty")
    if not 0.0 < validation_fraction < 1.0:
        raise ValueError("validation_fraction must lie in (0, 1)")
    N = train.n_obs
    n_val = int(round(validation_fraction * N))
    if n_val < 1 or n_val >= N:
        raise ValueError("validation split leaves an empty part")
    perm = np.random.default_rng(seed).permutation(N)
    val, sub = train.subset(np.sort(perm[:n_val])), train.subset(np.sort(perm[n_val:]))

    def score(v):
        res = estimator.with_value(v).fit(sub, spec, fit_config)
        return (v, log_likelihood(spec, res.beta, val), res.converged)

    table = _map(score, grid, threads)
    best = max(table, key=lambda row: (row[1], -row[0]))
    return best[0], table


def default_alpha_grid(step: float = 0.01, upper: float = 10.0) -> np.ndarray:
    if not (step > 0 and upper >= 0):
        raise ValueError("alpha grid needs a positive step and a non-negative upper end")
    n = int(round(upper / step))
    return np.round(np.arange(n + 1) * step, 12)


def _revenue_curve(eval_set: ChoiceDataset, spec: ModelSpec, beta, alphas, k: int, i: int) -> np.ndarray:
    beta = spec.check_beta(beta)
    if not spec.mask[i, k]:
        raise ValueError(f"feature {k} does not enter alternative {i}")
    alphas = np.asarray(alphas, dtype=float)
    X = eval_set.X
    V = X @ beta.T  # (N, C)
    cost = X[:, k]
    out = np.empty(alphas.shape[0])
    for a_idx, a in enumerate(alphas):
        Xa = X.copy()
        Xa[:, k] = a * cost
        Va = V.copy()
        Va[:, i] = Xa @ beta[i]
        Va = np.where(eval_set.avail, Va, -np.inf)
        logp = Va[:, i] - logsumexp(Va, axis=1)
        out[a_idx] = float(np.sum(a * cost * np.exp(logp)))
    return out


def pricing_optimization(
    eval_set: ChoiceDataset,
    spec: ModelSpec,
    beta_hat,
    sm_cost_feature: int,
    sm_alternative: int,
    alpha_grid=None,
) -> tuple[float, float]:
    """Grid search for the price multiplier with the highest predicted revenue.

    Revenue at ``alpha`` is ``sum_n alpha * c_n * P_n(alpha)`` with ``c_n``
    the priced alternative's cost and ``P_n`` its probability once its cost
    is rescaled to ``alpha * c_n``.  Ties go to the smaller ``alpha``.
    """
    grid = default_alpha_grid() if alpha_grid is None else np.asarray(alpha_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("alpha grid must not be empty")
    curve = _revenue_curve(eval_set, spec, beta_hat, grid, sm_cost_feature, sm_alternative)
    j = int(np.argmax(curve))  # first maximiser; grid is expected in increasing order
    return float(grid[j]), float(curve[j])


def evaluate_revenue(
    eval_set: ChoiceDataset, spec: ModelSpec, beta_true, alpha: float, sm_cost_feature: int, sm_alternative: int
) -> float:
    """Revenue under the true coefficients and unperturbed attributes."""
    return float(_revenue_curve(eval_set, spec, beta_true, [alpha], sm_cost_feature, sm_alternative)[0])
