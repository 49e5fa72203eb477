"""Fisher-information traces, a perturbation error bound and a bias/variance split.

Traces are diagonals of the negative Hessian of the (robust) log-likelihood
with respect to the free coordinates of ``beta``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import softmax

from .core import ChoiceDataset, ModelSpec, probabilities
from .norms import lp_norm, norm_gradient, norm_hessian_diag
from .robust_feature import FeatureUncertainty, robust_margins
from .robust_label import LabelBudget, inner_relabel_minimization

log = logging.getLogger(__name__)

__all__ = [
    "DegeneratePointError",
    "TraceReport",
    "fisher_trace_mle",
    "fisher_trace_robust_feature",
    "fisher_trace_robust_label",
    "compare_traces_robust_feature",
    "compare_traces_robust_label",
    "prediction_error_bound",
    "bias_variance_decomposition",
]


class DegeneratePointError(ValueError):
    """The robust objective is not twice differentiable at the requested point."""


@dataclass(frozen=True)
class TraceReport:
    trace_mle: float
    trace_robust: float
    inequality_holds: bool
    rho_or_gamma: float
    tie: bool = False
    condition1_share: float = float("nan")
    condition2_share: float = float("nan")


def _per_obs_mle_diag(spec: ModelSpec, beta, data: ChoiceDataset) -> np.ndarray:
    """(N, C, K) diagonal of ``-d^2 log P_{n,I_n} / d beta^2``.

    The Hessian of ``log P_{n,j}`` does not depend on ``j``; it is the
    negative Hessian of the log-partition function.
    """
    P = probabilities(spec, beta, data)
    return (P * (1.0 - P))[:, :, None] * (data.X**2)[:, None, :]


def fisher_trace_mle(spec: ModelSpec, beta, data: ChoiceDataset) -> float:
    """``sum_n sum_{(i,k) free} P_in (1 - P_in) x_nk^2``."""
    if data.n_obs == 0:
        return 0.0
    D = _per_obs_mle_diag(spec, beta, data)
    return float(D.sum(axis=0)[spec.mask].sum())


def _rf_diag(spec: ModelSpec, beta, data: ChoiceDataset, budget: FeatureUncertainty) -> np.ndarray:
    con = budget._only()
    beta = spec.check_beta(beta)
    N = data.n_obs
    rho = con.radii(N)
    rows = np.arange(N)
    W = softmax(robust_margins(spec, beta, data, budget), axis=1)
    d = beta[None, :, :] - beta[data.choice][:, None, :]  # (N, C, K)
    others = data.avail.copy()
    others[rows, data.choice] = False
    if np.any(rho > 0):
        nrm = lp_norm(d, con.q)
        bad = others & (rho[:, None] > 0) & (nrm <= 1e-8)
        if bad.any():
            n, j = np.argwhere(bad)[0]
            raise DegeneratePointError(
                f"norm kink at observation {n}, alternative {j}: ||beta_j - beta_I|| <= 1e-8"
            )
    g = norm_gradient(d, con.q)
    H = norm_hessian_diag(d, con.q)
    # coordinates fixed for both alternatives never move and are ignored
    live = others[:, :, None] & (spec.mask[None, :, :] | spec.mask[data.choice][:, None, :])
    H = np.where(live, H, 0.0)
    if not np.all(np.isfinite(H)):
        raise DegeneratePointError("norm Hessian undefined (zero coordinate for q < 2)")
    H = np.where(others[:, :, None], H, 0.0)
    # slope of the margin m_j w.r.t. beta_jk (j != I_n); the chosen row has m = 0
    u = np.where(others[:, :, None], data.X[:, None, :] + rho[:, None, None] * g, 0.0)
    curv = W[:, :, None] * rho[:, None, None] * H
    out = W[:, :, None] * (1.0 - W[:, :, None]) * u**2 + curv
    # beta_{I_n,k} moves every margin by -u_jk: variance of -u under W plus curvature
    mean = np.einsum("nj,njk->nk", W, u)
    var = np.einsum("nj,njk->nk", W, u**2) - mean**2
    out[rows, data.choice] = var + curv.sum(axis=1)
    return out


def fisher_trace_robust_feature(
    spec: ModelSpec, beta, data: ChoiceDataset, budget: FeatureUncertainty
) -> float:
    """Trace of the negative Hessian of the robust-feature objective.

    For ``i != I_n`` the diagonal entry is
    ``W_i (1 - W_i) (x_k + rho g_ik)^2 + W_i rho H_ikk`` with ``W`` the
    softmax of the robust margins, ``g`` and ``H`` the gradient and Hessian
    diagonal of ``||beta_i - beta_{I_n}||_q``.  The chosen alternative's
    coordinates move all margins at once and contribute the weighted
    variance of the slopes plus the weighted curvature.

    Raises
    ------
    DegeneratePointError
        If ``rho > 0`` and some ``||beta_j - beta_{I_n}||_q <= 1e-8``.
    """
    if data.n_obs == 0:
        return 0.0
    D = _rf_diag(spec, beta, data, budget)
    return float(D.sum(axis=0)[spec.mask].sum())


def _rl_trace(spec, beta, data, budget):
    _, sel = inner_relabel_minimization(spec, beta, data, budget)
    # -Hess R = sum_n t_n [(-Hess log P_{J*}) - (-Hess log P_I)].  Both terms are
    # the Hessian of the log-partition function, so R adds nothing to the trace.
    return fisher_trace_mle(spec, beta, data), sel.tie


def fisher_trace_robust_label(spec: ModelSpec, beta, data: ChoiceDataset, budget: LabelBudget) -> float:
    """MLE trace plus the trace of ``-Hess R`` at the active relabelling.

    Ties in the selection are resolved canonically and logged; use
    :func:`compare_traces_robust_label` to get the flag.
    """
    if data.n_obs == 0:
        return 0.0
    trace, tie = _rl_trace(spec, beta, data, budget)
    if tie:
        log.warning("relabelling selection is tied at this point; canonical selection used")
    return trace


def _condition_shares(spec, beta_rf, beta_mle, data, budget):
    con = budget._only()
    rho = con.radii(data.n_obs)
    rows = np.arange(data.n_obs)
    W = softmax(robust_margins(spec, beta_rf, data, budget), axis=1)
    P = probabilities(spec, beta_mle, data)
    c1 = float(np.mean((W * (1 - W)).sum(axis=1) >= (P * (1 - P)).sum(axis=1) - 1e-15))
    d = beta_rf[None, :, :] - beta_rf[data.choice][:, None, :]
    g = norm_gradient(d, con.q)
    others = data.avail.copy()
    others[rows, data.choice] = False
    sel = others[:, :, None] & spec.mask[None, :, :] & (g != 0)
    if not sel.any():
        return c1, float("nan")
    with np.errstate(divide="ignore", invalid="ignore"):
        need = 2.0 * np.abs(data.X[:, None, :] / g)
    ok = rho[:, None, None] >= need
    return c1, float(ok[sel].mean())


def compare_traces_robust_feature(
    spec: ModelSpec, beta_robust, beta_mle, data: ChoiceDataset, budget: FeatureUncertainty
) -> TraceReport:
    """Robust-feature trace at its estimate against the MLE trace at its own.

    Also reports the share of observations meeting the probability-spread
    condition and the share of terms meeting ``rho >= 2 |x_k / g_k|``.
    """
    tr = fisher_trace_robust_feature(spec, beta_robust, data, budget)
    tm = fisher_trace_mle(spec, beta_mle, data)
    c1, c2 = _condition_shares(spec, np.asarray(beta_robust, float), np.asarray(beta_mle, float), data, budget)
    log.info("trace comparison: robust %.6g mle %.6g cond1 %.3f cond2 %.3f", tr, tm, c1, c2)
    rho = budget._only().rho
    rho = float(np.mean(rho))
    return TraceReport(tm, tr, tr >= tm, rho, False, c1, c2)


def compare_traces_robust_label(spec: ModelSpec, beta, data: ChoiceDataset, budget: LabelBudget) -> TraceReport:
    tm = fisher_trace_mle(spec, beta, data)
    tr, tie = _rl_trace(spec, beta, data, budget)
    return TraceReport(tm, tr, tr >= tm, float(budget.gamma), tie)


def prediction_error_bound(
    beta, expected_perturbation_l2: float, lipschitz_L: float = 1.0, baseline_error: float = 0.0
) -> float:
    """``baseline_error + L * E||dx||_2 * ||beta||_2``."""
    if expected_perturbation_l2 < 0 or baseline_error < 0:
        raise ValueError("perturbation size and baseline error must be non-negative")
    if not lipschitz_L > 0:
        raise ValueError("Lipschitz constant must be positive")
    b = np.linalg.norm(np.asarray(beta, dtype=float).ravel())
    return float(baseline_error + lipschitz_L * expected_perturbation_l2 * b)


def bias_variance_decomposition(
    spec: ModelSpec,
    true_beta,
    estimator_kind,
    generator_config,
    replications: int,
    probe_points: Sequence,
    fit_config=None,
) -> tuple[float, float]:
    """Monte-Carlo bias and mean absolute deviation of predicted probabilities.

    Parameters
    ----------
    estimator_kind : Estimator or callable
        An :class:`~robustlogit.optimizer.Estimator`, or ``f(data) -> beta``.
    generator_config : SimulationConfig
        Draws one training set per replication ``r`` (see ``simulate_dataset``).
    probe_points : sequence of x vectors
        Evaluated with every alternative available.

    Returns
    -------
    bias_l1, variance_l1 : float
        ``||P(x|beta*) - mean_r P(x|beta_r)||_1`` and
        ``mean_r ||P(x|beta_r) - mean P||_1``, averaged over the probes.
    """
    from .synthetic import simulate_dataset

    if replications < 2:
        raise ValueError("at least two replications are required")
    Xp = np.atleast_2d(np.asarray(probe_points, dtype=float))
    probe = ChoiceDataset(Xp, np.ones((Xp.shape[0], spec.n_alternatives), bool), np.zeros(Xp.shape[0], int))
    P_true = probabilities(spec, true_beta, probe)
    draws = []
    for r in range(replications):
        data = simulate_dataset(spec, true_beta, generator_config, replication=r)
        if callable(estimator_kind) and not hasattr(estimator_kind, "fit"):
            beta = estimator_kind(data)
        else:
            beta = estimator_kind.fit(data, spec, fit_config).beta
        draws.append(probabilities(spec, beta, probe))
    draws = np.array(draws)  # (R, M, C)
    mean = draws.mean(axis=0)
    bias = np.abs(P_true - mean).sum(axis=1).mean()
    var = np.abs(draws - mean[None]).sum(axis=2).mean()
    return float(bias), float(var)
