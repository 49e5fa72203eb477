"""Robust-feature logit objectives.

Each observation's features may be perturbed by ``dx`` with ``||dx||_p <= rho_n``.
For two alternatives the worst case is available in closed form through the
dual norm; for more alternatives the objective below replaces the inner
log-sum-exp maximum by the sum of per-alternative worst cases (a lower bound
on the exact robust log-likelihood).  Upper bounds, gap bounds and brute-force
oracles for the inner problem live here as well.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp, softmax

from .core import ChoiceDataset, ModelSpec
from .norms import dual_order, lp_norm, norm_gradient

__all__ = [
    "NormConstraint",
    "FeatureUncertainty",
    "pairwise_differences",
    "robust_margins",
    "rf_objective",
    "rf_subgradient",
    "rf_objective_multi",
    "rf_multi_partials",
    "check_norm_split",
    "equal_split",
    "taylor_regularization_view",
    "jensen_gap",
    "jensen_gap_bound",
    "rf_upper_bound_objective",
    "exact_worst_case_oracle",
    "exact_robust_objective",
]


@dataclass(frozen=True, eq=False)
class NormConstraint:
    """``||dx_n||_p <= rho_n``; ``rho`` is a scalar or one radius per observation."""

    p: float
    rho: float | np.ndarray = 0.0

    def __post_init__(self):
        if not float(self.p) >= 1.0:
            raise ValueError(f"norm order must be >= 1, got {self.p}")
        rho = np.asarray(self.rho, dtype=float)
        if rho.ndim > 1:
            raise ValueError("rho must be a scalar or a vector of per-sample radii")
        if (rho < 0).any() or not np.isfinite(rho).all():
            raise ValueError("rho must be finite and non-negative")
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "rho", float(rho) if rho.ndim == 0 else rho)

    @property
    def q(self) -> float:
        return dual_order(self.p)

    def radii(self, n_obs: int) -> np.ndarray:
        rho = np.asarray(self.rho, dtype=float)
        if rho.ndim == 0:
            return np.full(n_obs, float(rho))
        if rho.shape != (n_obs,):
            raise ValueError(f"{rho.shape[0]} radii given for {n_obs} observations")
        return rho


@dataclass(frozen=True, eq=False)
class FeatureUncertainty:
    """Intersection of one or more norm balls around each observation."""

    constraints: tuple[NormConstraint, ...]

    def __post_init__(self):
        cons = tuple(self.constraints)
        if not cons:
            raise ValueError("at least one norm constraint is required")
        object.__setattr__(self, "constraints", cons)

    @classmethod
    def single(cls, p: float, rho) -> "FeatureUncertainty":
        return cls((NormConstraint(p, rho),))

    @classmethod
    def multi(cls, pairs: Sequence[tuple[float, float]]) -> "FeatureUncertainty":
        return cls(tuple(NormConstraint(p, r) for p, r in pairs))

    @property
    def is_single(self) -> bool:
        return len(self.constraints) == 1

    def _only(self) -> NormConstraint:
        if not self.is_single:
            raise ValueError(
                "budget has several norm constraints; use rf_objective_multi"
            )
        return self.constraints[0]


def pairwise_differences(beta) -> np.ndarray:
    """``D[i, j] = beta_j - beta_i`` with shape (C, C, K)."""
    beta = np.asarray(beta, dtype=float)
    return beta[None, :, :] - beta[:, None, :]


def _relative_utilities(spec: ModelSpec, beta, data: ChoiceDataset) -> np.ndarray:
    """``(beta_j - beta_{I_n}) @ x_n``; ``-inf`` where unavailable."""
    beta = spec.check_beta(beta)
    V = data.X @ beta.T
    vI = V[np.arange(data.n_obs), data.choice]
    return np.where(data.avail, V - vI[:, None], -np.inf)


def robust_margins(spec: ModelSpec, beta, data: ChoiceDataset, budget: FeatureUncertainty) -> np.ndarray:
    """Per-alternative worst-case relative utilities, shape (N, C).

    ``(beta_j - beta_{I_n}) @ x_n + rho_n ||beta_j - beta_{I_n}||_q``, with
    ``-inf`` on unavailable alternatives and 0 on the chosen one.
    """
    con = budget._only()
    rho = con.radii(data.n_obs)
    A = _relative_utilities(spec, beta, data)
    norms = lp_norm(pairwise_differences(beta), con.q)
    return A + rho[:, None] * norms[data.choice]


def rf_objective(spec: ModelSpec, beta, data: ChoiceDataset, budget: FeatureUncertainty) -> float:
    """Robust-feature log-likelihood (exact for binary choice sets)."""
    if data.n_obs == 0:
        return 0.0
    return float(-logsumexp(robust_margins(spec, beta, data, budget), axis=1).sum())


def rf_subgradient(spec: ModelSpec, beta, data: ChoiceDataset, budget: FeatureUncertainty) -> np.ndarray:
    """Supergradient of :func:`rf_objective`; zero outside the mask."""
    con = budget._only()
    beta = spec.check_beta(beta)
    rho = con.radii(data.n_obs)
    W = softmax(robust_margins(spec, beta, data, budget), axis=1)
    G = (data.onehot() - W).T @ data.X
    # S[i, j] = sum over observations choosing i of W_nj * rho_n
    S = data.onehot().T @ (W * rho[:, None])
    g = norm_gradient(pairwise_differences(beta), con.q)
    G -= np.einsum("ij,ijk->jk", S, g)
    G += np.einsum("ij,ijk->ik", S, g)
    return np.where(spec.mask, G, 0.0)


# ---------------------------------------------------------------- multi-norm


def _split_penalty(w, budget: FeatureUncertainty, n_obs: int) -> np.ndarray:
    pen = np.zeros(w.shape[:2])
    for p_idx, con in enumerate(budget.constraints):
        pen += con.radii(n_obs)[:, None] * lp_norm(w[:, :, p_idx, :], con.q)
    return pen


def _required_split_sum(spec: ModelSpec, beta, data: ChoiceDataset) -> np.ndarray:
    """``beta_j - beta_{I_n}`` for every (n, j): shape (N, C, K)."""
    beta = spec.check_beta(beta)
    return beta[None, :, :] - beta[data.choice][:, None, :]


def equal_split(spec: ModelSpec, beta, data: ChoiceDataset, budget: FeatureUncertainty) -> np.ndarray:
    """Feasible starting split: each constraint gets ``1/P`` of the difference."""
    P = len(budget.constraints)
    d = _required_split_sum(spec, beta, data)
    return np.repeat(d[:, :, None, :] / P, P, axis=2)


def check_norm_split(spec, beta, w, data: ChoiceDataset, budget: FeatureUncertainty, tol: float = 1e-9):
    """Raise ``ValueError`` unless the pieces of ``w`` add up to the differences."""
    w = np.asarray(w, dtype=float)
    expect = (data.n_obs, spec.n_alternatives, len(budget.constraints), spec.n_features)
    if w.shape != expect:
        raise ValueError(f"norm split has shape {w.shape}, expected {expect}")
    d = _required_split_sum(spec, beta, data)
    err = np.abs(w.sum(axis=2) - d)
    err = np.where(data.avail[:, :, None], err, 0.0)
    if err.size and err.max() > tol:
        n, j, _ = np.unravel_index(int(np.argmax(err)), err.shape)
        raise ValueError(
            f"norm split infeasible at observation {n}, alternative {j} "
            f"(violation {err.max():.3g})"
        )
    return w


def rf_objective_multi(
    spec: ModelSpec, beta, w, data: ChoiceDataset, budget: FeatureUncertainty
) -> float:
    """Robust-feature objective for an intersection of norm balls.

    ``w`` has shape (N, C, P, K); ``w[n, j, i]`` is the share of
    ``beta_j - beta_{I_n}`` priced by constraint ``i``.  Maximising over
    ``w`` (jointly with ``beta``) recovers the worst case of the
    intersection.
    """
    if data.n_obs == 0:
        return 0.0
    w = check_norm_split(spec, beta, w, data, budget)
    A = _relative_utilities(spec, beta, data) + _split_penalty(w, budget, data.n_obs)
    return float(-logsumexp(A, axis=1).sum())


def rf_multi_partials(spec: ModelSpec, beta, w, data: ChoiceDataset, budget: FeatureUncertainty):
    """Partial supergradients of the multi-norm objective.

    ``beta`` and ``w`` are treated as independent here (the split constraint
    is not applied).  Returns ``(G_beta, G_w)`` with shapes (C, K) and
    (N, C, P, K).
    """
    beta = spec.check_beta(beta)
    w = np.asarray(w, dtype=float)
    A = _relative_utilities(spec, beta, data) + _split_penalty(w, budget, data.n_obs)
    W = softmax(A, axis=1)
    G_beta = (data.onehot() - W).T @ data.X
    G_w = np.zeros_like(w)
    for p_idx, con in enumerate(budget.constraints):
        scale = -W * con.radii(data.n_obs)[:, None]
        G_w[:, :, p_idx, :] = scale[:, :, None] * norm_gradient(w[:, :, p_idx, :], con.q)
    return G_beta, G_w


# ------------------------------------------------------- diagnostics & bounds


def taylor_regularization_view(
    spec: ModelSpec, beta, data: ChoiceDataset, budget: FeatureUncertainty
) -> float:
    """First-order expansion of the binary robust objective in the penalty.

    ``sum log P_{n,I_n} - sum (1 - P_{n,I_n}) rho_n ||beta_I - beta_J||_q``.
    Only defined when every observation has exactly two available
    alternatives.
    """
    if (data.avail.sum(axis=1) != 2).any():
        raise ValueError("the Taylor regularization view is defined for binary choice sets only")
    con = budget._only()
    rho = con.radii(data.n_obs)
    A = _relative_utilities(spec, beta, data)
    lse = logsumexp(A, axis=1)
    logp_chosen = -lse
    other = np.where(data.avail & (np.arange(data.n_alternatives) != data.choice[:, None]))[1]
    norms = lp_norm(pairwise_differences(beta), con.q)[data.choice, other]
    p_chosen = np.exp(logp_chosen)
    return float(logp_chosen.sum() - ((1.0 - p_chosen) * rho * norms).sum())


def jensen_gap(spec, beta, data: ChoiceDataset, budget: FeatureUncertainty, n: int, **oracle_kw) -> float:
    """Jensen term minus the exact inner maximum for observation ``n``."""
    jensen = float(logsumexp(robust_margins(spec, beta, data.subset([n]), _subset_budget(budget, n))))
    return jensen - exact_worst_case_oracle(spec, beta, data, budget, n, **oracle_kw)


def jensen_gap_bound(spec: ModelSpec, beta, data: ChoiceDataset, budget: FeatureUncertainty, n: int) -> float:
    """``|C_n| * rho_n * max_{i in C_n} ||beta_i - beta_{I_n}||_q``."""
    con = budget._only()
    beta = spec.check_beta(beta)
    rho = con.radii(data.n_obs)[n]
    avail = np.flatnonzero(data.avail[n])
    diffs = beta[avail] - beta[data.choice[n]]
    return float(len(avail) * rho * lp_norm(diffs, con.q).max())


def rf_upper_bound_objective(
    spec: ModelSpec, beta, data: ChoiceDataset, budget: FeatureUncertainty
) -> float:
    """Upper bound on the exact robust log-likelihood at ``beta``.

    ``-max_i sum_n [(beta_i - beta_{I_n}) @ x_n + rho_n ||beta_i - beta_{I_n}||_q]``;
    an alternative unavailable to ``n`` contributes 0 for that observation
    (the chosen alternative's term), which keeps the bound valid.
    """
    if data.n_obs == 0:
        return 0.0
    M = robust_margins(spec, beta, data, budget)
    M = np.where(data.avail, M, 0.0)
    return float(-M.sum(axis=0).max())


def _subset_budget(budget: FeatureUncertainty, n: int) -> FeatureUncertainty:
    cons = []
    for con in budget.constraints:
        rho = np.asarray(con.rho)
        cons.append(NormConstraint(con.p, float(rho) if rho.ndim == 0 else float(rho[n])))
    return FeatureUncertainty(tuple(cons))


def exact_worst_case_oracle(
    spec: ModelSpec,
    beta,
    data: ChoiceDataset,
    budget: FeatureUncertainty,
    n: int,
    method: str = "vertex",
    n_starts: int = 64,
    n_steps: int = 300,
    seed: int = 0,
) -> float:
    """``max_{||dx||_p <= rho_n} log sum_j exp((beta_j - beta_{I_n}) @ (x_n + dx))``.

    ``method="vertex"`` enumerates the corners of the box (``p = inf``) and is
    exact because the objective is convex in ``dx``.  ``method="sampling"``
    (``p = 2``) runs projected gradient ascent from the per-alternative
    dual-norm maximisers and random points on the sphere; it returns a lower
    bound on the true maximum.
    """
    con = budget._only()
    beta = spec.check_beta(beta)
    rho = con.radii(data.n_obs)[n]
    x = data.X[n]
    avail = np.flatnonzero(data.avail[n])
    D = beta[avail] - beta[data.choice[n]]
    base = D @ x
    if method == "vertex":
        if not np.isinf(con.p):
            raise ValueError("vertex enumeration requires the max-norm ball (p = inf)")
        active = np.flatnonzero(np.any(D != 0, axis=0))
        if active.size > 20:
            raise ValueError("vertex enumeration limited to 20 active features")
        if rho == 0 or active.size == 0:
            return float(logsumexp(base))
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=active.size)))
        vals = base[None, :] + rho * signs @ D[:, active].T
        return float(logsumexp(vals, axis=1).max())
    if method == "sampling":
        if con.p != 2.0:
            raise ValueError("sampling oracle implemented for the Euclidean ball (p = 2)")
        if rho == 0 or not np.any(D):
            return float(logsumexp(base))
        rng = np.random.default_rng(seed)
        K = D.shape[1]
        starts = []
        for d in D:
            nd = np.linalg.norm(d)
            if nd > 0:
                starts.append(rho * d / nd)
        rand = rng.standard_normal((n_starts, K))
        rand *= rho / np.linalg.norm(rand, axis=1, keepdims=True)
        Z = np.vstack([np.array(starts).reshape(-1, K), rand])
        step = rho / 4.0
        best = -np.inf
        for _ in range(n_steps):
            vals = base[None, :] + Z @ D.T
            best = max(best, float(logsumexp(vals, axis=1).max()))
            grad = softmax(vals, axis=1) @ D
            Z = Z + step * grad / np.maximum(np.linalg.norm(grad, axis=1, keepdims=True), 1e-300)
            nz = np.linalg.norm(Z, axis=1, keepdims=True)
            Z = np.where(nz > rho, Z * rho / nz, Z)
            step *= 0.98
        vals = base[None, :] + Z @ D.T
        return max(best, float(logsumexp(vals, axis=1).max()))
    raise ValueError(f"unknown oracle method {method!r}")


def exact_robust_objective(spec, beta, data: ChoiceDataset, budget: FeatureUncertainty, **oracle_kw) -> float:
    """``-sum_n`` of the exact inner maxima (vertex or sampling oracle)."""
    return -sum(exact_worst_case_oracle(spec, beta, data, budget, n, **oracle_kw) for n in range(data.n_obs))
