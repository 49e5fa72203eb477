"""Robust-label logit: worst case over at most ``gamma`` relabelled choices.

The inner minimisation over the (convex hull of the) relabelling set is a
fractional knapsack: every observation has a single best target alternative
``J*_n`` (its least likely competitor) with margin
``d_n = log P_{n,J*} - log P_{n,I_n}``, and the budget is spent on the most
negative margins first.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import ChoiceDataset, ModelSpec, log_likelihood, log_likelihood_gradient, log_probabilities

__all__ = [
    "LabelBudget",
    "WorstCaseRelabeling",
    "inner_relabel_minimization",
    "rl_objective",
    "rl_subgradient",
    "relabel_bruteforce_oracle",
]


@dataclass(frozen=True)
class LabelBudget:
    gamma: float = 0.0

    def __post_init__(self):
        if not (self.gamma >= 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be finite and non-negative, got {self.gamma}")

    def effective(self, n_obs: int) -> float:
        return min(float(self.gamma), float(n_obs))


@dataclass(frozen=True, eq=False)
class WorstCaseRelabeling:
    """Sparse relabelling: observation ``n`` moves ``flip[n]`` of its label to ``target[n]``.

    ``target`` is -1 where no competitor exists.  ``margin`` holds ``d_n``
    and ``tie`` flags a non-unique selection (equal margins at the budget
    boundary, or several least-likely competitors on a flipped observation).
    """

    flip: np.ndarray
    target: np.ndarray
    margin: np.ndarray
    tie: bool = False

    @property
    def flipped(self) -> np.ndarray:
        return np.flatnonzero(self.flip > 0)

    def delta_y(self, n_alternatives: int, choice) -> np.ndarray:
        """Dense ``(N, C)`` label perturbation."""
        n = self.flip.shape[0]
        dy = np.zeros((n, n_alternatives))
        idx = self.flipped
        dy[idx, np.asarray(choice)[idx]] -= self.flip[idx]
        dy[idx, self.target[idx]] += self.flip[idx]
        return dy


def _margins(spec: ModelSpec, beta, data: ChoiceDataset):
    logp = log_probabilities(spec, beta, data)
    rows = np.arange(data.n_obs)
    competitors = np.where(data.avail, logp, np.inf)
    competitors[rows, data.choice] = np.inf
    # argmin returns the first minimiser: lowest alternative index on ties
    target = np.argmin(competitors, axis=1)
    low = competitors[rows, target]
    n_low = (competitors == low[:, None]).sum(axis=1)
    margin = low - logp[rows, data.choice]
    return margin, target, n_low > 1


def inner_relabel_minimization(
    spec: ModelSpec, beta, data: ChoiceDataset, budget: LabelBudget
) -> tuple[float, WorstCaseRelabeling]:
    """Value ``R(beta; gamma) <= 0`` and the minimising relabelling."""
    N = data.n_obs
    margin, target, multi = _margins(spec, beta, data)
    flip = np.zeros(N)
    gamma = budget.effective(N)
    tie = False
    if N and gamma > 0:
        cand = np.flatnonzero(margin < 0)
        # stable sort: equal margins keep observation order
        order = cand[np.argsort(margin[cand], kind="stable")]
        whole = int(math.floor(gamma))
        frac = gamma - whole
        flip[order[:whole]] = 1.0
        if frac > 0 and whole < order.size:
            flip[order[whole]] = frac
        n_sel = whole + (1 if frac > 0 else 0)
        if 0 < n_sel < order.size:
            tie = bool(margin[order[n_sel - 1]] == margin[order[n_sel]])
        tie = tie or bool(multi[flip > 0].any())
    R = float((flip * margin).sum()) if N else 0.0
    return R, WorstCaseRelabeling(flip, target, margin, tie)


def rl_objective(spec: ModelSpec, beta, data: ChoiceDataset, budget: LabelBudget) -> float:
    """Nominal log-likelihood plus the worst-case relabelling term."""
    R, _ = inner_relabel_minimization(spec, beta, data, budget)
    return log_likelihood(spec, beta, data) + R


def rl_subgradient(spec: ModelSpec, beta, data: ChoiceDataset, budget: LabelBudget) -> np.ndarray:
    """Supergradient at the active selection.

    ``grad log P_j - grad log P_I = (e_j - e_I) x^T``, so the relabelling
    term contributes a sum of outer products independent of the probabilities.
    """
    G = log_likelihood_gradient(spec, beta, data)
    _, sel = inner_relabel_minimization(spec, beta, data, budget)
    idx = sel.flipped
    if idx.size:
        T = np.zeros((idx.size, spec.n_alternatives))
        T[np.arange(idx.size), sel.target[idx]] += sel.flip[idx]
        T[np.arange(idx.size), data.choice[idx]] -= sel.flip[idx]
        G = G + np.where(spec.mask, T.T @ data.X[idx], 0.0)
    return G


def relabel_bruteforce_oracle(
    spec: ModelSpec, beta, data: ChoiceDataset, budget: LabelBudget
) -> float:
    """Exact minimum over the integer relabelling set by enumeration.

    Every subset of at most ``gamma`` observations and every choice of
    replacement label is tried.  Limited to ``N <= 10``, ``|C_n| <= 4`` and
    integer ``gamma <= 3``.
    """
    N = data.n_obs
    gamma = budget.gamma
    if gamma != int(gamma):
        raise ValueError("brute-force oracle needs an integer gamma")
    if N > 10 or gamma > 3 or (N and data.avail.sum(axis=1).max() > 4):
        raise ValueError("instance too large for brute-force enumeration")
    gamma = min(int(gamma), N)
    logp = log_probabilities(spec, beta, data)
    options = []
    for n in range(N):
        I = data.choice[n]
        opts = [logp[n, j] - logp[n, I] for j in np.flatnonzero(data.avail[n]) if j != I]
        options.append(opts)
    best = 0.0
    for g in range(1, gamma + 1):
        for subset in itertools.combinations(range(N), g):
            for picks in itertools.product(*(options[n] for n in subset)):
                best = min(best, float(sum(picks)))
    return best
