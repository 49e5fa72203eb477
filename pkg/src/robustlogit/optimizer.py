"""Maximisation of the nominal, robust-feature and robust-label objectives.

All objectives are concave in the free coefficients but the robust ones are
nonsmooth (norm kinks, changes of the relabelling selection).  The ascent is a
limited-memory quasi-Newton method with Armijo backtracking; when the line
search stalls it switches to normalised supergradient steps of length
``c / sqrt(t)`` and keeps the best iterate, then resumes quasi-Newton if that
helped.
"""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import ChoiceDataset, ModelSpec, log_likelihood, log_likelihood_gradient, log_probabilities
from .robust_feature import (
    FeatureUncertainty,
    rf_multi_partials,
    rf_objective,
    rf_objective_multi,
    rf_subgradient,
)
from .norms import lp_norm
from .robust_label import LabelBudget, rl_objective, rl_subgradient

log = logging.getLogger(__name__)

__all__ = [
    "FitConfig",
    "FitResult",
    "maximize",
    "fit_nominal",
    "fit_robust_feature",
    "fit_robust_label",
    "optimize_norm_split",
    "Estimator",
]


@dataclass
class FitConfig:
    init: Optional[np.ndarray] = None
    max_iters: int = 2000
    grad_tol: float = 1e-6
    obj_rel_tol: float = 1e-9
    shrink: float = 0.5
    armijo: float = 1e-4
    subgrad_c: float = 0.1
    subgrad_steps: int = 200
    memory: int = 10
    stall_window: int = 20

    def __post_init__(self):
        for name in ("grad_tol", "obj_rel_tol", "armijo", "subgrad_c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class FitResult:
    beta: np.ndarray
    objective: float
    iterations: int
    converged: bool
    objective_trace: list = field(default_factory=list)
    w: Optional[np.ndarray] = None
    status: str = ""


@dataclass
class _Opt:
    x: np.ndarray
    f: float
    iterations: int
    converged: bool
    trace: list
    status: str


def _two_loop(g, S, Y):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        a = (s @ q) / (y @ s)
        alphas.append(a)
        q -= a * y
    if S:
        s, y = S[-1], Y[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), a in zip(zip(S, Y), reversed(alphas)):
        b = (y @ q) / (y @ s)
        q += (a - b) * s
    return q


def maximize(fun: Callable, x0, config: FitConfig | None = None) -> _Opt:
    """Maximise ``fun(x) -> (value, supergradient)`` from ``x0``."""
    cfg = config or FitConfig()
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    trace = [f]
    it = 0
    S: deque = deque(maxlen=cfg.memory)
    Y: deque = deque(maxlen=cfg.memory)
    status = "max_iters"
    converged = False
    if x.size == 0:
        return _Opt(x, f, 0, True, trace, "empty")

    def line_search(x, f, g, d):
        gd = g @ d
        t = 1.0
        gnorm = np.linalg.norm(g)
        for _ in range(80):
            xn = x + t * d
            fn, gn = fun(xn)
            if np.isfinite(fn):
                if fn >= f + cfg.armijo * t * gd:
                    return xn, fn, gn
                # changes at round-off level: accept if the slope shrinks
                if abs(fn - f) <= 1e-13 * (1.0 + abs(f)) and np.linalg.norm(gn) < gnorm:
                    return xn, fn, gn
            t *= cfg.shrink
        return None

    while it < cfg.max_iters:
        if np.max(np.abs(g)) <= cfg.grad_tol:
            converged, status = True, "gradient"
            break
        d = _two_loop(g, S, Y) if S else g / max(np.linalg.norm(g), 1.0)
        if g @ d <= 0:
            S.clear(), Y.clear()
            d = g / max(np.linalg.norm(g), 1.0)
        step = line_search(x, f, g, d)
        if step is None and S:
            S.clear(), Y.clear()
            step = line_search(x, f, g, g / max(np.linalg.norm(g), 1.0))
        stalled = step is None
        if not stalled:
            xn, fn, gn = step
            s, y = xn - x, g - gn
            if s @ y > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
                S.append(s)
                Y.append(y)
            x, f, g = xn, fn, gn
            trace.append(f)
            it += 1
            w = cfg.stall_window
            if len(trace) > w and trace[-1] - trace[-1 - w] <= cfg.obj_rel_tol * max(1.0, abs(f)):
                stalled = True
        if stalled:
            # supergradient phase from the current (best) point
            xb, fb, gb = x, f, g
            xt, gt = x, g
            for t in range(1, cfg.subgrad_steps + 1):
                if it >= cfg.max_iters:
                    break
                nrm = np.linalg.norm(gt)
                if nrm == 0:
                    break
                xt = xt + (cfg.subgrad_c / np.sqrt(t)) * gt / nrm
                ft, gt = fun(xt)
                it += 1
                if ft > fb:
                    xb, fb, gb = xt, ft, gt
            if fb - f > cfg.obj_rel_tol * max(1.0, abs(f)):
                x, f, g = xb, fb, gb
                trace.append(f)
                S.clear(), Y.clear()
                continue
            converged, status = True, "stationary"
            break
    return _Opt(x, f, it, converged, trace, status)


def _init(spec: ModelSpec, config: FitConfig) -> np.ndarray:
    if config.init is None:
        return np.zeros(spec.n_free)
    init = spec.check_beta(config.init)
    if np.any(init[~spec.mask] != 0):
        raise ValueError("initial coefficients must vanish outside the parameter domain")
    return spec.pack(init)


def _result(spec, opt: _Opt, w=None) -> FitResult:
    if not opt.converged:
        log.warning("fit did not converge after %d iterations", opt.iterations)
    return FitResult(
        beta=spec.unpack(opt.x[: spec.n_free]),
        objective=float(opt.f),
        iterations=opt.iterations,
        converged=opt.converged,
        objective_trace=[float(v) for v in opt.trace],
        w=w,
        status=opt.status,
    )


def _check_data(data: ChoiceDataset):
    if data.n_obs == 0:
        raise ValueError("cannot fit an empty dataset")


def fit_nominal(data: ChoiceDataset, spec: ModelSpec, config: FitConfig | None = None) -> FitResult:
    """Maximum-likelihood logit fit.

    Completely separated data has no finite maximiser; the optimizer then
    stops on a vanishing gradient with every chosen probability near 1.
    That case is reported as ``converged=False`` with status
    ``"separated"``.
    """
    cfg = config or FitConfig()
    _check_data(data)

    def fun(theta):
        beta = spec.unpack(theta)
        return log_likelihood(spec, beta, data), spec.pack(log_likelihood_gradient(spec, beta, data))

    opt = maximize(fun, _init(spec, cfg), cfg)
    if opt.converged:
        logp = log_probabilities(spec, spec.unpack(opt.x), data)[np.arange(data.n_obs), data.choice]
        if logp.min() > math.log1p(-1e-6):
            opt.converged, opt.status = False, "separated"
    return _result(spec, opt)


def fit_robust_label(
    data: ChoiceDataset, spec: ModelSpec, budget: LabelBudget, config: FitConfig | None = None
) -> FitResult:
    cfg = config or FitConfig()
    _check_data(data)

    def fun(theta):
        beta = spec.unpack(theta)
        return rl_objective(spec, beta, data, budget), spec.pack(rl_subgradient(spec, beta, data, budget))

    return _result(spec, maximize(fun, _init(spec, cfg), cfg))


class _SplitLayout:
    """Maps ``(beta, free split pieces)`` to a full feasible norm split.

    Only pairs ``(n, j)`` with ``j`` available and ``j != I_n`` carry pieces;
    the last piece is eliminated through the constraint
    ``sum_i w^(i) = beta_j - beta_{I_n}``.
    """

    def __init__(self, spec: ModelSpec, data: ChoiceDataset, budget: FeatureUncertainty):
        self.spec, self.data, self.budget = spec, data, budget
        self.P = len(budget.constraints)
        other = data.avail.copy()
        other[np.arange(data.n_obs), data.choice] = False
        self.pn, self.pj = np.nonzero(other)
        self.pi = data.choice[self.pn]
        self.M = self.pn.size
        self.shape = (self.M, self.P - 1, spec.n_features)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def diffs(self, beta):
        return beta[self.pj] - beta[self.pi]

    def full(self, beta, w_free):
        d = self.diffs(beta)
        w = np.zeros((self.data.n_obs, self.spec.n_alternatives, self.P, self.spec.n_features))
        w[self.pn, self.pj, : self.P - 1] = w_free
        w[self.pn, self.pj, self.P - 1] = d - w_free.sum(axis=1)
        return w

    def equal_free(self, beta):
        d = self.diffs(beta)
        return np.repeat(d[:, None, :] / self.P, self.P - 1, axis=1)

    def _pair_penalty(self, pieces):
        # pieces: (M, P, K) -> sum_i rho_i(n) ||w^(i)||_{q_i}, shape (M,)
        pen = np.zeros(self.M)
        for i, con in enumerate(self.budget.constraints):
            pen += con.radii(self.data.n_obs)[self.pn] * lp_norm(pieces[:, i], con.q)
        return pen

    def snap(self, beta, w_free):
        """Move a pair's whole difference onto one piece when that is cheaper.

        The objective increases as each pair's penalty decreases, so pairs
        can be improved independently.  This lands exactly on the kinks
        (a piece equal to zero) that gradient steps only approach.
        """
        d = self.diffs(beta)
        w = self.full(beta, w_free)[self.pn, self.pj]
        best = self._pair_penalty(w)
        out = w.copy()
        for i in range(self.P):
            cand = np.zeros_like(w)
            cand[:, i] = d
            pen = self._pair_penalty(cand)
            better = pen < best
            out[better] = cand[better]
            best = np.minimum(best, pen)
        return out[:, : self.P - 1]

    def value_and_grads(self, beta, w_free):
        w = self.full(beta, w_free)
        val = rf_objective_multi(self.spec, beta, w, self.data, self.budget)
        G_beta, G_w = rf_multi_partials(self.spec, beta, w, self.data, self.budget)
        pair = G_w[self.pn, self.pj]  # (M, P, K)
        last = pair[:, self.P - 1]
        g_free = pair[:, : self.P - 1] - last[:, None, :]
        np.add.at(G_beta, self.pj, last)
        np.add.at(G_beta, self.pi, -last)
        return val, np.where(self.spec.mask, G_beta, 0.0), g_free


def fit_robust_feature(
    data: ChoiceDataset, spec: ModelSpec, budget: FeatureUncertainty, config: FitConfig | None = None
) -> FitResult:
    """Robust-feature fit; several norm constraints co-optimise the norm split."""
    cfg = config or FitConfig()
    _check_data(data)
    if budget.is_single:

        def fun(theta):
            beta = spec.unpack(theta)
            return rf_objective(spec, beta, data, budget), spec.pack(rf_subgradient(spec, beta, data, budget))

        return _result(spec, maximize(fun, _init(spec, cfg), cfg))

    layout = _SplitLayout(spec, data, budget)
    F = spec.n_free
    theta0 = _init(spec, cfg)
    x0 = np.concatenate([theta0, layout.equal_free(spec.unpack(theta0)).ravel()])

    def fun(x):
        beta = spec.unpack(x[:F])
        val, gb, gw = layout.value_and_grads(beta, x[F:].reshape(layout.shape))
        return val, np.concatenate([spec.pack(gb), gw.ravel()])

    opt = maximize(fun, x0, cfg)
    beta = spec.unpack(opt.x[:F])
    w_free = layout.snap(beta, opt.x[F:].reshape(layout.shape))
    val = rf_objective_multi(spec, beta, layout.full(beta, w_free), data, budget)
    if val > opt.f:
        opt.x = np.concatenate([opt.x[:F], w_free.ravel()])
        opt.f = val
        opt.trace.append(val)
    return _result(spec, opt, w=layout.full(beta, opt.x[F:].reshape(layout.shape)))


def optimize_norm_split(
    spec: ModelSpec, beta, data: ChoiceDataset, budget: FeatureUncertainty, config: FitConfig | None = None
) -> tuple[float, np.ndarray]:
    """Best split of ``beta_j - beta_{I_n}`` across the norm constraints at fixed ``beta``."""
    cfg = config or FitConfig()
    beta = spec.project(beta)
    layout = _SplitLayout(spec, data, budget)

    def fun(x):
        val, _, gw = layout.value_and_grads(beta, x.reshape(layout.shape))
        return val, gw.ravel()

    opt = maximize(fun, layout.equal_free(beta).ravel(), cfg)
    w_free = layout.snap(beta, opt.x.reshape(layout.shape))
    val = rf_objective_multi(spec, beta, layout.full(beta, w_free), data, budget)
    if val <= opt.f:
        val, w_free = opt.f, opt.x.reshape(layout.shape)
    return float(val), layout.full(beta, w_free)


@dataclass(frozen=True)
class Estimator:
    """An estimator kind with its hyper-parameters.

    ``kind`` is ``"nominal"``, ``"robust_feature"`` or ``"robust_label"``.
    Robust-feature estimators use ``(p, rho)`` or, when ``constraints`` is
    given, several ``(p, rho)`` pairs.
    """

    kind: str = "nominal"
    rho: float = 0.0
    p: float = 2.0
    gamma: float = 0.0
    constraints: tuple = ()

    def __post_init__(self):
        aliases = {"mle": "nominal", "rf": "robust_feature", "rl": "robust_label"}
        object.__setattr__(self, "kind", aliases.get(self.kind, self.kind))
        if self.kind not in ("nominal", "robust_feature", "robust_label"):
            raise ValueError(f"unknown estimator kind {self.kind!r}")
        object.__setattr__(self, "constraints", tuple(tuple(map(float, c)) for c in self.constraints))
        if np.ndim(self.rho):
            object.__setattr__(self, "rho", tuple(float(r) for r in self.rho))

    @property
    def label(self) -> str:
        if self.kind == "nominal":
            return "nominal"
        if self.kind == "robust_label":
            return f"robust_label(gamma={self.gamma:g})"
        if self.constraints:
            inner = ",".join(f"p={p:g}:rho={r:g}" for p, r in self.constraints)
            return f"robust_feature({inner})"
        if np.ndim(self.rho):
            return f"robust_feature(p={self.p:g},rho=vector[{len(self.rho)}])"
        return f"robust_feature(p={self.p:g},rho={self.rho:g})"

    @property
    def hyper(self) -> float:
        """Scalar robustness level used for tie-breaking in tuning."""
        if self.kind == "robust_label":
            return float(self.gamma)
        if self.kind == "robust_feature":
            if self.constraints:
                return float(sum(r for _, r in self.constraints))
            return float(np.mean(self.rho))
        return 0.0

    def with_value(self, value: float) -> "Estimator":
        if self.kind == "robust_label":
            return Estimator(self.kind, gamma=float(value))
        return Estimator(self.kind, rho=float(value), p=self.p)

    def feature_budget(self) -> FeatureUncertainty:
        if self.constraints:
            return FeatureUncertainty.multi(self.constraints)
        return FeatureUncertainty.single(self.p, self.rho)

    def fit(self, data: ChoiceDataset, spec: ModelSpec, config: FitConfig | None = None) -> FitResult:
        if self.kind == "nominal":
            return fit_nominal(data, spec, config)
        if self.kind == "robust_label":
            return fit_robust_label(data, spec, LabelBudget(self.gamma), config)
        return fit_robust_feature(data, spec, self.feature_budget(), config)
