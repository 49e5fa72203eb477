"""Data model, utilities, choice probabilities and the nominal log-likelihood.

Every observation shares one feature vector ``x``; which feature enters which
alternative's utility is controlled by a boolean inclusion mask on the
coefficient matrix ``beta`` (shape ``(n_alternatives, n_features)``).
Coordinates outside the mask are pinned to zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "StructuralError",
    "ModelSpec",
    "ChoiceObservation",
    "ChoiceDataset",
    "systematic_utilities",
    "choice_probabilities",
    "utility_matrix",
    "log_probabilities",
    "probabilities",
    "log_likelihood",
    "log_likelihood_gradient",
    "accuracy",
    "eval_log_likelihood",
    "predict",
]


class StructuralError(ValueError):
    """Dimensions or indices of inputs do not agree."""


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Alternatives, features and the parameter domain.

    Parameters
    ----------
    alternatives : sequence of str
        Ordered alternative names.
    features : sequence of str
        Ordered feature names.
    mask : array_like of bool, shape (n_alternatives, n_features)
        ``mask[i, k]`` is True when feature ``k`` enters alternative ``i``.
    base : int
        Index of the base alternative.
    """

    alternatives: tuple[str, ...]
    features: tuple[str, ...]
    mask: np.ndarray
    base: int = 0

    def __post_init__(self):
        object.__setattr__(self, "alternatives", tuple(self.alternatives))
        object.__setattr__(self, "features", tuple(self.features))
        mask = np.array(self.mask, dtype=bool)
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        if mask.shape != (len(self.alternatives), len(self.features)):
            raise StructuralError(
                f"mask shape {mask.shape} does not match "
                f"({len(self.alternatives)}, {len(self.features)})"
            )
        if not 0 <= self.base < len(self.alternatives):
            raise StructuralError(f"base alternative {self.base} out of range")
        unused = ~mask.any(axis=0)
        if unused.any():
            names = [self.features[k] for k in np.flatnonzero(unused)]
            raise StructuralError(f"features enter no alternative: {names}")
        # a feature in every utility is not identified (softmax shift invariance)
        shared = mask.all(axis=0)
        if shared.any():
            names = [self.features[k] for k in np.flatnonzero(shared)]
            raise StructuralError(
                f"features enter every alternative and are not identified: {names}"
            )

    @classmethod
    def from_lists(
        cls,
        alternatives: Sequence[str],
        features: Sequence[str],
        enters: dict[str, Iterable[str]],
        base: str | int = 0,
    ) -> "ModelSpec":
        """Build a spec from ``{feature: [alternatives it enters]}``."""
        alt_index = {a: i for i, a in enumerate(alternatives)}
        mask = np.zeros((len(alternatives), len(features)), dtype=bool)
        for k, f in enumerate(features):
            for a in enters.get(f, ()):
                if a not in alt_index:
                    raise StructuralError(f"unknown alternative {a!r} for feature {f!r}")
                mask[alt_index[a], k] = True
        if isinstance(base, str):
            base = alt_index[base]
        return cls(tuple(alternatives), tuple(features), mask, int(base))

    @property
    def n_alternatives(self) -> int:
        return len(self.alternatives)

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def n_free(self) -> int:
        return int(self.mask.sum())

    def zeros(self) -> np.ndarray:
        return np.zeros(self.mask.shape)

    def check_beta(self, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        if beta.shape != self.mask.shape:
            raise StructuralError(f"beta shape {beta.shape} != {self.mask.shape}")
        return beta

    def project(self, beta) -> np.ndarray:
        """Zero the coordinates outside the parameter domain."""
        return np.where(self.mask, self.check_beta(beta), 0.0)

    def pack(self, beta) -> np.ndarray:
        """Free coordinates of ``beta`` as a flat vector."""
        return self.check_beta(beta)[self.mask]

    def unpack(self, theta) -> np.ndarray:
        beta = np.zeros(self.mask.shape)
        beta[self.mask] = theta
        return beta


@dataclass(frozen=True, eq=False)
class ChoiceObservation:
    """One decision maker: features, available alternatives and the choice."""

    x: np.ndarray
    availability: tuple[int, ...]
    chosen: int

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        avail = tuple(sorted(int(a) for a in self.availability))
        object.__setattr__(self, "availability", avail)
        if len(avail) < 2:
            raise StructuralError("an observation needs at least two available alternatives")
        if self.chosen not in avail:
            raise StructuralError(f"chosen alternative {self.chosen} is not available")


@dataclass(frozen=True, eq=False)
class ChoiceDataset:
    """Observations stored column-wise.

    Attributes
    ----------
    X : ndarray, shape (N, K)
        Shared feature vector of every observation.
    avail : ndarray of bool, shape (N, C)
        Availability indicators.
    choice : ndarray of int, shape (N,)
        Index of the chosen alternative.
    feature_names : tuple of str
    """

    X: np.ndarray
    avail: np.ndarray
    choice: np.ndarray
    feature_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        X = np.atleast_2d(np.array(self.X, dtype=float))
        avail = np.atleast_2d(np.array(self.avail, dtype=bool))
        choice = np.array(self.choice, dtype=int).reshape(-1)
        n = choice.shape[0]
        if n == 0:
            X = X.reshape(0, X.shape[-1] if X.ndim == 2 else 0)
        if X.shape[0] != n or avail.shape[0] != n:
            raise StructuralError("X, avail and choice disagree on the number of observations")
        if n:
            if (choice < 0).any() or (choice >= avail.shape[1]).any():
                raise StructuralError("choice index out of range")
            if not avail[np.arange(n), choice].all():
                bad = int(np.flatnonzero(~avail[np.arange(n), choice])[0])
                raise StructuralError(f"observation {bad}: chosen alternative is unavailable")
            if (avail.sum(axis=1) < 2).any():
                bad = int(np.flatnonzero(avail.sum(axis=1) < 2)[0])
                raise StructuralError(f"observation {bad}: fewer than two available alternatives")
        names = tuple(self.feature_names) or tuple(f"x{k}" for k in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise StructuralError("feature_names length does not match X")
        for a in (X, avail, choice):
            a.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "avail", avail)
        object.__setattr__(self, "choice", choice)
        object.__setattr__(self, "feature_names", names)

    @classmethod
    def from_observations(
        cls,
        observations: Sequence[ChoiceObservation],
        n_alternatives: int,
        feature_names: Sequence[str] = (),
    ) -> "ChoiceDataset":
        observations = list(observations)
        n = len(observations)
        k = len(feature_names) if not observations else observations[0].x.shape[0]
        X = np.zeros((n, k))
        avail = np.zeros((n, n_alternatives), dtype=bool)
        choice = np.zeros(n, dtype=int)
        for r, obs in enumerate(observations):
            if obs.x.shape != (k,):
                raise StructuralError(f"observation {r} has {obs.x.shape[0]} features, expected {k}")
            X[r] = obs.x
            avail[r, list(obs.availability)] = True
            choice[r] = obs.chosen
        return cls(X, avail, choice, tuple(feature_names))

    @property
    def n_obs(self) -> int:
        return self.choice.shape[0]

    @property
    def n_alternatives(self) -> int:
        return self.avail.shape[1]

    @property
    def observations(self) -> list[ChoiceObservation]:
        return [self[n] for n in range(self.n_obs)]

    def __len__(self):
        return self.n_obs

    def __getitem__(self, n: int) -> ChoiceObservation:
        return ChoiceObservation(self.X[n], tuple(np.flatnonzero(self.avail[n])), int(self.choice[n]))

    def subset(self, index) -> "ChoiceDataset":
        index = np.asarray(index)
        return ChoiceDataset(self.X[index], self.avail[index], self.choice[index], self.feature_names)

    def replace(self, X=None, choice=None) -> "ChoiceDataset":
        return ChoiceDataset(
            self.X if X is None else X,
            self.avail,
            self.choice if choice is None else choice,
            self.feature_names,
        )

    def onehot(self) -> np.ndarray:
        Y = np.zeros(self.avail.shape)
        Y[np.arange(self.n_obs), self.choice] = 1.0
        return Y


def _check_dims(spec: ModelSpec, beta, n_features: int, n_alternatives: int | None = None):
    beta = spec.check_beta(beta)
    if n_features != spec.n_features:
        raise StructuralError(f"data has {n_features} features, spec has {spec.n_features}")
    if n_alternatives is not None and n_alternatives != spec.n_alternatives:
        raise StructuralError(
            f"data has {n_alternatives} alternatives, spec has {spec.n_alternatives}"
        )
    return beta


def systematic_utilities(spec: ModelSpec, beta, obs: ChoiceObservation) -> np.ndarray:
    """``beta_i @ x`` for each available alternative, in availability order."""
    beta = _check_dims(spec, beta, obs.x.shape[0])
    if max(obs.availability) >= spec.n_alternatives:
        raise StructuralError("availability refers to an unknown alternative")
    return beta[list(obs.availability)] @ obs.x


def choice_probabilities(spec: ModelSpec, beta, obs: ChoiceObservation) -> np.ndarray:
    """Logit probabilities over the available alternatives (availability order)."""
    v = systematic_utilities(spec, beta, obs)
    v = v - v.max()
    e = np.exp(v)
    return e / e.sum()


def utility_matrix(spec: ModelSpec, beta, data: ChoiceDataset) -> np.ndarray:
    """(N, C) systematic utilities with ``-inf`` on unavailable alternatives."""
    beta = _check_dims(spec, beta, data.X.shape[1], data.n_alternatives)
    V = data.X @ beta.T
    return np.where(data.avail, V, -np.inf)


def log_probabilities(spec: ModelSpec, beta, data: ChoiceDataset) -> np.ndarray:
    V = utility_matrix(spec, beta, data)
    return V - logsumexp(V, axis=1, keepdims=True)


def probabilities(spec: ModelSpec, beta, data: ChoiceDataset) -> np.ndarray:
    """(N, C) choice probabilities; exactly 0 where unavailable."""
    return np.exp(log_probabilities(spec, beta, data))


def log_likelihood(spec: ModelSpec, beta, data: ChoiceDataset) -> float:
    if data.n_obs == 0:
        return 0.0
    # log P_{n,I_n} = -log sum_j exp(V_nj - V_nI); same arithmetic as the robust objectives
    V = utility_matrix(spec, beta, data)
    rel = V - V[np.arange(data.n_obs), data.choice][:, None]
    return float(-logsumexp(rel, axis=1).sum())


def log_likelihood_gradient(spec: ModelSpec, beta, data: ChoiceDataset) -> np.ndarray:
    """Score of the log-likelihood, zero outside the mask."""
    P = probabilities(spec, beta, data)
    G = (data.onehot() - P).T @ data.X
    return np.where(spec.mask, G, 0.0)


def predict(spec: ModelSpec, beta, data: ChoiceDataset) -> np.ndarray:
    """Most probable alternative per observation; ties go to the lowest index."""
    # argmax on log-probabilities returns the first maximiser
    return np.argmax(log_probabilities(spec, beta, data), axis=1)


def accuracy(spec: ModelSpec, beta, data: ChoiceDataset) -> float:
    if data.n_obs == 0:
        return float("nan")
    return float(np.mean(predict(spec, beta, data) == data.choice))


eval_log_likelihood = log_likelihood
