"""Simulated choice data from a known coefficient matrix."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ChoiceDataset, ModelSpec, probabilities

__all__ = [
    "SimulationConfig",
    "simulate_choices",
    "simulate_dataset",
    "binary_mode_design",
    "three_mode_design",
]


@dataclass(frozen=True)
class SimulationConfig:
    """Uniform features on ``[low_k, high_k]`` and random availability.

    ``avail_prob[i]`` is the chance alternative ``i`` is available; rows
    with fewer than two available alternatives get everything switched on.
    """

    n_obs: int = 1000
    low: tuple = ()
    high: tuple = ()
    avail_prob: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.n_obs < 1:
            raise ValueError("n_obs must be positive")
        if len(self.low) != len(self.high):
            raise ValueError("low and high must have the same length")
        if any(h < l for l, h in zip(self.low, self.high)):
            raise ValueError("high must be >= low")


def simulate_choices(spec: ModelSpec, beta, X, avail, rng: np.random.Generator) -> np.ndarray:
    """Draw one choice per row from the logit probabilities (inverse CDF)."""
    placeholder = np.argmax(avail, axis=1)
    P = probabilities(spec, beta, ChoiceDataset(X, avail, placeholder))
    u = rng.random(P.shape[0])
    cum = np.cumsum(P, axis=1)
    choice = (cum <= u[:, None]).sum(axis=1)
    # round-off can push u past the last cumulative sum
    last = avail.shape[1] - 1 - np.argmax(avail[:, ::-1], axis=1)
    choice = np.minimum(choice, last)
    bad = ~avail[np.arange(len(choice)), choice]
    choice[bad] = last[bad]
    return choice


def simulate_dataset(spec: ModelSpec, beta, config: SimulationConfig, replication: int = 0) -> ChoiceDataset:
    rng = np.random.default_rng([config.seed, replication])
    K, C = spec.n_features, spec.n_alternatives
    low = np.asarray(config.low or (0.0,) * K, dtype=float)
    high = np.asarray(config.high or (1.0,) * K, dtype=float)
    if low.shape != (K,):
        raise ValueError(f"simulation bounds have {low.shape[0]} entries, expected {K}")
    X = low + (high - low) * rng.random((config.n_obs, K))
    prob = np.asarray(config.avail_prob or (1.0,) * C, dtype=float)
    avail = rng.random((config.n_obs, C)) < prob
    avail[avail.sum(axis=1) < 2] = True
    choice = simulate_choices(spec, beta, X, avail, rng)
    return ChoiceDataset(X, avail, choice, spec.features)


@dataclass(frozen=True)
class Design:
    spec: ModelSpec
    beta: np.ndarray
    config: SimulationConfig
    time_features: tuple = ()
    green_modes: tuple = ()
    exempt_features: tuple = ()
    cost_feature: int = -1
    priced_alternative: int = -1


def binary_mode_design(n_obs: int = 1000, seed: int = 0) -> Design:
    """Walk versus bus with walk as the base mode; times in hours."""
    features = ("walk_time", "bus_ivt", "dist_subway", "bus_access", "asc_bus")
    spec = ModelSpec.from_lists(
        ("walk", "bus"),
        features,
        {"walk_time": ["walk"], "bus_ivt": ["bus"], "dist_subway": ["bus"], "bus_access": ["bus"], "asc_bus": ["bus"]},
        base="walk",
    )
    beta = spec.zeros()
    beta[0, 0] = -3.2
    beta[1, 1:] = (-5.3, 6.2, 0.95, -7.0)
    cfg = SimulationConfig(
        n_obs=n_obs,
        low=(0.05, 0.05, 0.6, 0.0, 1.0),
        high=(4.5, 1.5, 2.6, 1.0, 1.0),
        seed=seed,
    )
    return Design(spec, beta, cfg, time_features=(0, 1), green_modes=(0,), exempt_features=(4,))


def three_mode_design(n_obs: int = 1000, seed: int = 0) -> Design:
    """Train, car and a priced new mode; costs in hundreds, times in hours."""
    alts = ("train", "car", "sm")
    features = ("train_tt", "train_cost", "car_tt", "car_cost", "sm_tt", "sm_cost", "asc_car", "asc_sm")
    spec = ModelSpec.from_lists(
        alts,
        features,
        {
            "train_tt": ["train"], "train_cost": ["train"],
            "car_tt": ["car"], "car_cost": ["car"],
            "sm_tt": ["sm"], "sm_cost": ["sm"],
            "asc_car": ["car"], "asc_sm": ["sm"],
        },
        base="train",
    )
    beta = spec.zeros()
    beta[0, 0:2] = (-1.2, -1.5)
    beta[1, 2:4] = (-1.2, -1.5)
    beta[1, 6] = 0.2
    beta[2, 4:6] = (-1.2, -1.5)
    beta[2, 7] = 0.4
    cfg = SimulationConfig(
        n_obs=n_obs,
        low=(0.5, 0.2, 0.4, 0.2, 0.3, 0.2, 1.0, 1.0),
        high=(3.0, 1.5, 3.0, 1.5, 2.0, 1.5, 1.0, 1.0),
        avail_prob=(1.0, 0.8, 1.0),
        seed=seed,
    )
    return Design(spec, beta, cfg, time_features=(0, 2, 4), green_modes=(0, 2), exempt_features=(6, 7), cost_feature=5, priced_alternative=2)
