"""Synthetic covariate and demand generators for the benchmark problems.

Covariates follow a vector AR(1) process started from its stationary
distribution; demand is a rectified linear factor model driven by the
previous covariate plus idiosyncratic noise. Loadings are permutations drawn
once per experiment seed and held fixed across samples, replications, and
the test set, so train and test paths share one demand law while their
noise streams stay disjoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..errors import InputError
from ..seeding import Stream, substream
from ..training import TrainingSet

__all__ = [
    "GeneratorConfig", "stage_loadings", "roll_ar1", "demand_formula",
    "generate_covariates", "generate_demand", "generate_training",
    "generate_test",
]


@dataclass(frozen=True)
class GeneratorConfig:
    """Parameters of the synthetic data law.

    ``horizon`` is the number of uncertain stages T; decisions span stages
    0..T, demands arrive at stages 1..T, covariates are observed at stages
    0..T-1. ``demand_cap`` is infinite for the inventory problem and 200
    for lot sizing, where bounded demand guarantees feasibility.
    """

    horizon: int
    n_samples: int
    d: int = 3
    ar_coeff: float = 0.7
    phi_scale: float = 0.25
    theta_factor: float = 5.0
    intercept: float = 50.0
    loading_scale: float = 12.0
    demand_cap: float = math.inf
    seed: int = 0

    def __post_init__(self):
        if self.horizon < 1:
            raise InputError(f"horizon must be >= 1, got {self.horizon}")
        if self.n_samples < 1:
            raise InputError(f"n_samples must be >= 1, got {self.n_samples}")
        if not 0.0 <= self.ar_coeff < 1.0:
            raise InputError(f"ar_coeff must lie in [0, 1), got {self.ar_coeff}")


def stage_loadings(config: GeneratorConfig) -> tuple[np.ndarray, np.ndarray]:
    """Factor loadings (a, b), each of shape (T, d), fixed by the seed alone.

    a_t is a permutation of (0.8, 1, 1) and b_t a permutation of (-1, 1, 0),
    drawn per stage from a dedicated stream so they never move when sample
    counts or replication indices change.
    """
    if config.d != 3:
        raise InputError("stage_loadings requires d = 3 covariates")
    rng = substream(config.seed, Stream.DEMAND_LOADINGS)
    a = np.empty((config.horizon, 3))
    b = np.empty((config.horizon, 3))
    for t in range(config.horizon):
        a[t] = rng.permutation([0.8, 1.0, 1.0])
        b[t] = rng.permutation([-1.0, 1.0, 0.0])
    return a, b


def roll_ar1(x0: np.ndarray, noise: np.ndarray, coeff: float) -> np.ndarray:
    """Unroll x_t = coeff * x_{t-1} + noise_t; returns (steps+1, d) with x0 first."""
    x0 = np.asarray(x0, dtype=float)
    noise = np.atleast_2d(np.asarray(noise, dtype=float))
    path = np.empty((noise.shape[0] + 1, x0.size))
    path[0] = x0
    for t in range(noise.shape[0]):
        path[t + 1] = coeff * path[t] + noise[t]
    return path


def demand_formula(x_prev: np.ndarray, a: np.ndarray, b: np.ndarray,
                   phi: np.ndarray, theta: np.ndarray,
                   config: GeneratorConfig) -> np.ndarray:
    """One stage of demand: rectified factor model, capped.

    ``x_prev`` and ``phi`` broadcast over leading axes with trailing dim d;
    ``theta`` matches the leading axes. Zero noise and zero covariate give
    exactly the intercept.
    """
    x_prev = np.asarray(x_prev, dtype=float)
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    level = (config.intercept
             + config.loading_scale * ((x_prev + config.phi_scale * phi) @ a)
             + config.theta_factor * (x_prev @ b) * theta)
    return np.minimum(np.maximum(level, 0.0), config.demand_cap)


def generate_covariates(config: GeneratorConfig,
                        rng: np.random.Generator | None = None) -> np.ndarray:
    """N independent AR(1) paths, shape (N, T, d), stages 0..T-1.

    x_0 is drawn from the stationary law N(0, I / (1 - coeff^2)) so the
    marginal distribution is the same at every stage.
    """
    if rng is None:
        rng = substream(config.seed, Stream.COVARIATES_TRAIN)
    n, T, d = config.n_samples, config.horizon, config.d
    paths = np.empty((n, T, d))
    stationary_sd = 1.0 / math.sqrt(1.0 - config.ar_coeff ** 2)
    paths[:, 0] = rng.normal(scale=stationary_sd, size=(n, d))
    if T > 1:
        noise = rng.normal(size=(n, T - 1, d))
        for t in range(1, T):
            paths[:, t] = config.ar_coeff * paths[:, t - 1] + noise[:, t - 1]
    return paths


def generate_demand(covariates: np.ndarray, config: GeneratorConfig,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Demand paths, shape (N, T, 1); stage-t demand reads the stage t-1 covariate."""
    if rng is None:
        rng = substream(config.seed, Stream.DEMAND_TRAIN)
    covariates = np.asarray(covariates, dtype=float)
    n, T, d = covariates.shape
    a, b = stage_loadings(config)
    if T != config.horizon:
        raise InputError(f"covariates span {T} stages, config says {config.horizon}")
    phi = rng.normal(size=(n, T, d))
    theta = rng.normal(size=(n, T))
    demand = np.empty((n, T, 1))
    for t in range(1, T + 1):
        demand[:, t - 1, 0] = demand_formula(covariates[:, t - 1], a[t - 1],
                                             b[t - 1], phi[:, t - 1],
                                             theta[:, t - 1], config)
    return demand


def _dataset(config: GeneratorConfig, x_stream: tuple, y_stream: tuple,
             extra_meta: dict) -> TrainingSet:
    rng_x = substream(config.seed, *x_stream)
    rng_y = substream(config.seed, *y_stream)
    covariates = generate_covariates(config, rng_x)
    demand = generate_demand(covariates, config, rng_y)
    meta = {"seed": config.seed, "horizon": config.horizon,
            "n_samples": config.n_samples, "demand_cap": config.demand_cap}
    meta.update(extra_meta)
    return TrainingSet(covariates, demand, meta)


def generate_training(config: GeneratorConfig, rep: int = 0) -> TrainingSet:
    """A fresh training set for one replication.

    The noise stream is keyed by (replication, N) so every point of a
    learning curve sees an independent draw, while the demand law itself
    (the loadings) stays fixed.
    """
    return _dataset(config,
                    (Stream.COVARIATES_TRAIN, rep, config.n_samples),
                    (Stream.DEMAND_TRAIN, rep, config.n_samples),
                    {"kind": "train", "replication": rep})


def generate_test(config: GeneratorConfig, n_paths: int | None = None) -> TrainingSet:
    """The fixed out-of-sample evaluation set for an experiment seed.

    Drawn from streams disjoint from every training replication, so scoring
    is honest no matter how many training sets the same seed produces.
    """
    if n_paths is not None:
        config = replace(config, n_samples=n_paths)
    return _dataset(config,
                    (Stream.COVARIATES_TEST,),
                    (Stream.DEMAND_TEST,),
                    {"kind": "test"})
