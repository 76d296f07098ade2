"""Synthetic response data with known generating parameters."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import ResponseMatrix
from .errors import CovarianceError, InvalidArgumentError
from .model import ModelSpec, ParameterSet, logit_matrix, prob

# Covariance of abilities for the correlated three-factor design.
CORRELATED_MEAN = (-0.4, -0.7, 0.1)
CORRELATED_COV = (
    (1.21, 0.297, 1.232),
    (0.297, 0.81, 0.252),
    (1.232, 0.252, 1.96),
)


@dataclass(frozen=True)
class SimConfig:
    """Generating design for an M2PL data set.

    Laws are ``(name, a, b)`` tuples: ``("uniform", low, high)``,
    ``("normal", mean, sd)`` or ``("lognormal", log_mean, log_sd)``.
    ``loading`` is ``"single"`` (one random active dimension per item),
    ``"dense"`` (all dimensions active) or an ``n x d`` slope matrix.
    ``intercepts`` optionally fixes the item intercepts.
    """

    persons: int = 1000
    items: int = 60
    dim: int = 3
    mean: tuple = None
    cov: tuple = None
    intercept_law: tuple = ("uniform", -2.5, 2.5)
    slope_law: tuple = ("lognormal", 0.0, 0.5)
    loading: object = "single"
    intercepts: object = None
    p_miss: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.persons < 1 or self.items < 1 or self.dim < 1:
            raise InvalidArgumentError("persons, items and dim must be positive")
        if not 0 <= self.p_miss < 1:
            raise InvalidArgumentError("p_miss must lie in [0, 1)")

    def ability_moments(self):
        mu = np.zeros(self.dim) if self.mean is None else np.asarray(self.mean, dtype=np.float64)
        sigma = np.eye(self.dim) if self.cov is None else np.asarray(self.cov, dtype=np.float64)
        if mu.shape != (self.dim,):
            raise InvalidArgumentError(f"mean must have length {self.dim}")
        if sigma.shape != (self.dim, self.dim) or not np.allclose(sigma, sigma.T):
            raise CovarianceError(f"covariance must be a symmetric {self.dim}x{self.dim} matrix")
        try:
            np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError as exc:
            raise CovarianceError("covariance is not positive definite") from exc
        return mu, sigma


@dataclass
class GroundTruth:
    spec: ModelSpec
    params: ParameterSet
    probabilities: np.ndarray
    responses: ResponseMatrix
    config: SimConfig = field(default=None, repr=False)


def _draw(law, rng, size):
    name, a, b = law
    if name == "uniform":
        return rng.uniform(a, b, size)
    if name == "normal":
        return rng.normal(a, b, size)
    if name == "lognormal":
        return rng.lognormal(a, b, size)
    raise InvalidArgumentError(f"unknown law {name!r}")


def simulate(cfg: SimConfig) -> GroundTruth:
    mu, sigma = cfg.ability_moments()
    rng = np.random.default_rng(cfg.seed)
    m, n, d = cfg.persons, cfg.items, cfg.dim

    theta = rng.multivariate_normal(mu, sigma, size=m, method="cholesky")
    if cfg.intercepts is None:
        intercepts = _draw(cfg.intercept_law, rng, n)
    else:
        intercepts = np.asarray(cfg.intercepts, dtype=np.float64)
    if isinstance(cfg.loading, str):
        if cfg.loading == "single":
            slopes = np.zeros((n, d))
            slopes[np.arange(n), rng.integers(0, d, size=n)] = _draw(cfg.slope_law, rng, n)
        elif cfg.loading == "dense":
            slopes = _draw(cfg.slope_law, rng, (n, d))
        else:
            raise InvalidArgumentError(f"unknown loading pattern {cfg.loading!r}")
    else:
        slopes = np.asarray(cfg.loading, dtype=np.float64)
    if slopes.shape != (n, d) or intercepts.shape != (n,):
        raise InvalidArgumentError(f"item parameters must describe {n} items in {d} dimensions")

    spec = ModelSpec.m2pl(d)
    params = ParameterSet(theta, np.column_stack([intercepts, slopes]))
    probs = prob(logit_matrix(spec, params))
    dense = (rng.random((m, n)) < probs).astype(np.float64)
    U = ResponseMatrix.from_dense(dense)
    if cfg.p_miss > 0:
        U = apply_mcar(U, cfg.p_miss, rng.integers(2**63))
    return GroundTruth(spec, params, probs, U, cfg)


def apply_mcar(U: ResponseMatrix, p_miss: float, seed) -> ResponseMatrix:
    """Delete each observed cell independently with probability ``p_miss``."""
    if not 0 <= p_miss < 1:
        raise InvalidArgumentError("p_miss must lie in [0, 1)")
    if p_miss == 0:
        return U
    rng = np.random.default_rng(seed)
    return U.take(rng.random(U.n_obs) >= p_miss)


def standin_cross_loadings(n_items: int = 30, dim: int = 3, seed: int = 0):
    """Non-canonical item set with cross-loadings for the correlated design.

    Each item has a primary dimension (assigned round-robin) with a
    lognormal slope and loads on each other dimension with probability 1/2
    with a smaller lognormal slope, so every item has 1 to ``dim`` active
    dimensions. Intercepts are uniform on [-1.5, 1.5]. This replaces a
    published 30-item table and is not that table.
    """
    rng = np.random.default_rng(seed)
    slopes = np.zeros((n_items, dim))
    primary = np.arange(n_items) % dim
    slopes[np.arange(n_items), primary] = rng.lognormal(0.2, 0.3, n_items)
    for j in range(n_items):
        for k in range(dim):
            if k != primary[j] and rng.random() < 0.5:
                slopes[j, k] = rng.lognormal(-1.0, 0.5)
    intercepts = rng.uniform(-1.5, 1.5, n_items)
    return intercepts, slopes


def preset(name: str, seed: int = 0, **overrides) -> SimConfig:
    """Named generating designs.

    ``multiunidim``: 1000 persons, 60 items, 3 uncorrelated dimensions, each
    item loading on one random dimension. ``sparse5d`` / ``sparse5d-small``:
    5 dense dimensions with standard normal parameters, 1000x50 or 80x20.
    ``correlated3d``: 2000 persons with correlated abilities and a stand-in
    cross-loading item set (or ``loading=``/``intercepts=`` overrides).
    """
    if name == "multiunidim":
        cfg = SimConfig(1000, 60, 3, seed=seed)
    elif name in ("sparse5d", "sparse5d-large"):
        cfg = SimConfig(1000, 50, 5, intercept_law=("normal", 0.0, 1.0), slope_law=("normal", 0.0, 1.0),
                        loading="dense", seed=seed)
    elif name == "sparse5d-small":
        cfg = SimConfig(80, 20, 5, intercept_law=("normal", 0.0, 1.0), slope_law=("normal", 0.0, 1.0),
                        loading="dense", seed=seed)
    elif name == "correlated3d":
        items = overrides.get("items", 30)
        intercepts, slopes = standin_cross_loadings(items, 3, seed=seed + 1_000_003)
        cfg = SimConfig(2000, items, 3, mean=CORRELATED_MEAN, cov=CORRELATED_COV,
                        loading=slopes, intercepts=intercepts, seed=seed)
    else:
        raise InvalidArgumentError(f"unknown preset {name!r}")
    return replace(cfg, **overrides) if overrides else cfg


PRESETS = ("multiunidim", "sparse5d", "sparse5d-small", "correlated3d")
