"""Model family, probability map, penalized joint log-likelihood and its gradient.

The logit of person ``i`` on item ``j`` is::

    z_ij = x_j0 + theta_i0 + sum_k theta_ik * x_jk

where either intercept may be absent. Intercepts, when present, are stored in
column 0 of the person matrix ``theta`` and item matrix ``x``; the constant
``1`` that pairs with each intercept is implicit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import ResponseMatrix
from .errors import InvalidArgumentError, UndefinedDifficultyError

EPS = 1e-12


@dataclass(frozen=True)
class ModelSpec:
    """Latent dimension ``r`` plus intercept flags.

    ``ModelSpec(0, item_intercept=True)`` is the person-independence model,
    ``ModelSpec(0, person_intercept=True, item_intercept=False)`` the
    item-independence model, both intercepts with ``r=0`` is Rasch, and
    ``r >= 1`` with an item intercept is the (M)2PL.
    """

    r: int
    person_intercept: bool = False
    item_intercept: bool = True

    def __post_init__(self):
        if int(self.r) != self.r or self.r < 0:
            raise InvalidArgumentError(f"latent dimension must be a nonnegative integer, got {self.r}")
        if self.r == 0 and not (self.person_intercept or self.item_intercept):
            raise InvalidArgumentError("empty model: need r >= 1 or at least one intercept")

    @classmethod
    def rasch(cls) -> ModelSpec:
        return cls(0, person_intercept=True, item_intercept=True)

    @classmethod
    def m2pl(cls, r: int) -> ModelSpec:
        return cls(r, person_intercept=False, item_intercept=True)

    @property
    def person_cols(self) -> int:
        return self.r + int(self.person_intercept)

    @property
    def item_cols(self) -> int:
        return self.r + int(self.item_intercept)

    @property
    def name(self) -> str:
        if self.r == 0:
            if self.person_intercept and self.item_intercept:
                return "Rasch"
            return "person-independence" if self.item_intercept else "item-independence"
        if self.item_intercept and not self.person_intercept:
            return "2PL" if self.r == 1 else f"M2PL(r={self.r})"
        if self.person_intercept and not self.item_intercept:
            return f"non-standard(r={self.r})"
        return f"both-intercepts(r={self.r})"

    def n_parameters(self, m: int, n: int) -> int:
        return m * self.person_cols + n * self.item_cols

    def penalty_masks(self, penalize_intercepts: bool = True):
        """Boolean column masks of penalized coordinates for (theta, x)."""
        pm = np.ones(self.person_cols, dtype=bool)
        im = np.ones(self.item_cols, dtype=bool)
        if not penalize_intercepts:
            if self.person_intercept:
                pm[0] = False
            if self.item_intercept:
                im[0] = False
        return pm, im


@dataclass
class ParameterSet:
    """Person matrix ``theta`` (m x person_cols) and item matrix ``x`` (n x item_cols)."""

    theta: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.theta.ndim != 2 or self.x.ndim != 2:
            raise InvalidArgumentError("theta and x must be 2-d")

    @classmethod
    def zeros(cls, spec: ModelSpec, m: int, n: int) -> ParameterSet:
        return cls(np.zeros((m, spec.person_cols)), np.zeros((n, spec.item_cols)))

    def check(self, spec: ModelSpec, shape=None) -> None:
        if self.theta.shape[1] != spec.person_cols or self.x.shape[1] != spec.item_cols:
            raise InvalidArgumentError(
                f"parameter columns ({self.theta.shape[1]}, {self.x.shape[1]}) do not match "
                f"model ({spec.person_cols}, {spec.item_cols})"
            )
        if shape is not None and (self.theta.shape[0], self.x.shape[0]) != tuple(shape):
            raise InvalidArgumentError(
                f"parameter rows ({self.theta.shape[0]}, {self.x.shape[0]}) do not match data {tuple(shape)}"
            )
        if not (np.all(np.isfinite(self.theta)) and np.all(np.isfinite(self.x))):
            raise InvalidArgumentError("parameters must be finite")

    def copy(self) -> ParameterSet:
        return ParameterSet(self.theta.copy(), self.x.copy())

    def ravel(self) -> np.ndarray:
        return np.concatenate([self.theta.ravel(), self.x.ravel()])

    def slopes(self, spec: ModelSpec):
        """Slope blocks ``(theta[:, -r:], x[:, -r:])``."""
        return self.theta[:, int(spec.person_intercept):], self.x[:, int(spec.item_intercept):]

    def __add__(self, other):
        return ParameterSet(self.theta + other.theta, self.x + other.x)


def logit(spec: ModelSpec, theta_row, x_row) -> float:
    theta_row = np.asarray(theta_row, dtype=np.float64).ravel()
    x_row = np.asarray(x_row, dtype=np.float64).ravel()
    if len(theta_row) != spec.person_cols or len(x_row) != spec.item_cols:
        raise InvalidArgumentError(
            f"row sizes ({len(theta_row)}, {len(x_row)}) do not fit {spec}"
        )
    pi, ii = int(spec.person_intercept), int(spec.item_intercept)
    z = float(np.dot(theta_row[pi:], x_row[ii:]))
    if pi:
        z += theta_row[0]
    if ii:
        z += x_row[0]
    return z


def prob(z):
    """Logistic function, clamped to ``[EPS, 1 - EPS]`` so both logs stay finite."""
    return np.clip(expit(z), EPS, 1.0 - EPS)


def logits(spec: ModelSpec, params: ParameterSet, persons, items) -> np.ndarray:
    """Vectorized logits for the cells ``(persons[k], items[k])``."""
    pi, ii = int(spec.person_intercept), int(spec.item_intercept)
    theta, x = params.theta, params.x
    if spec.r:
        z = np.einsum("ij,ij->i", theta[persons, pi:], x[items, ii:])
    else:
        z = np.zeros(len(persons))
    if pi:
        z = z + theta[persons, 0]
    if ii:
        z = z + x[items, 0]
    return z


def logit_matrix(spec: ModelSpec, params: ParameterSet) -> np.ndarray:
    pi, ii = int(spec.person_intercept), int(spec.item_intercept)
    z = params.theta[:, pi:] @ params.x[:, ii:].T
    if pi:
        z = z + params.theta[:, :1]
    if ii:
        z = z + params.x[:, 0][None, :]
    return z


def predict(spec: ModelSpec, params: ParameterSet, U: ResponseMatrix) -> np.ndarray:
    """Predicted probabilities for the observed cells of ``U``, in storage order."""
    return prob(logits(spec, params, U.persons, U.items))


def log_likelihood(U: ResponseMatrix, spec: ModelSpec, params: ParameterSet) -> float:
    params.check(spec, U.shape)
    if U.n_obs == 0:
        return 0.0
    p = predict(spec, params, U)
    u = U.responses
    return float(np.sum(u * np.log(p) + (1.0 - u) * np.log1p(-p)))


def penalty(spec: ModelSpec, params: ParameterSet, penalize_intercepts: bool = True) -> float:
    """Sum of squared penalized coordinates."""
    pm, im = spec.penalty_masks(penalize_intercepts)
    return float(np.sum(params.theta[:, pm] ** 2) + np.sum(params.x[:, im] ** 2))


def penalized_objective(
    U: ResponseMatrix,
    spec: ModelSpec,
    params: ParameterSet,
    lam: float,
    penalize_intercepts: bool = True,
) -> float:
    if lam < 0:
        raise InvalidArgumentError("lambda must be nonnegative")
    ll = log_likelihood(U, spec, params)
    if lam == 0:
        return ll
    return ll - lam * penalty(spec, params, penalize_intercepts)


def _scatter_rows(index, values, size):
    out = np.empty((size, values.shape[1]))
    for k in range(values.shape[1]):
        out[:, k] = np.bincount(index, weights=values[:, k], minlength=size)
    return out


def gradient(
    U: ResponseMatrix,
    spec: ModelSpec,
    params: ParameterSet,
    lam: float,
    penalize_intercepts: bool = True,
    entries=None,
    n_batches: int = 1,
) -> ParameterSet:
    """Gradient of the penalized objective over a subset of observed cells.

    ``entries`` indexes the observed cells of ``U`` to use (all when None).
    The penalty part is divided by ``n_batches`` so that the gradients of the
    batches of a partition of the cells add up to the full gradient.
    """
    persons, items, u = U.persons, U.items, U.responses
    if entries is not None:
        persons, items, u = persons[entries], items[entries], u[entries]
    pi, ii = int(spec.person_intercept), int(spec.item_intercept)
    theta, x = params.theta, params.x
    m, n = theta.shape[0], x.shape[0]

    resid = u - expit(logits(spec, params, persons, items))

    g_theta = np.zeros_like(theta)
    g_x = np.zeros_like(x)
    if pi:
        g_theta[:, 0] = np.bincount(persons, weights=resid, minlength=m)
    if ii:
        g_x[:, 0] = np.bincount(items, weights=resid, minlength=n)
    if spec.r:
        g_theta[:, pi:] = _scatter_rows(persons, resid[:, None] * x[items, ii:], m)
        g_x[:, ii:] = _scatter_rows(items, resid[:, None] * theta[persons, pi:], n)

    if lam:
        pm, im = spec.penalty_masks(penalize_intercepts)
        scale = 2.0 * lam / n_batches
        g_theta[:, pm] -= scale * theta[:, pm]
        g_x[:, im] -= scale * x[:, im]
    return ParameterSet(g_theta, g_x)


def balance(spec: ModelSpec, params: ParameterSet) -> ParameterSet:
    """Rebalance the slope blocks without changing any logit.

    Replaces ``(theta_s, x_s)`` by the factorization of ``theta_s @ x_s.T``
    with the smallest ``|theta_s|^2 + |x_s|^2``: both factors get the square
    roots of the singular values of the product. Intercepts are untouched.
    """
    if spec.r == 0:
        return params.copy()
    pi, ii = int(spec.person_intercept), int(spec.item_intercept)
    ts, xs = params.theta[:, pi:], params.x[:, ii:]
    qa, ra = np.linalg.qr(ts)
    qb, rb = np.linalg.qr(xs)
    u, s, vt = np.linalg.svd(ra @ rb.T)
    root = np.sqrt(s)
    out = params.copy()
    out.theta[:, pi:] = qa @ (u * root)
    out.x[:, ii:] = qb @ (vt.T * root)
    return out


def difficulty(x_row) -> float:
    """Usual difficulty ``-x_j0 / x_j1`` of an item with an intercept and a first slope."""
    x_row = np.asarray(x_row, dtype=np.float64).ravel()
    if len(x_row) < 2:
        raise UndefinedDifficultyError("difficulty needs an item intercept and at least one slope")
    if x_row[1] == 0:
        raise UndefinedDifficultyError("first slope is zero; difficulty is undefined")
    return float(-x_row[0] / x_row[1])
