"""Penalized JML estimation: mini-batched Adam ascent and per-person rescoring."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .data import ResponseMatrix
from .errors import InvalidArgumentError, ValidationDegenerateError
from .metrics import auc, log_loss
from .model import ModelSpec, ParameterSet, balance, gradient, penalized_objective, predict

logger = logging.getLogger(__name__)

BETA1, BETA2, ADAM_EPS = 0.9, 0.999, 1e-8


@dataclass(frozen=True)
class FitConfig:
    lam: float = 0.0
    learning_rate: float = 0.1
    batch_count: int = 10
    max_epochs: int = 500
    patience: int = 5
    seed: int = 0
    init_scale: float = 0.1
    full_batch_deterministic: bool = False
    penalize_intercepts: bool = True
    tol: float = 1e-6
    lr_decay: float = 0.5
    max_decays: int = 0
    balance: bool = True

    def __post_init__(self):
        if self.lam < 0:
            raise InvalidArgumentError("lambda must be nonnegative")
        if self.learning_rate <= 0 or self.init_scale <= 0:
            raise InvalidArgumentError("learning_rate and init_scale must be positive")
        if self.batch_count < 1 or self.max_epochs < 1 or self.patience < 1:
            raise InvalidArgumentError("batch_count, max_epochs and patience must be positive")
        if self.patience > self.max_epochs:
            raise InvalidArgumentError("patience cannot exceed max_epochs")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidArgumentError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class EpochRecord:
    objective: float
    valid_auc: float | None = None
    valid_log_loss: float | None = None


@dataclass
class FitResult:
    params: ParameterSet
    spec: ModelSpec
    epochs_run: int
    best_validation_score: float | None = None
    best_epoch: int | None = None
    trajectory: list[EpochRecord] = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.trajectory[-1].objective


class _Adam:
    def __init__(self, params: ParameterSet, lr: float):
        self.lr = lr
        self.t = 0
        self.m = [np.zeros_like(params.theta), np.zeros_like(params.x)]
        self.v = [np.zeros_like(params.theta), np.zeros_like(params.x)]

    def ascend(self, params: ParameterSet, grad: ParameterSet) -> None:
        self.t += 1
        c1 = 1.0 - BETA1**self.t
        c2 = 1.0 - BETA2**self.t
        for k, (p, g) in enumerate([(params.theta, grad.theta), (params.x, grad.x)]):
            m, v = self.m[k], self.v[k]
            m *= BETA1
            m += (1.0 - BETA1) * g
            v *= BETA2
            v += (1.0 - BETA2) * g * g
            p += self.lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)

    def reset_moments(self) -> None:
        self.t = 0
        for a in self.m + self.v:
            a.fill(0.0)


def _check_disjoint(a: ResponseMatrix, b: ResponseMatrix) -> None:
    ka = a.persons * a.n + a.items
    kb = b.persons * b.n + b.items
    if len(np.intersect1d(ka, kb)):
        raise InvalidArgumentError("validation cells overlap training cells")


def init_params(spec: ModelSpec, m: int, n: int, rng: np.random.Generator, scale: float) -> ParameterSet:
    theta = rng.normal(0.0, scale, size=(m, spec.person_cols))
    x = rng.normal(0.0, scale, size=(n, spec.item_cols))
    return ParameterSet(theta, x)


def fit(
    U_train: ResponseMatrix,
    spec: ModelSpec,
    cfg: FitConfig,
    U_valid: ResponseMatrix | None = None,
) -> FitResult:
    """Maximize the penalized joint log-likelihood of ``U_train``.

    Every epoch shuffles the observed cells, splits them into
    ``cfg.batch_count`` batches and takes one Adam step per batch. With a
    validation matrix, training stops once validation AUC has not improved for
    ``cfg.patience`` epochs and the best-epoch parameters are returned.
    Otherwise it stops when the full objective improves by less than
    ``cfg.tol`` over an epoch, or at ``cfg.max_epochs``.
    """
    if U_train.n_obs == 0:
        raise InvalidArgumentError("training matrix has no observed cells")
    n_batches = 1 if cfg.full_batch_deterministic else cfg.batch_count
    if n_batches > U_train.n_obs:
        raise InvalidArgumentError(
            f"batch_count {n_batches} exceeds the {U_train.n_obs} observed cells"
        )
    if U_valid is not None:
        if U_valid.shape != U_train.shape:
            raise InvalidArgumentError("validation matrix must share persons and items")
        _check_disjoint(U_train, U_valid)
        n_pos = int(U_valid.responses.sum())
        if n_pos == 0 or n_pos == U_valid.n_obs:
            raise ValidationDegenerateError("validation set needs both positive and negative outcomes")

    rng = np.random.default_rng(int(cfg.seed))
    m, n = U_train.shape
    params = init_params(spec, m, n, rng, cfg.init_scale)
    opt = _Adam(params, cfg.learning_rate)

    trajectory: list[EpochRecord] = []
    best_score, best_epoch, best_params = -np.inf, None, None
    stale = decays = 0
    prev = penalized_objective(U_train, spec, params, cfg.lam, cfg.penalize_intercepts)
    last = params.copy()
    for epoch in range(cfg.max_epochs):
        if n_batches == 1:
            batches = [None]
        else:
            batches = np.array_split(rng.permutation(U_train.n_obs), n_batches)
        for entries in batches:
            g = gradient(U_train, spec, params, cfg.lam, cfg.penalize_intercepts, entries, n_batches)
            opt.ascend(params, g)

        obj = penalized_objective(U_train, spec, params, cfg.lam, cfg.penalize_intercepts)
        if not np.isfinite(obj):
            raise FloatingPointError(f"objective became non-finite at epoch {epoch}")

        if U_valid is not None:
            p = predict(spec, params, U_valid)
            score = auc(p, U_valid.responses)
            trajectory.append(EpochRecord(obj, score, log_loss(p, U_valid.responses)))
            if score > best_score:
                best_score, best_epoch, best_params = score, epoch, params.copy()
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
        else:
            if obj < prev and decays < cfg.max_decays:
                # overshoot: undo the epoch and retry with a smaller step
                decays += 1
                opt.lr *= cfg.lr_decay
                params = last.copy()
                opt.reset_moments()
                continue
            trajectory.append(EpochRecord(obj))
            if obj - prev < cfg.tol:
                break
            last = params.copy()
        prev = obj

    if U_valid is not None:
        params = best_params
    if cfg.balance:
        params = balance(spec, params)
    logger.debug("fit %s lam=%g: %d epochs, objective %.4f", spec.name, cfg.lam, len(trajectory), obj)
    if U_valid is not None:
        return FitResult(params, spec, len(trajectory), best_score, best_epoch, trajectory)
    return FitResult(params, spec, len(trajectory), None, None, trajectory)


class PersonScores(NamedTuple):
    theta: np.ndarray
    unscored: np.ndarray


def score_persons(
    U_partial: ResponseMatrix,
    spec: ModelSpec,
    item_params,
    cfg: FitConfig,
    tol: float = 1e-6,
    max_iter: int = 200,
    chunk: int = 4096,
) -> PersonScores:
    """Maximize the penalized objective over person parameters with items fixed.

    Each person is an independent concave problem, solved by damped Newton
    steps until the gradient norm drops below ``tol``. Persons without any
    observed cell get a zero row and are flagged in ``unscored``.
    """
    x = np.asarray(item_params, dtype=np.float64)
    if x.shape != (U_partial.n, spec.item_cols):
        raise InvalidArgumentError(f"item parameters must have shape {(U_partial.n, spec.item_cols)}")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("item parameters must be finite")

    m = U_partial.m
    pi, ii = int(spec.person_intercept), int(spec.item_intercept)
    q = spec.person_cols
    # design rows a_j pair with theta_i; the item intercept is a fixed offset
    design = np.hstack([np.ones((U_partial.n, pi)), x[:, ii:]])
    offset = x[:, 0] if ii else np.zeros(U_partial.n)
    pmask, _ = spec.penalty_masks(cfg.penalize_intercepts)
    ridge = 2.0 * cfg.lam * pmask.astype(np.float64)

    theta = np.zeros((m, q))
    unscored = U_partial.person_counts() == 0
    if unscored.any():
        warnings.warn(f"{int(unscored.sum())} person(s) have no observed cells; left at zero", stacklevel=2)
    if q == 0:
        return PersonScores(theta, unscored)

    dense = U_partial.to_dense()
    for start in range(0, m, chunk):
        rows = slice(start, min(start + chunk, m))
        block = dense[rows]
        obs = ~np.isnan(block)
        resp = np.where(obs, block, 0.0)
        theta[rows] = _newton_block(resp, obs.astype(np.float64), design, offset, ridge, tol, max_iter)
    theta[unscored] = 0.0
    return PersonScores(theta, unscored)


def _block_objective(t, resp, obs, design, offset, ridge):
    z = t @ design.T + offset
    # log sigma(z) = -logaddexp(0, -z)
    ll = -(resp * np.logaddexp(0.0, -z) + (1.0 - resp) * np.logaddexp(0.0, z))
    return (ll * obs).sum(axis=1) - 0.5 * (ridge * t * t).sum(axis=1)


def _newton_block(resp, obs, design, offset, ridge, tol, max_iter):
    mb, q = resp.shape[0], design.shape[1]
    t = np.zeros((mb, q))
    active = np.ones(mb, dtype=bool)
    f = _block_objective(t, resp, obs, design, offset, ridge)
    eye = np.eye(q)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        ta = t[idx]
        z = ta @ design.T + offset
        p = expit(z)
        w = obs[idx] * p * (1.0 - p)
        g = ((resp[idx] - p) * obs[idx]) @ design - ridge * ta
        gnorm = np.linalg.norm(g, axis=1)
        done = gnorm < tol
        active[idx[done]] = False
        keep = ~done
        if not keep.any():
            break
        idx, ta, g, w = idx[keep], ta[keep], g[keep], w[keep]
        neg_h = np.einsum("ij,jk,jl->ikl", w, design, design) + np.diag(ridge)[None] + 1e-10 * eye
        step = np.linalg.solve(neg_h, g[:, :, None])[:, :, 0]
        # step halving until the per-person objective does not decrease
        f_old = f[idx]
        scale = np.ones(len(idx))
        pending = np.ones(len(idx), dtype=bool)
        for _ in range(40):
            cand = ta + scale[:, None] * step
            f_new = _block_objective(cand, resp[idx], obs[idx], design, offset, ridge)
            ok = pending & (f_new >= f_old)
            t[idx[ok]] = cand[ok]
            f[idx[ok]] = f_new[ok]
            pending &= ~ok
            if not pending.any():
                break
            scale[pending] *= 0.5
        # no ascent possible along the Newton direction: numerically converged
        active[idx[pending]] = False
    return t
