"""Evaluation metrics for predicted probabilities against binary outcomes."""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidArgumentError, UndefinedAUCError
from .model import EPS

METRICS = ("acc", "auc", "gk_lambda", "rmse", "log_loss")


def _batch(p, u):
    p = np.asarray(p, dtype=np.float64).ravel()
    u = np.asarray(u, dtype=np.float64).ravel()
    if len(p) != len(u):
        raise InvalidArgumentError("probabilities and outcomes differ in length")
    if len(p) == 0:
        raise InvalidArgumentError("empty prediction batch")
    if not np.all(np.isfinite(p)):
        raise InvalidArgumentError("probabilities must be finite")
    return p, u


def accuracy(p, u, threshold: float = 0.5) -> float:
    # p >= threshold predicts a 1, so p == 0.5 counts as a prediction of 1
    p, u = _batch(p, u)
    return float(np.mean((p >= threshold) == (u == 1)))


def auc(p, u) -> float:
    """Rank-based ROC AUC with average ranks for ties.

    Raises :class:`UndefinedAUCError` when only one class is present.
    """
    p, u = _batch(p, u)
    pos = u == 1
    n_pos = int(pos.sum())
    n_neg = len(u) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError("AUC is undefined for a single-class batch")
    from scipy.stats import rankdata  # deferred: scipy.stats is slow to import

    ranks = rankdata(p)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def gk_lambda(p, u, threshold: float = 0.5) -> float:
    """Goodman-Kruskal lambda as proportional reduction of error over the modal rule."""
    p, u = _batch(p, u)
    base = float(np.mean(u))
    modal_error = min(base, 1.0 - base)
    if modal_error == 0:
        return 0.0
    error = 1.0 - accuracy(p, u, threshold)
    return 1.0 - error / modal_error


def rmse(p, u) -> float:
    p, u = _batch(p, u)
    return float(np.sqrt(np.mean((p - u) ** 2)))


def log_loss(p, u) -> float:
    p, u = _batch(p, u)
    p = np.clip(p, EPS, 1.0 - EPS)
    return float(-np.mean(u * np.log(p) + (1.0 - u) * np.log1p(-p)))


def evaluate(p, u) -> dict:
    """All metrics at once; ``auc`` is NaN when undefined."""
    try:
        a = auc(p, u)
    except UndefinedAUCError:
        a = math.nan
    return {
        "acc": accuracy(p, u),
        "auc": a,
        "gk_lambda": gk_lambda(p, u),
        "rmse": rmse(p, u),
        "log_loss": log_loss(p, u),
    }
