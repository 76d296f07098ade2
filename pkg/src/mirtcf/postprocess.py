"""Post-fit analysis: whitening of abilities, parameter recovery, factor-overlap item selection."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, RankDeficiencyError

RANK_TOL = 1e-10
TIE_TOL = 1e-9


def _canonical_axes(u, s):
    """Pick a reproducible basis inside groups of (near-)equal variances.

    Axes with tied variances are only determined up to a rotation; within
    each tie group, use the coordinate axes projected onto the group's
    subspace, orthonormalized symmetrically. Isotropic input keeps its axes.
    """
    u = u.copy()
    start = 0
    while start < len(s):
        stop = start + 1
        while stop < len(s) and s[start] - s[stop] <= TIE_TOL * s[0]:
            stop += 1
        if stop - start > 1:
            basis = u[:, start:stop]
            proj = basis @ basis.T
            axes = np.sort(np.argsort(-np.diag(proj), kind="stable")[: stop - start])
            b = proj[:, axes]
            w, v = np.linalg.eigh(b.T @ b)
            u[:, start:stop] = b @ (v / np.sqrt(w)) @ v.T
        start = stop
    return u


def orthogonalize(theta):
    """Whiten person factors through the SVD of their covariance.

    Returns ``(theta_orth, transform)`` with ``theta_orth = (theta - mean) @ transform``.
    Columns of ``theta_orth`` have zero mean and identity covariance, come in
    order of decreasing variance of the original principal axes, and are
    signed so that each column's largest-magnitude entry is positive.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 2 or theta.shape[1] < 1:
        raise InvalidArgumentError("theta must be an m x r matrix with r >= 1")
    if theta.shape[0] < 2:
        raise InvalidArgumentError("need at least two persons")
    centered = theta - theta.mean(axis=0)
    cov = np.cov(centered, rowvar=False).reshape(theta.shape[1], theta.shape[1])
    u, s, _ = np.linalg.svd(cov)
    deficient = int(np.sum(s <= RANK_TOL * max(s[0], np.finfo(float).tiny)))
    if deficient:
        raise RankDeficiencyError(
            f"covariance of the {theta.shape[1]} columns is singular: {deficient} deficient dimension(s)",
            deficient,
        )
    u = _canonical_axes(u, s)
    transform = u / np.sqrt(s)
    out = centered @ transform
    peak = out[np.argmax(np.abs(out), axis=0), np.arange(out.shape[1])]
    signs = np.where(peak < 0, -1.0, 1.0)
    return out * signs, transform * signs


@dataclass
class RecoveryReport:
    """Correlations of whitened estimates with generating abilities.

    ``correlation`` is the joint correlation matrix of
    ``[theta_orth | theta_true]`` (estimates first). ``matches`` pairs each
    estimated column with a true column greedily by absolute correlation.
    ``estimate_sd`` is the standard deviation of the estimates along each
    principal axis before whitening, ``true_sd`` that of the matched truth.
    """

    correlation: np.ndarray
    cross: np.ndarray
    matches: list
    est_columns: list
    true_columns: list

    def table(self):
        import pandas as pd

        return pd.DataFrame(self.matches)

    def correlation_frame(self):
        import pandas as pd

        labels = [f"est_{k + 1}" for k in range(len(self.est_columns))]
        labels += [f"true_{self.true_columns[k] + 1}" for k in range(len(self.true_columns))]
        return pd.DataFrame(self.correlation, index=labels, columns=labels)


def _drop_constant(a, name):
    sd = a.std(axis=0)
    keep = np.flatnonzero(sd > 0)
    if len(keep) < a.shape[1]:
        warnings.warn(f"{a.shape[1] - len(keep)} zero-variance {name} column(s) excluded", stacklevel=3)
    return keep


def recovery_report(theta_est, theta_true) -> RecoveryReport:
    theta_est = np.asarray(theta_est, dtype=np.float64)
    theta_true = np.asarray(theta_true, dtype=np.float64)
    if theta_est.ndim == 1:
        theta_est = theta_est[:, None]
    if theta_true.ndim == 1:
        theta_true = theta_true[:, None]
    if theta_est.shape[0] != theta_true.shape[0]:
        raise InvalidArgumentError("estimated and true abilities must have the same persons")
    est_cols = _drop_constant(theta_est, "estimated")
    true_cols = _drop_constant(theta_true, "true")
    est = theta_est[:, est_cols]
    true = theta_true[:, true_cols]

    orth, transform = orthogonalize(est)
    # transform columns are unit principal axes scaled by 1/sd
    raw_sd = 1.0 / np.linalg.norm(transform, axis=0)
    k = orth.shape[1]
    corr = np.corrcoef(np.hstack([orth, true]), rowvar=False)
    cross = corr[:k, k:]

    matches = []
    free_e, free_t = set(range(k)), set(range(true.shape[1]))
    while free_e and free_t:
        e, t = max(((e, t) for e in free_e for t in free_t), key=lambda et: abs(cross[et]))
        matches.append(
            {
                "estimate": e + 1,
                "true": int(true_cols[t]) + 1,
                "correlation": float(cross[e, t]),
                "variance_explained": float(cross[e, t] ** 2),
                "estimate_sd": float(raw_sd[e]),
                "true_sd": float(true[:, t].std(ddof=1)),
            }
        )
        free_e.discard(e)
        free_t.discard(t)
    matches.sort(key=lambda d: d["estimate"])
    return RecoveryReport(corr, cross, matches, list(est_cols), list(true_cols))


def factor_overlap_selection(
    item_loadings,
    anchor_items,
    loading_threshold: float = 1.3,
    factor_count_threshold: int = 5,
):
    """Select items that share strongly loaded factors with an anchor item set.

    Anchor loadings are binarized at ``loading_threshold`` and counted per
    factor; factors with a count above ``factor_count_threshold`` are
    retained. Non-anchor items whose loading exceeds the threshold on any
    retained factor are selected. Returns ``(factors, items)`` as sorted
    index arrays.
    """
    loadings = np.asarray(item_loadings, dtype=np.float64)
    if loadings.ndim != 2:
        raise InvalidArgumentError("item_loadings must be an n x r matrix")
    anchors = np.unique(np.asarray(anchor_items, dtype=np.int64))
    if len(anchors) == 0:
        raise InvalidArgumentError("anchor set is empty")
    if anchors.min() < 0 or anchors.max() >= loadings.shape[0]:
        raise InvalidArgumentError("anchor index out of range")
    high = loadings > loading_threshold
    counts = high[anchors].sum(axis=0)
    factors = np.flatnonzero(counts > factor_count_threshold)
    if len(factors) == 0:
        warnings.warn("no factor passed the count threshold; selection is empty", stacklevel=2)
        return factors, np.array([], dtype=np.int64)
    others = np.setdiff1d(np.arange(loadings.shape[0]), anchors)
    chosen = others[high[others][:, factors].any(axis=1)]
    return factors, chosen
