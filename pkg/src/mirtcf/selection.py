"""Cross-validated model selection: the striated and elementwise procedures.

Striated: persons are split row-wise into train / cv / test. A model and
penalty are scored by k-fold cross-validation over *items*: for each fold the
evaluation persons' cells on the fold's items are hidden, the model is fit on
everything else, evaluation persons are rescored with the item parameters
held fixed, and the hidden cells are predicted.

Elementwise: persons are split into train / test only. Penalties are tuned by
repeatedly masking a Bernoulli sample of training cells, fitting on the
sample and scoring on the complement. The chosen penalty is then scored on
the test persons with the same item-fold test as the striated procedure.
"""

from __future__ import annotations

import logging
import math
import os
import time
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .data import ResponseMatrix
from .errors import (
    InvalidArgumentError,
    MaskInfeasibleError,
    SplitDegenerateError,
)
from .metrics import METRICS, evaluate
from .model import ModelSpec, ParameterSet, predict
from .optim import FitConfig, fit, score_persons

logger = logging.getLogger(__name__)

JOBS_ENV = "MIRTCF_JOBS"


def derive_seed(base, *tags) -> int:
    """Deterministic 64-bit seed from a base seed and string/int tags."""
    key = [zlib.crc32(str(t).encode()) for t in tags]
    state = np.random.SeedSequence(int(base), spawn_key=key).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


def _lam_tag(lam: float) -> str:
    return repr(float(lam))


def _model_tag(spec: ModelSpec) -> str:
    return f"{spec.r}:{int(spec.person_intercept)}:{int(spec.item_intercept)}"


@dataclass(frozen=True)
class SearchSpace:
    models: tuple
    lambda_grid: tuple
    folds: int = 5
    restarts: int = 10
    sample_prob: float = 0.7
    split: tuple = (0.5, 0.25, 0.25)
    seed: int = 0
    early_stopping: bool = True

    def __post_init__(self):
        models = tuple(self.models)
        grid = tuple(self.lambda_grid)
        if not models:
            raise InvalidArgumentError("search space has no models")
        # a flat list of penalties applies to every model
        if grid and not isinstance(grid[0], (tuple, list, np.ndarray)):
            grid = tuple(tuple(grid) for _ in models)
        grid = tuple(tuple(float(v) for v in g) for g in grid)
        if len(grid) != len(models) or any(len(g) == 0 for g in grid):
            raise InvalidArgumentError("need a nonempty penalty list for each model")
        if any(v < 0 for g in grid for v in g):
            raise InvalidArgumentError("penalties must be nonnegative")
        if self.folds < 2:
            raise InvalidArgumentError("folds must be at least 2")
        if self.restarts < 1:
            raise InvalidArgumentError("restarts must be positive")
        if not 0 < self.sample_prob < 1:
            raise InvalidArgumentError("sample_prob must lie in (0, 1)")
        if len(self.split) != 3 or any(s < 0 for s in self.split) or not math.isclose(sum(self.split), 1.0):
            raise InvalidArgumentError("split must be three nonnegative proportions summing to 1")
        object.__setattr__(self, "models", models)
        object.__setattr__(self, "lambda_grid", grid)
        object.__setattr__(self, "split", tuple(float(s) for s in self.split))

    @classmethod
    def m2pl(cls, dims, lambdas, **kwargs) -> SearchSpace:
        return cls(tuple(ModelSpec.m2pl(d) for d in dims), tuple(lambdas), **kwargs)


@dataclass
class EvalReport:
    """Scores of one (model, penalty) on one evaluation stage.

    ``splits`` holds one metrics dict per fold or restart; ``scores`` is the
    arithmetic mean over splits (AUC over the splits where it is defined).
    """

    spec: ModelSpec
    lam: float
    stage: str
    splits: list = field(default_factory=list)
    scores: dict = field(default_factory=dict)
    undefined_auc: int = 0
    seconds: float = 0.0

    def finalize(self) -> EvalReport:
        self.scores = {}
        for key in METRICS:
            vals = np.array([s[key] for s in self.splits], dtype=np.float64)
            vals = vals[~np.isnan(vals)]
            self.scores[key] = float(vals.mean()) if len(vals) else math.nan
        self.undefined_auc = int(sum(math.isnan(s["auc"]) for s in self.splits))
        if self.undefined_auc:
            warnings.warn(
                f"{self.undefined_auc} split(s) with single-class outcomes excluded from the AUC mean",
                stacklevel=2,
            )
        return self

    @property
    def auc(self) -> float:
        return self.scores["auc"]


@dataclass
class ModelResult:
    spec: ModelSpec
    best_lam: float
    test: EvalReport
    tuning: list


@dataclass
class SelectionResult:
    method: str
    best: ModelSpec
    best_lam: float
    models: list

    def table(self):
        """Per-model test scores, best AUC first."""
        import pandas as pd

        rows = []
        for res in self.models:
            rows.append(
                {
                    "dim": res.spec.r,
                    "person_intercept": int(res.spec.person_intercept),
                    "item_intercept": int(res.spec.item_intercept),
                    "best_lambda": res.best_lam,
                    **{k: res.test.scores[k] for k in METRICS},
                }
            )
        df = pd.DataFrame(rows)
        return df.sort_values("auc", ascending=False, kind="stable").reset_index(drop=True)

    def tuning_table(self):
        import pandas as pd

        rows = []
        for res in self.models:
            for rep in res.tuning:
                rows.append({"dim": res.spec.r, "lambda": rep.lam, **{k: rep.scores[k] for k in METRICS}})
        return pd.DataFrame(rows)

    def result_for(self, spec: ModelSpec) -> ModelResult:
        for res in self.models:
            if res.spec == spec:
                return res
        raise KeyError(spec)


def split_rows(U: ResponseMatrix, proportions, seed) -> tuple:
    """Randomly partition persons into parts of the given proportions."""
    props = np.asarray(proportions, dtype=np.float64)
    if np.any(props < 0) or not math.isclose(props.sum(), 1.0):
        raise InvalidArgumentError("proportions must be nonnegative and sum to 1")
    order = np.random.default_rng(seed).permutation(U.m)
    cuts = np.rint(np.cumsum(props) * U.m).astype(int)
    cuts[-1] = U.m
    parts = np.split(order, cuts[:-1])
    if any(len(p) == 0 for p in parts):
        raise SplitDegenerateError(f"split {tuple(props)} of {U.m} persons leaves an empty part")
    return tuple(U.select_persons(np.sort(p)) for p in parts)


def item_folds(n_items: int, k: int, seed) -> list:
    if not 2 <= k <= n_items:
        raise InvalidArgumentError(f"cannot split {n_items} items into {k} folds")
    order = np.random.default_rng(seed).permutation(n_items)
    return [np.sort(f) for f in np.array_split(order, k)]


def sample_mask(U: ResponseMatrix, p: float, seed, max_attempts: int = 100) -> tuple:
    """Route each observed cell to the sample with probability ``p``.

    Cells of persons or items left without any sampled cell are redrawn,
    up to ``max_attempts`` rounds.
    """
    if not 0 < p < 1:
        raise InvalidArgumentError("p must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    sampled = rng.random(U.n_obs) < p
    has_p = U.person_counts() > 0
    has_i = U.item_counts() > 0
    for _ in range(max_attempts):
        bad_p = has_p & (np.bincount(U.persons[sampled], minlength=U.m) == 0)
        bad_i = has_i & (np.bincount(U.items[sampled], minlength=U.n) == 0)
        if not (bad_p.any() or bad_i.any()):
            return U.take(sampled), U.take(~sampled)
        redo = bad_p[U.persons] | bad_i[U.items]
        sampled[redo] = rng.random(int(redo.sum())) < p
    raise MaskInfeasibleError(
        f"could not keep a sampled cell for every person and item with p={p} after {max_attempts} attempts"
    )


def _heldout_metrics(U_heldout: ResponseMatrix, p: np.ndarray) -> dict:
    return evaluate(p, U_heldout.responses)


def striated_performance_test(
    U_known: ResponseMatrix,
    U_eval: ResponseMatrix,
    spec: ModelSpec,
    lam: float,
    folds: int,
    cfg: FitConfig,
    seed=0,
    early_stopping: bool = False,
    stage: str = "test",
) -> EvalReport:
    """Item-fold performance test of ``(spec, lam)`` on the persons of ``U_eval``."""
    if U_known.n != U_eval.n:
        raise InvalidArgumentError("known and evaluation matrices must share the item set")
    start = time.perf_counter()
    combined = U_known.stack_persons(U_eval)
    eval_rows = np.arange(U_known.m, combined.m)
    is_eval = combined.persons >= U_known.m
    report = EvalReport(spec, float(lam), stage)
    for f, fold_items in enumerate(item_folds(combined.n, folds, seed)):
        held = is_eval & np.isin(combined.items, fold_items)
        if not held.any():
            continue
        U_fit, U_held = combined.take(~held), combined.take(held)
        fcfg = replace(cfg, lam=float(lam), seed=derive_seed(cfg.seed, "spt", seed, _model_tag(spec), _lam_tag(lam), f))
        valid = None
        if early_stopping and 0 < U_held.responses.sum() < U_held.n_obs:
            valid = U_held
        res = fit(U_fit, spec, fcfg, valid)
        rest = U_fit.select_persons(eval_rows)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            theta = score_persons(rest, spec, res.params.x, fcfg).theta
        held_eval = U_held.select_persons(eval_rows)
        p = predict(spec, ParameterSet(theta, res.params.x), held_eval)
        report.splits.append(_heldout_metrics(held_eval, p))
    report.seconds = time.perf_counter() - start
    return report.finalize()


def _elementwise_tuning(U_tr, spec, lam, space: SearchSpace, cfg: FitConfig) -> EvalReport:
    start = time.perf_counter()
    report = EvalReport(spec, float(lam), "cv")
    for n in range(space.restarts):
        U_s, U_c = sample_mask(U_tr, space.sample_prob, derive_seed(space.seed, "mask", n))
        if U_c.n_obs == 0:
            continue
        rcfg = replace(cfg, lam=float(lam), seed=derive_seed(cfg.seed, "restart", _model_tag(spec), _lam_tag(lam), n))
        valid = None
        if space.early_stopping and 0 < U_c.responses.sum() < U_c.n_obs:
            valid = U_c
        res = fit(U_s, spec, rcfg, valid)
        report.splits.append(_heldout_metrics(U_c, predict(spec, res.params, U_c)))
    report.seconds = time.perf_counter() - start
    return report.finalize()


def _best_lambda(reports) -> float:
    # ties prefer the larger penalty
    key = [(_score(r.auc), r.lam) for r in reports]
    return reports[max(range(len(reports)), key=lambda i: key[i])].lam


def _score(v: float) -> float:
    return -math.inf if math.isnan(v) else v


def _pick_best(results) -> ModelResult:
    order = sorted(
        range(len(results)),
        key=lambda i: (-_score(results[i].test.auc), results[i].spec.r, -results[i].best_lam, i),
    )
    return results[order[0]]


def _jobs(jobs) -> int:
    if jobs is None:
        jobs = int(os.environ.get(JOBS_ENV, "1") or 1)
    return max(1, int(jobs))


def _run(calls, jobs):
    """Evaluate ``(fn, args, kwargs)`` triples, in a process pool when ``jobs > 1``."""
    if jobs <= 1 or len(calls) <= 1:
        return [fn(*a, **kw) for fn, a, kw in calls]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(fn, *a, **kw) for fn, a, kw in calls]
        return [f.result() for f in futures]


def best_model_striated(U: ResponseMatrix, space: SearchSpace, cfg: FitConfig, jobs=None) -> SelectionResult:
    jobs = _jobs(jobs)
    U_tr, U_cv, U_ts = split_rows(U, space.split, derive_seed(space.seed, "split"))
    fold_seed = derive_seed(space.seed, "folds")
    calls = [
        (striated_performance_test, (U_tr, U_cv, spec, lam, space.folds, cfg),
         {"seed": fold_seed, "early_stopping": space.early_stopping, "stage": "cv"})
        for spec, grid in zip(space.models, space.lambda_grid)
        for lam in grid
    ]
    tuned = _run(calls, jobs)
    per_model, k = [], 0
    for grid in space.lambda_grid:
        per_model.append(tuned[k:k + len(grid)])
        k += len(grid)

    known = U_tr.stack_persons(U_cv)
    best_lams = [_best_lambda(reps) for reps in per_model]
    calls = [
        (striated_performance_test, (known, U_ts, spec, lam, space.folds, cfg), {"seed": fold_seed})
        for spec, lam in zip(space.models, best_lams)
    ]
    tests = _run(calls, jobs)
    results = [ModelResult(s, l, t, reps) for s, l, t, reps in zip(space.models, best_lams, tests, per_model)]
    best = _pick_best(results)
    return SelectionResult("striated", best.spec, best.best_lam, results)


def best_model_elementwise(U: ResponseMatrix, space: SearchSpace, cfg: FitConfig, jobs=None) -> SelectionResult:
    jobs = _jobs(jobs)
    train_share = space.split[0] + space.split[1]
    U_tr, U_ts = split_rows(U, (train_share, space.split[2]), derive_seed(space.seed, "split"))
    calls = [
        (_elementwise_tuning, (U_tr, spec, lam, space, cfg), {})
        for spec, grid in zip(space.models, space.lambda_grid)
        for lam in grid
    ]
    tuned = _run(calls, jobs)
    per_model, k = [], 0
    for grid in space.lambda_grid:
        per_model.append(tuned[k:k + len(grid)])
        k += len(grid)

    fold_seed = derive_seed(space.seed, "folds")
    best_lams = [_best_lambda(reps) for reps in per_model]
    calls = [
        (striated_performance_test, (U_tr, U_ts, spec, lam, space.folds, cfg), {"seed": fold_seed})
        for spec, lam in zip(space.models, best_lams)
    ]
    tests = _run(calls, jobs)
    results = [ModelResult(s, l, t, reps) for s, l, t, reps in zip(space.models, best_lams, tests, per_model)]
    best = _pick_best(results)
    return SelectionResult("elementwise", best.spec, best.best_lam, results)


def select(U: ResponseMatrix, space: SearchSpace, cfg: FitConfig, method: str = "striated", jobs=None):
    if method == "striated":
        return best_model_striated(U, space, cfg, jobs)
    if method == "elementwise":
        return best_model_elementwise(U, space, cfg, jobs)
    raise InvalidArgumentError(f"unknown method {method!r}")
