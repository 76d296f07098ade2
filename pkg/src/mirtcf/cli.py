"""Command line entry point: ``mirtcf <subcommand> ...``.

Every subcommand that writes files puts CSV outputs and a ``manifest.json``
in ``--out``. Failures print one JSON record on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
import time
import warnings
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import io
from .bound import ScalarDistribution, empirical_expected_accuracy, expected_accuracy_from_density
from .bound import rasch_density, rasch_expected_accuracy
from .errors import InvalidArgumentError, MirtError
from .metrics import evaluate
from .model import ModelSpec, ParameterSet, log_likelihood, predict, prob, logit_matrix
from .optim import FitConfig, fit, score_persons
from .postprocess import factor_overlap_selection, recovery_report
from .selection import SearchSpace, select
from .simulate import PRESETS, SimConfig, preset, simulate

logger = logging.getLogger("mirtcf")

TABLE2 = (
    ("normal:0,1", "normal:0,1"),
    ("normal:0,1", "normal:0,2"),
    ("normal:0,1", "normal:-5,1"),
    ("normal:0,1", "normal:5,1"),
)


class UsageError(InvalidArgumentError):
    code = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class _Timer:
    def __init__(self):
        self.phases = {}

    @contextmanager
    def phase(self, name):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.phases[name] = round(time.perf_counter() - start, 6)


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise InvalidArgumentError(f"expected comma-separated integers, got {text!r}") from exc


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise InvalidArgumentError(f"expected comma-separated numbers, got {text!r}") from exc


def _models(text):
    named = {
        "rasch": ModelSpec.rasch(),
        "person-independence": ModelSpec(0, item_intercept=True),
        "item-independence": ModelSpec(0, person_intercept=True, item_intercept=False),
    }
    out = []
    for tok in (t.strip() for t in text.split(",") if t.strip()):
        if tok in named:
            out.append(named[tok])
        else:
            try:
                out.append(ModelSpec.m2pl(int(tok)))
            except ValueError as exc:
                raise InvalidArgumentError(f"unknown model {tok!r}; use an integer dimension or {sorted(named)}") from exc
    if not out:
        raise InvalidArgumentError("no models given")
    return out


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_csv(df, path) -> Path:
    df.to_csv(path, index=False, lineterminator="\n")
    return Path(path)


def _fit_config(args, **extra) -> FitConfig:
    return FitConfig(
        lam=extra.get("lam", 0.0),
        learning_rate=args.learning_rate,
        batch_count=args.batches,
        max_epochs=args.max_epochs,
        patience=args.patience,
        seed=args.seed,
        full_batch_deterministic=args.full_batch,
        penalize_intercepts=not args.no_penalize_intercepts,
    )


def _add_fit_flags(p):
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--batches", type=int, default=10, help="mini-batches per epoch")
    p.add_argument("--max-epochs", type=int, default=500)
    p.add_argument("--patience", type=int, default=5, help="early-stopping patience in epochs")
    p.add_argument("--full-batch", action="store_true", help="one deterministic full-data step per epoch")
    p.add_argument("--no-penalize-intercepts", action="store_true")


def _manifest(args, out, timer, config, inputs=(), outputs=()):
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "argv")}
    cfg.update(config)
    cfg["argv"] = args.argv
    cfg["cwd"] = os.getcwd()
    io.write_manifest(out, args.command, cfg, args.seed, inputs, timer.phases, outputs)


# subcommands


def cmd_simulate(args):
    import pandas as pd

    timer = _Timer()
    out = _out_dir(args.out)
    overrides = {}
    for key, val in [("persons", args.persons), ("items", args.items), ("dim", args.dim)]:
        if val is not None:
            overrides[key] = val
    if args.sparsity is not None:
        overrides["p_miss"] = args.sparsity
    if args.mean is not None:
        overrides["mean"] = tuple(_floats(args.mean))
    if args.cov is not None:
        overrides["cov"] = tuple(tuple(_floats(row)) for row in args.cov.split(";"))
    inputs = []
    if args.item_params:
        iids, x, has_int, r = io.load_matrix(args.item_params, "item")
        if not has_int:
            raise InvalidArgumentError("item parameter file needs an intercept column")
        overrides.update(items=len(iids), dim=r, intercepts=x[:, 0], loading=x[:, 1:])
        inputs.append(args.item_params)
    elif args.loading:
        overrides["loading"] = args.loading
    with timer.phase("simulate"):
        if args.preset:
            cfg = preset(args.preset, seed=args.seed, **overrides)
        else:
            cfg = SimConfig(seed=args.seed, **overrides)
        gt = simulate(cfg)
    files = [out / "responses.csv", out / "true_persons.csv", out / "true_items.csv"]
    with timer.phase("write"):
        io.save_triplets(gt.responses, files[0])
        io.save_params(gt.spec, gt.params, gt.responses.person_ids, gt.responses.item_ids, files[1], files[2])
    ceiling = empirical_expected_accuracy(gt.spec, gt.params)
    summary = pd.DataFrame([{
        "persons": cfg.persons, "items": cfg.items, "dim": cfg.dim, "p_miss": cfg.p_miss,
        "observed": gt.responses.n_obs, "mean_response": float(gt.responses.responses.mean()),
        "expected_accuracy_ceiling": ceiling,
    }])
    files.append(_write_csv(summary, out / "simulation.csv"))
    config = {"sim_config": {k: (np.asarray(v).tolist() if isinstance(v, np.ndarray) else v)
                             for k, v in dataclasses.asdict(cfg).items()}}
    _manifest(args, out, timer, config, inputs, files)
    print(summary.to_string(index=False))
    return 0


def cmd_fit(args):
    import pandas as pd

    timer = _Timer()
    out = _out_dir(args.out)
    with timer.phase("load"):
        U = io.load_responses(args.data)
        U_valid = None
        if args.valid:
            U_valid = io.align(io.load_responses(args.valid), U.person_ids, U.item_ids)
    spec = ModelSpec(args.dim, person_intercept=args.person_intercept, item_intercept=not args.no_item_intercept)
    cfg = _fit_config(args, lam=args.lam)
    with timer.phase("fit"):
        res = fit(U, spec, cfg, U_valid)
    files = [out / "persons.csv", out / "items.csv"]
    io.save_params(spec, res.params, U.person_ids, U.item_ids, *files)
    traj = pd.DataFrame([
        {"epoch": k + 1, "objective": e.objective, "valid_auc": e.valid_auc, "valid_log_loss": e.valid_log_loss}
        for k, e in enumerate(res.trajectory)
    ])
    if U_valid is None:
        traj = traj.drop(columns=["valid_auc", "valid_log_loss"])
    files.append(_write_csv(traj, out / "trajectory.csv"))
    summary = {
        "model": spec.name, "dim": spec.r, "lambda": cfg.lam, "epochs": res.epochs_run,
        "objective": res.objective, "log_likelihood": log_likelihood(U, spec, res.params),
        "best_epoch": None if res.best_epoch is None else res.best_epoch + 1,
        "best_validation_auc": res.best_validation_score,
    }
    if U_valid is not None:
        summary.update({f"valid_{k}": v for k, v in evaluate(predict(spec, res.params, U_valid), U_valid.responses).items()})
    df = pd.DataFrame([summary])
    files.append(_write_csv(df, out / "fit.csv"))
    _manifest(args, out, timer, {"fit_config": dataclasses.asdict(cfg)}, [p for p in (args.data, args.valid) if p], files)
    print(df.to_string(index=False))
    return 0


def cmd_explore(args):
    import pandas as pd

    timer = _Timer()
    out = _out_dir(args.out)
    inputs = []
    with timer.phase("load"):
        if args.data:
            U = io.load_responses(args.data)
            inputs.append(args.data)
        elif args.preset:
            overrides = {} if args.sparsity is None else {"p_miss": args.sparsity}
            data_seed = args.seed if args.data_seed is None else args.data_seed
            U = simulate(preset(args.preset, seed=data_seed, **overrides)).responses
        else:
            raise UsageError("explore needs --data or --preset")
    split = tuple(_floats(args.split))
    space = SearchSpace(
        _models(args.dims), _floats(args.lambdas), folds=args.folds, restarts=args.restarts,
        sample_prob=args.sample_p, split=split, seed=args.seed, early_stopping=not args.no_early_stopping,
    )
    cfg = _fit_config(args)
    with timer.phase("select"):
        result = select(U, space, cfg, args.method, jobs=args.jobs)
    for res in result.models:
        timer.phases[f"model:{res.spec.name}"] = round(res.test.seconds + sum(r.seconds for r in res.tuning), 6)
    table = result.table()
    names = {(res.spec.r, res.spec.person_intercept, res.spec.item_intercept): res.spec.name for res in result.models}
    table.insert(0, "model", [names[(d, bool(p), bool(i))] for d, p, i in
                              zip(table["dim"], table["person_intercept"], table["item_intercept"])])
    best = result.best
    table["selected"] = [int(n == best.name) for n in table["model"]]
    tuning = result.tuning_table()
    files = [_write_csv(table, out / "explore.csv"), _write_csv(tuning, out / "tuning.csv")]
    config = {"search": {"models": [s.name for s in space.models], "lambda_grid": [list(g) for g in space.lambda_grid],
                         "folds": space.folds, "restarts": space.restarts, "sample_prob": space.sample_prob,
                         "split": list(space.split), "early_stopping": space.early_stopping},
              "fit_config": dataclasses.asdict(cfg)}
    _manifest(args, out, timer, config, inputs, files)
    with pd.option_context("display.float_format", "{:.4f}".format, "display.width", 200):
        print(table.to_string(index=False))
    print(f"selected: {best.name} lambda={result.best_lam:g}")
    return 0


def cmd_bound(args):
    timer = _Timer()
    rows = []
    with timer.phase("bound"):
        if args.from_truth:
            truth = Path(args.from_truth)
            spec, params, _, _ = io.load_params(truth / "true_persons.csv", truth / "true_items.csv")
            rows.append({"theta": "truth", "beta": "truth", "method": "empirical",
                         "expected_accuracy": empirical_expected_accuracy(spec, params)})
        else:
            pairs = TABLE2 if args.table2 else [(args.theta, args.beta)]
            for t_text, b_text in pairs:
                if t_text is None or b_text is None:
                    raise UsageError("bound needs --theta and --beta, --table2 or --from-truth")
                theta, beta = ScalarDistribution.parse(t_text), ScalarDistribution.parse(b_text)
                if args.method == "density":
                    value = expected_accuracy_from_density(lambda p: rasch_density(p, theta, beta))
                else:
                    value = rasch_expected_accuracy(theta, beta)
                rows.append({"theta": str(theta), "beta": str(beta), "method": args.method, "expected_accuracy": value})
    if args.out:
        # plain csv keeps this subcommand free of the pandas import
        out = _out_dir(args.out)
        files = [out / "bound.csv"]
        with open(files[0], "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows({**r, "expected_accuracy": io.fmt(r["expected_accuracy"])} for r in rows)
        inputs = []
        if args.from_truth:
            inputs = [Path(args.from_truth) / "true_persons.csv", Path(args.from_truth) / "true_items.csv"]
        _manifest(args, out, timer, {}, inputs, files)
    if len(rows) == 1 and not args.table2:
        print(f"{rows[0]['expected_accuracy']:.4f}")
    else:
        for r in rows:
            print(f"{r['theta']}\t{r['beta']}\t{r['expected_accuracy']:.4f}")
    return 0


def cmd_score(args):
    import pandas as pd

    timer = _Timer()
    out = _out_dir(args.out)
    with timer.phase("load"):
        iids, x, has_int, r = io.load_matrix(args.items, "item")
        U = io.align(io.load_responses(args.data), item_ids=iids)
    spec = ModelSpec(r, person_intercept=args.person_intercept, item_intercept=has_int)
    cfg = FitConfig(lam=args.lam, seed=args.seed, penalize_intercepts=not args.no_penalize_intercepts)
    with timer.phase("score"), warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        scores = score_persons(U, spec, x, cfg)
    for w in caught:
        logger.warning("%s", w.message)
    files = [out / "persons.csv"]
    io.save_matrix(files[0], "person", U.person_ids, scores.theta, spec.person_intercept, spec.r)
    params = ParameterSet(scores.theta, x)
    dense = U.to_dense()
    probs = prob(logit_matrix(spec, params))
    pi, ii = np.meshgrid(np.arange(U.m), np.arange(U.n), indexing="ij")
    pred = pd.DataFrame({
        "person_id": U.person_ids[pi.ravel()],
        "item_id": U.item_ids[ii.ravel()],
        "probability": probs.ravel(),
        "response": pd.array(np.where(np.isnan(dense), pd.NA, dense).ravel(), dtype="Int64"),
        "scored": np.repeat(~scores.unscored, U.n).astype(int),
    })
    files.append(_write_csv(pred, out / "predictions.csv"))
    summary = pd.DataFrame([{"persons": U.m, "unscored": int(scores.unscored.sum()),
                             **{f"observed_{k}": v for k, v in evaluate(predict(spec, params, U), U.responses).items()}}])
    files.append(_write_csv(summary, out / "score.csv"))
    _manifest(args, out, timer, {}, [args.items, args.data], files)
    print(summary.to_string(index=False))
    return 0


def cmd_report(args):
    import pandas as pd

    timer = _Timer()
    out = _out_dir(args.out)
    files, inputs = [], []
    if not (args.explore or args.estimates or args.items):
        raise UsageError("report needs --explore, --estimates/--truth or --items/--anchors")
    if args.explore:
        labels = args.labels.split(",") if args.labels else [Path(p).parent.name or Path(p).stem for p in args.explore]
        if len(labels) != len(args.explore):
            raise InvalidArgumentError("--labels must name every --explore file")
        frames = []
        for label, path in zip(labels, args.explore):
            df = pd.read_csv(path)
            keep = ["model", "dim", "best_lambda", "auc", "acc", "log_loss"]
            missing = [c for c in keep if c not in df.columns]
            if missing:
                raise InvalidArgumentError(f"{path} lacks columns {missing}")
            df = df[keep].sort_values("dim", kind="stable")
            df.insert(0, "label", label)
            frames.append(df)
            inputs.append(path)
        curve = pd.concat(frames, ignore_index=True)
        files.append(_write_csv(curve, out / "auc_by_dim.csv"))
        with pd.option_context("display.float_format", "{:.4f}".format):
            print(curve.to_string(index=False))
    if args.estimates or args.truth:
        if not (args.estimates and args.truth):
            raise UsageError("--estimates and --truth go together")
        e_ids, e_val, e_int, _ = io.load_matrix(args.estimates, "person")
        t_ids, t_val, t_int, _ = io.load_matrix(args.truth, "person")
        lookup = {str(v): k for k, v in enumerate(t_ids)}
        rows = [lookup.get(str(v)) for v in e_ids]
        if any(r is None for r in rows):
            raise InvalidArgumentError("estimate file has person ids absent from the truth file")
        report = recovery_report(e_val[:, int(e_int):], t_val[rows][:, int(t_int):])
        files.append(_write_csv(report.table(), out / "recovery_matches.csv"))
        corr = report.correlation_frame().reset_index(names="variable")
        files.append(_write_csv(corr, out / "recovery_correlation.csv"))
        inputs += [args.estimates, args.truth]
        with pd.option_context("display.float_format", "{:.4f}".format):
            print(report.table().to_string(index=False))
    if args.items or args.anchors:
        if not (args.items and args.anchors):
            raise UsageError("--items and --anchors go together")
        iids, x, has_int, _ = io.load_matrix(args.items, "item")
        index = {str(v): k for k, v in enumerate(iids)}
        anchor_ids = [a.strip() for a in args.anchors.split(",") if a.strip()]
        if any(a not in index for a in anchor_ids):
            raise InvalidArgumentError("anchor ids must appear in the item file")
        factors, chosen = factor_overlap_selection(
            x[:, int(has_int):], [index[a] for a in anchor_ids], args.loading_threshold, args.count_threshold
        )
        sel = pd.DataFrame({"item_id": iids[chosen]})
        files.append(_write_csv(sel, out / "overlap_items.csv"))
        files.append(_write_csv(pd.DataFrame({"factor": [f"f{k + 1}" for k in factors]}), out / "overlap_factors.csv"))
        inputs.append(args.items)
        print(f"factors: {','.join(f'f{k + 1}' for k in factors) or '-'}; items selected: {len(chosen)}")
    _manifest(args, out, timer, {}, inputs, files)
    return 0


def cmd_rerun(args):
    manifest = json.loads(Path(args.manifest).read_text())
    argv = list(manifest["config"]["argv"])
    out = str(Path(args.out).resolve())
    if "--out" in argv:
        argv[argv.index("--out") + 1] = out
    else:
        argv += ["--out", out]
    cwd = os.getcwd()
    os.chdir(manifest["config"].get("cwd", cwd))
    try:
        return main(argv)
    finally:
        os.chdir(cwd)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mirtcf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a synthetic data set with known parameters")
    p.add_argument("--preset", choices=PRESETS + ("sparse5d-large",))
    p.add_argument("--persons", type=int)
    p.add_argument("--items", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--sparsity", type=float, help="MCAR deletion probability")
    p.add_argument("--loading", choices=["single", "dense"])
    p.add_argument("--item-params", help="item parameter CSV (item_id,intercept,f1..fd) fixing the items")
    p.add_argument("--mean", help="comma-separated ability means")
    p.add_argument("--cov", help="ability covariance, rows separated by ';'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit one model at one penalty")
    p.add_argument("--data", required=True, help="triplet or dense CSV")
    p.add_argument("--valid", help="validation cells for early stopping")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--person-intercept", action="store_true")
    p.add_argument("--no-item-intercept", action="store_true")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    _add_fit_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("explore", help="select dimension and penalty")
    p.add_argument("--data")
    p.add_argument("--preset", choices=PRESETS + ("sparse5d-large",))
    p.add_argument("--sparsity", type=float)
    p.add_argument("--data-seed", type=int, help="seed for --preset data (default: --seed)")
    p.add_argument("--method", choices=["striated", "elementwise"], default="striated")
    p.add_argument("--dims", default="1,2,3,4,6,9",
                   help="comma-separated dimensions; also rasch, person-independence, item-independence")
    p.add_argument("--lambdas", default="0.02,0.04,0.06,0.08")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--sample-p", type=float, default=0.7)
    p.add_argument("--split", default="0.5,0.25,0.25", help="train,cv,test person shares")
    p.add_argument("--no-early-stopping", action="store_true")
    p.add_argument("--jobs", type=int, help="worker processes (default: $MIRTCF_JOBS or 1)")
    _add_fit_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("bound", help="expected accuracy ceiling")
    p.add_argument("--theta", help="person distribution, e.g. normal:0,1 (mean, sd)")
    p.add_argument("--beta", help="item distribution, e.g. normal:0,2")
    p.add_argument("--table2", action="store_true", help="the four standard normal examples")
    p.add_argument("--from-truth", help="directory with true_persons.csv and true_items.csv")
    p.add_argument("--method", choices=["quad", "density"], default="quad")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("score", help="score new persons against fixed items")
    p.add_argument("--items", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--person-intercept", action="store_true")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--no-penalize-intercepts", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="AUC-by-dimension, recovery and item-overlap tables")
    p.add_argument("--explore", nargs="+", help="explore.csv files")
    p.add_argument("--labels", help="comma-separated labels for --explore files")
    p.add_argument("--estimates", help="estimated person parameter CSV")
    p.add_argument("--truth", help="true person parameter CSV")
    p.add_argument("--items", help="item parameter CSV for factor-overlap selection")
    p.add_argument("--anchors", help="comma-separated anchor item ids")
    p.add_argument("--loading-threshold", type=float, default=1.3)
    p.add_argument("--count-threshold", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("rerun", help="repeat a run from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_rerun)
    return parser


def _error(category: str, message: str, status: int) -> int:
    print(json.dumps({"error": {"category": category, "message": message, "exit_status": status}}), file=sys.stderr)
    return status


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        args.argv = argv
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except MirtError as exc:
        return _error(exc.code, str(exc), exc.exit_status)
    except FileNotFoundError as exc:
        return _error("missing-file", f"{exc.strerror}: {exc.filename}", 5)
    except FloatingPointError as exc:
        return _error("numeric", str(exc), 6)
    except Exception as exc:  # noqa: BLE001 - last-resort record for batch callers
        return _error("internal", f"{type(exc).__name__}: {exc}", 1)


if __name__ == "__main__":
    sys.exit(main())
