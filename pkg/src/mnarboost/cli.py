"""Command-line entry point: ``mnarboost {simulate,fit,predict,truths,benchmark}``.

Exit codes: 0 success, 2 invalid input, 3 estimating-equation divergence,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import replace

import numpy as np

from .config import load_config
from .data import Dataset, LossSpec, MethodSpec, validate
from .errors import InvalidInput, MnarBoostError, NumericalFailure, SolverDiverged
from .pipeline import RECORD_FIELDS, PipelineConfig, benchmark_tasks, fit_method, run_benchmark
from .simulator import SimConfig, TruthOracle, gen_dataset, true_mean, true_median, true_propensity
from .splines import AdditiveSplineModel

log = logging.getLogger("mnarboost")

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED, EXIT_NUMERICAL = 0, 2, 3, 4


def _write_truths(path, ids, X, oracle):
    mean = true_mean(oracle, X) if len(X) else np.empty(0)
    med = true_median(oracle, X) if len(X) else np.empty(0)
    prop = true_propensity(oracle, X, mean) if len(X) else np.empty(0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "true_mean", "true_median", "true_propensity"])
        for i in range(len(ids)):
            w.writerow([int(ids[i]), repr(float(mean[i])), repr(float(med[i])), repr(float(prop[i]))])


def cmd_simulate(args) -> int:
    cfg = SimConfig(args.setting, args.gamma_y, args.n, args.seed)
    ds = gen_dataset(cfg)
    os.makedirs(args.out, exist_ok=True)
    ds.to_csv(os.path.join(args.out, "data.csv"))
    ds.to_csv(os.path.join(args.out, "data.full.csv"), responses=ds.full_y)
    _write_truths(os.path.join(args.out, "truths.csv"), ds.index, ds.x, TruthOracle.of(cfg))
    log.info("wrote %d rows (%.1f%% missing) to %s", ds.n, 100 * (1 - ds.r.mean()), args.out)
    return EXIT_OK


def _read_full(path, ds: Dataset) -> Dataset:
    full = Dataset.from_csv(path, unmasked=True)
    if (full.n != ds.n or not np.array_equal(full.index, ds.index)
            or not np.array_equal(full.r, ds.r) or not np.allclose(full.x, ds.x)):
        raise InvalidInput(f"{path} does not match the rows of the data file")
    return replace(ds, full_y=full.full_y)


def _write_predictions(path, ids, preds):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "prediction"])
        for i, p in zip(ids, preds):
            w.writerow([int(i), repr(float(p))])


def cmd_fit(args) -> int:
    cfg = load_config(args.config, {"loss.huber_q": args.huber_q, "adj.bj_seed": args.seed})
    pcfg = PipelineConfig.from_mapping(cfg)
    ds = Dataset.from_csv(args.data)
    if args.full:
        ds = _read_full(args.full, ds)
    method = MethodSpec(args.method, "nonparametric" if args.method == "ipwn" else "parametric")
    loss = LossSpec(args.loss, float(cfg["loss.huber_q"]))
    out = fit_method(ds, method, loss, pcfg)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "model.txt"), "w") as fh:
        fh.write(out.model.to_text())
    report = out.report.to_dict()
    report.update(method=args.method, loss=args.loss)
    if out.working.solver is not None:
        s = out.working.solver
        report["solver"] = {"converged": s.converged, "iterations": s.iterations, "norm": s.norm,
                            "gamma_hat": s.gamma_hat.gamma.tolist()}
    with open(os.path.join(args.out, "fit_report.json"), "w") as fh:
        json.dump(report, fh, indent=2)
    test = Dataset.from_csv(args.test) if args.test else ds
    _write_predictions(os.path.join(args.out, "predictions.csv"), test.index, out.model.predict(test.x))
    log.info("%s/%s: %d iterations, stopped by %s", args.method, args.loss,
             out.report.iterations, out.report.stop_reason)
    return EXIT_OK


def _read_covariates(path):
    """Covariate columns ``x1..xp`` (plus optional ``id``) of a CSV; y/r are ignored."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return np.empty(0, dtype=int), np.empty((0, 0))
    header = [h.strip() for h in rows[0]]
    xcols = sorted((i for i, h in enumerate(header) if h.startswith("x") and h[1:].isdigit()),
                   key=lambda i: int(header[i][1:]))
    body = [r for r in rows[1:] if r]
    if not xcols:
        if body:
            raise InvalidInput(f"{path}: no covariate columns")
        return np.empty(0, dtype=int), np.empty((0, 0))
    try:
        X = np.array([[float(r[i]) for i in xcols] for r in body]).reshape(len(body), len(xcols))
    except (ValueError, IndexError) as exc:
        raise InvalidInput(f"{path}: malformed covariate row ({exc})")
    ids = np.array([int(r[header.index("id")]) for r in body]) if "id" in header else np.arange(len(body))
    return ids, X


def cmd_truths(args) -> int:
    oracle = TruthOracle(args.setting, args.gamma_y)
    ids, X = _read_covariates(args.data)
    p = 2 if args.setting == 1 else 9
    if len(ids) and X.shape[1] != p:
        raise InvalidInput(f"setting {args.setting} needs {p} covariates, file has {X.shape[1]}")
    _write_truths(args.out, ids, X, oracle)
    return EXIT_OK


def cmd_predict(args) -> int:
    with open(args.model) as fh:
        model = AdditiveSplineModel.from_text(fh.read())
    ids, X = _read_covariates(args.data)
    preds = model.predict(X) if len(ids) else np.empty(0)
    _write_predictions(args.out, ids, preds)
    return EXIT_OK


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return v


def cmd_benchmark(args) -> int:
    cfg = load_config(args.config, {"bench.seed": args.seed})
    tasks = benchmark_tasks(cfg, args.reps)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_FIELDS)
        fh.flush()

        def sink(recs):
            for rec in recs:
                w.writerow([_fmt(v) for v in rec])
            fh.flush()

        recs = run_benchmark(tasks, args.jobs, sink)
    failed = sum(1 for r in recs if r[5] == "s_rmse" and r[7] in ("solver_diverged", "numerical_failure"))
    log.info("benchmark: %d records, %d failed fits", len(recs), failed)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mnarboost", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a simulated sample")
    s.add_argument("--setting", type=int, choices=(1, 2), required=True)
    s.add_argument("--gamma-y", type=float, required=True)
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit one method on an observed-data CSV")
    f.add_argument("--data", required=True)
    f.add_argument("--method", choices=("r", "n", "ipw", "ipwn", "bj"), required=True)
    f.add_argument("--loss", choices=("l1", "l2", "huber"), default="l2")
    f.add_argument("--huber-q", type=float, default=None)
    f.add_argument("--config", default=None)
    f.add_argument("--full", default=None, help="unmasked responses (reference method)")
    f.add_argument("--test", default=None, help="rows to predict; defaults to the training rows")
    f.add_argument("--seed", type=int, default=None, help="seed for the Buckley-James draws")
    f.add_argument("--out", required=True, help="output directory")
    f.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    b = sub.add_parser("benchmark", help="replicated simulation study")
    b.add_argument("--config", default=None)
    b.add_argument("--reps", type=int, default=100)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_benchmark)

    t = sub.add_parser("truths", help="true mean/median/propensity for covariate rows")
    t.add_argument("--setting", type=int, choices=(1, 2), required=True)
    t.add_argument("--gamma-y", type=float, required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_truths)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SolverDiverged as exc:
        log.error("%s", exc)
        return EXIT_DIVERGED
    except InvalidInput as exc:
        log.error("invalid input: %s", exc)
        return EXIT_INVALID
    except (NumericalFailure, MnarBoostError, FloatingPointError, np.linalg.LinAlgError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
