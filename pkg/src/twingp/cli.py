"""Command-line interface: ``twingp fit | predict | bench``.

Exit codes: 0 success, 1 bad input, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from .bench.experiments import GRAMACY_PRESET, PRESETS, run_emulation, run_realdata
from .bench.functions import FUNCTIONS
from .dataset import DataError, load_csv, load_inputs_csv
from .gp_core import FitSettings, NumericalError
from .linalg import NotPositiveDefinite
from .model import (ModelFileError, TwinGPConfig, feasible_sizes, load_model, predict_batch,
                    save_model, train)

logger = logging.getLogger("twingp")

EXIT_OK, EXIT_USER, EXIT_NUMERIC = 0, 1, 2


def _size(value: str):
    if value == "auto":
        return None
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'auto', got {value!r}") from None
    if n < 0:
        raise argparse.ArgumentTypeError("sizes must be nonnegative")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twingp", description="Global-local Gaussian process regression.")
    p.add_argument("--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def sizes(sp):
        sp.add_argument("--global-size", type=_size, default=None, metavar="N|auto")
        sp.add_argument("--local-size", type=_size, default=None, metavar="N|auto")
        sp.add_argument("--validation-size", type=_size, default=None, metavar="N|auto")

    fit = sub.add_parser("fit", help="train a model on a CSV file")
    fit.add_argument("--train", required=True)
    fit.add_argument("--target", default="-1", help="target column name or index (default: last)")
    sizes(fit)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--model", required=True, help="output model file")
    fit.add_argument("--out", default=None, help="fit report JSON (default: <model>.report.json)")
    fit.add_argument("--pin-eta-g", type=float, default=None, help="fix the global nugget")
    fit.add_argument("--pin-eta-local", type=float, default=None, help="fix the local nugget")
    fit.add_argument("--threads", type=int, default=1)

    pred = sub.add_parser("predict", help="predict at the rows of a CSV file")
    pred.add_argument("--model", required=True)
    pred.add_argument("--test", required=True)
    pred.add_argument("--target", default=None, help="column to ignore in the query file")
    pred.add_argument("--out", required=True)
    pred.add_argument("--threads", type=int, default=1)

    bench = sub.add_parser("bench", help="run a benchmark experiment")
    bench.add_argument("--function", default=None, help=f"one of {', '.join(sorted(FUNCTIONS))}")
    bench.add_argument("--train", default=None, help="CSV for the random-split protocol")
    bench.add_argument("--target", default="-1")
    bench.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    bench.add_argument("--iterations", type=int, default=None)
    sizes(bench)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--oracle-cap", type=int, default=2000)
    bench.add_argument("--out", default="bench", help="output prefix for report files")
    bench.add_argument("--threads", type=int, default=1)
    return p


def _dump(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_fit(args) -> int:
    data = load_csv(args.train, args.target)
    fit = FitSettings(pin_nugget=args.pin_eta_g)
    cfg = TwinGPConfig(args.global_size, args.local_size, args.validation_size, args.seed, fit)
    g, l, v = feasible_sizes(data.n, data.d, *cfg.sizes(data.n, data.d))
    cfg = TwinGPConfig(g, l, v, args.seed, fit, pin_local_nugget=args.pin_eta_local, n_jobs=args.threads)
    model = train(data, cfg)
    save_model(model, args.model)
    out = args.out or f"{args.model}.report.json"
    report = model.fit_report()
    report["command"] = {k: v for k, v in vars(args).items() if k != "func"}
    _dump(report, out)
    _dump(model.report["timings"], f"{Path(out).with_suffix('')}.timings.json")
    print(f"g={model.g} l={model.l} lambda={model.mixture.lam:.4g} eta={model.eta:.4g} -> {args.model}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_model(args.model)
    names, X = load_inputs_csv(args.test, model.d, drop=args.target)
    pred = predict_batch(model, X, args.threads)
    with Path(args.out).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + ["mean", "sd_latent", "sd_noisy", "fallback_flag"])
        for i in range(X.shape[0]):
            w.writerow([repr(float(x)) for x in X[i]] + [
                repr(float(pred.mean[i])), repr(float(np.sqrt(pred.var[i]))),
                repr(float(np.sqrt(pred.noisy_var[i]))), int(pred.fallback[i])])
    print(f"{X.shape[0]} predictions -> {args.out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    if (args.function is None) == (args.train is None):
        raise DataError("give exactly one of --function or --train")
    if args.function is not None:
        if args.function not in FUNCTIONS:
            raise DataError(f"unknown function {args.function!r}; valid names: {', '.join(sorted(FUNCTIONS))}")
        preset = dict(PRESETS[args.preset])
        kw = {}
        if args.function == "gramacy1d":
            preset.update(GRAMACY_PRESET)
            kw = {"noise_sd": preset["noise_sd"], "grid": preset["grid"]}
        iterations = args.iterations or preset["iterations"]
        report = run_emulation(
            args.function, preset["n"], preset["t"], iterations, seed=args.seed,
            g=args.global_size if args.global_size is not None else preset.get("g"),
            l=args.local_size if args.local_size is not None else preset.get("l"),
            v=args.validation_size, oracle_cap=args.oracle_cap, n_jobs=args.threads, **kw)
    else:
        report = run_realdata(args.train, args.target, 0.1, args.iterations or PRESETS[args.preset]["iterations"],
                              args.seed, args.global_size, args.local_size, args.validation_size,
                              oracle_cap=args.oracle_cap, n_jobs=args.threads)
    report.config["command"] = {k: v for k, v in vars(args).items() if k != "func"}
    report.write_json(f"{args.out}.json", timings=False)
    report.write_csv(f"{args.out}.csv", timings=False)
    report.write_timings_csv(f"{args.out}_timings.csv")
    s = report.summary()
    print(f"{'iterations':>12} {'median RMSE':>14} {'median NLPD':>14} {'train s':>10} {'predict s':>10}")
    print(f"{s['iterations']:>12d} {s['median_rmse']:>14.6g} {s['median_nlpd']:>14.6g} "
          f"{s['mean_train_s']:>10.3f} {s['mean_predict_s']:>10.3f}")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "predict": cmd_predict, "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    warnings.simplefilter("default")
    try:
        return COMMANDS[args.command](args)
    except (NotPositiveDefinite, NumericalError, np.linalg.LinAlgError) as exc:
        print(f"twingp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileNotFoundError, DataError, ModelFileError, ValueError, KeyError) as exc:
        print(f"twingp: error: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
