"""Command-line interface: ``calikit {synth,fit,predict,evaluate}``.

Standard output carries one JSON line per command; diagnostics go to stderr.
Exit codes: 0 ok, 1 internal error, 2 invalid input, 3 unknown method.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from typing import Optional, Sequence

import numpy as np

from . import calibrators
from .core import METHODS, CalibrationError, validate_dataset
from .flat_iso import NAFIRHyper
from .io import load_model, read_matrix_csv, save_model, write_matrix_csv
from .metrics import evaluate, reliability_table
from .synth import SynthConfig, gen_calibrated

log = logging.getLogger("calikit")

EXIT_OK, EXIT_INTERNAL, EXIT_INVALID, EXIT_METHOD = 0, 1, 2, 3
DEFAULT_METRICS = "accuracy,nll,brier,conf-ece,cw-ece,tece"


class UnknownMethod(Exception):
    pass


def _emit(obj: dict) -> None:
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def _load_dataset(path: str, logits_path: Optional[str], label: str = "required"):
    probs, labels = read_matrix_csv(path, "p", label)
    logits = None
    if logits_path:
        logits, _ = read_matrix_csv(logits_path, "z", "optional")
    if labels is None:
        return validate_dataset(probs, np.zeros(len(probs), dtype=np.int64), logits), None
    return validate_dataset(probs, labels, logits), labels


def cmd_synth(args) -> int:
    cfg = SynthConfig(m=args.m, k=args.k, distortion_T=args.temperature, seed=args.seed,
                      dirichlet_alpha=[args.alpha] * args.k)
    ds = gen_calibrated(cfg)
    write_matrix_csv(args.output, ds.probs, ds.labels)
    if args.logits_out:
        write_matrix_csv(args.logits_out, ds.logits, prefix="z")
    _emit({"m": ds.m, "k": ds.k, "distortion_T": args.temperature, "seed": args.seed})
    return EXIT_OK


def cmd_fit(args) -> int:
    if args.method not in METHODS:
        raise UnknownMethod(args.method)
    ds, _ = _load_dataset(args.input, args.logits)
    hyper = NAFIRHyper(eps_change=args.eps_change, beta=args.beta,
                       num_iterations=args.iters, early_stop_patience=args.patience,
                       min_blocks=args.min_blocks, split_size_threshold=args.split_threshold)
    cal = calibrators.fit(args.method, ds, seed=args.seed, nafir=hyper, scir_eps=args.scir_eps)
    save_model(cal, args.output)
    pred = calibrators.predict(cal, ds.probs, ds.logits)
    train = evaluate(pred, ds.labels, ("nll",))
    _emit({"method": args.method, "k": ds.k, "m": ds.m,
           "fit_seconds": cal.metadata["fit_seconds"], "train_nll": train["nll"]})
    return EXIT_OK


def cmd_predict(args) -> int:
    cal = load_model(args.model)
    ds, _ = _load_dataset(args.input, args.logits, label="optional")
    pred = calibrators.predict(cal, ds.probs, ds.logits)
    write_matrix_csv(args.output, pred)
    _emit({"method": cal.tag, "rows": int(pred.shape[0]), "output": args.output})
    return EXIT_OK


def cmd_evaluate(args) -> int:
    ds, labels = _load_dataset(args.input, args.logits)
    probs = ds.probs
    if args.model:
        cal = load_model(args.model)
        probs = calibrators.predict(cal, ds.probs, ds.logits)
    names = [n.strip() for n in args.metrics.split(",") if n.strip()]
    out = evaluate(probs, labels, names, n_bins=args.bins, pvalue_B=args.resamples,
                   seed=args.seed)
    if args.reliability_out:
        with open(args.reliability_out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lower", "upper", "mean_conf", "accuracy", "count"])
            for r in reliability_table(probs, labels, args.bins):
                w.writerow([repr(r.lower), repr(r.upper),
                            "" if r.mean_confidence is None else repr(r.mean_confidence),
                            "" if r.accuracy is None else repr(r.accuracy), r.count])
    _emit(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="calikit", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic (mis)calibrated dataset")
    s.add_argument("output")
    s.add_argument("--m", type=int, default=5000)
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--temperature", type=float, default=1.0,
                   help="distortion temperature; <1 makes the predictor overconfident")
    s.add_argument("--alpha", type=float, default=1.0, help="symmetric Dirichlet concentration")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--logits-out")
    s.set_defaults(func=cmd_synth)

    f = sub.add_parser("fit", help="fit a calibrator and save it as JSON")
    f.add_argument("--method", required=True, help="|".join(METHODS))
    f.add_argument("input")
    f.add_argument("output")
    f.add_argument("--logits")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--eps-change", type=float, default=1e-3)
    f.add_argument("--beta", type=float, default=200.0)
    f.add_argument("--iters", type=int, default=100_000)
    f.add_argument("--patience", type=int, default=10_000)
    f.add_argument("--min-blocks", type=int, default=0)
    f.add_argument("--split-threshold", type=int, default=0)
    f.add_argument("--scir-eps", type=float, default=1e-6)
    f.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="apply a saved calibrator")
    p.add_argument("model")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--logits")
    p.set_defaults(func=cmd_predict)

    e = sub.add_parser("evaluate", help="print calibration metrics as JSON")
    e.add_argument("input")
    e.add_argument("--model")
    e.add_argument("--logits")
    e.add_argument("--bins", type=int, default=15)
    e.add_argument("--metrics", default=DEFAULT_METRICS,
                   help="comma list of accuracy,nll,brier,conf-ece,cw-ece,tece,pvalue")
    e.add_argument("--reliability-out")
    e.add_argument("--resamples", type=int, default=1000)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_evaluate)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UnknownMethod as exc:
        print(f"error: unknown method {exc}; choose from {', '.join(METHODS)}", file=sys.stderr)
        return EXIT_METHOD
    except CalibrationError as exc:
        where = f" at line {exc.row + 2}" if exc.row is not None else ""
        print(f"error: {exc.rule}{where}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error: %s", exc)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
