"""Command line interface: ``connselect <subcommand> [flags]``.

Exit codes: 0 success, 1 validation or usage error, 2 numerical failure.
"""

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import harness
from .config import (
    TARGETS, ExperimentConfig, SelectionConfig, SynthSpec, TrainConfig, from_kv, read_kv_file,
)
from .data import generate_synthetic, load_dataset, write_dataset
from .errors import NumericalError, ValidationError
from .features import METHODS
from .reggnn import extract_roi_importance, load_model, save_model, train
from .selection import select_samples
from .spd import CLAMP_MODES

log = logging.getLogger("connselect")

COMMANDS = ("synth", "select", "train", "evaluate", "sweep", "explain")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _k_range(text):
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(p) for p in text.replace(",", " ").split())


def _common(p, data=True):
    d_train, d_exp, d_sel = TrainConfig(), ExperimentConfig(), SelectionConfig()
    if data:
        p.add_argument("--data-dir", required=True, help="dataset directory")
    p.add_argument("--config", help="key=value file with defaults for these flags")
    p.add_argument("--target", choices=TARGETS, default=d_sel.target)
    p.add_argument("--method", choices=METHODS, default=d_sel.method)
    p.add_argument("--k", type=int, default=d_sel.k)
    p.add_argument("--folds", type=int, default=d_exp.outer_folds, help="outer CV folds")
    p.add_argument("--inner-folds", type=int, default=d_sel.inner_folds, help="selection folds N")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=d_train.epochs)
    p.add_argument("--lr", type=float, default=d_train.lr)
    p.add_argument("--weight-decay", type=float, default=d_train.weight_decay)
    p.add_argument("--dropout", type=float, default=d_train.dropout)
    p.add_argument("--hidden", type=int, default=d_train.hidden)
    p.add_argument("--mu", type=float, default=d_train.mu)
    p.add_argument("--clamp", choices=CLAMP_MODES, default=d_train.clamp)
    p.add_argument("--ridge", type=float, default=0.0)
    p.add_argument("--no-selection", action="store_true")
    p.add_argument("--output", help="output file or directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = _Parser(prog="connselect", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="write a synthetic dataset directory")
    p.add_argument("--spec", help="key=value SynthSpec file")
    p.add_argument("--output", required=True, help="dataset directory to create")
    p.add_argument("--seed", type=int, help="overrides the spec seed")
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("select", help="run sample selection on the whole dataset")
    _common(p)
    p = sub.add_parser("train", help="train RegGNN on the dataset and save a checkpoint")
    _common(p)
    p = sub.add_parser("evaluate", help="outer-CV evaluation at a single k")
    _common(p)
    p = sub.add_parser("sweep", help="outer-CV evaluation over a range of k")
    _common(p)
    p.add_argument("--k-range", type=_k_range, default=ExperimentConfig().k_values, help="e.g. 2..15")
    p = sub.add_parser("explain", help="rank ROIs by final-layer weights")
    _common(p, data=False)
    p.add_argument("--data-dir", help="dataset directory (runs a sweep and averages its models)")
    p.add_argument("--model", nargs="+", help="checkpoint files to average instead of training")
    p.add_argument("--k-range", type=_k_range, default=ExperimentConfig().k_values)
    p.add_argument("--top", type=int, default=3)
    return parser


def _apply_config_file(parser, argv, args):
    """Re-parse with defaults taken from ``--config``; explicit flags still win."""
    if not getattr(args, "config", None):
        return args
    values = read_kv_file(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        if key not in known:
            raise ValidationError(f"{args.config}: unknown key {key!r}")
        action = next(a for a in sub._actions if a.dest == key)
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            defaults[key] = action.type(raw)
        else:
            defaults[key] = raw
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _train_config(args):
    return TrainConfig(
        epochs=args.epochs, lr=args.lr, weight_decay=args.weight_decay, dropout=args.dropout,
        hidden=args.hidden, mu=args.mu, clamp=args.clamp, seed=args.seed,
    )


def _experiment_config(args, k_values):
    return ExperimentConfig(
        outer_folds=args.folds, inner_folds=args.inner_folds, k_values=tuple(k_values),
        method=args.method, target=args.target, seed=args.seed,
        selection=not args.no_selection, ridge=args.ridge, train=_train_config(args),
    )


def _selection_config(args):
    return SelectionConfig(
        k=args.k, inner_folds=args.inner_folds, method=args.method, target=args.target,
        seed=args.seed, ridge=args.ridge, mu=args.mu,
    )


def _out_dir(args, default):
    out = Path(args.output or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args):
    spec = from_kv(SynthSpec, read_kv_file(args.spec)) if args.spec else SynthSpec()
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    ds = generate_synthetic(spec)
    write_dataset(ds, args.output)
    print(f"wrote {len(ds)} subjects (d={ds.dim}) to {args.output}")


def cmd_select(args):
    ds = load_dataset(args.data_dir)
    result = select_samples(ds.subjects, _selection_config(args))
    doc = {
        "selected_ids": [ds[i].id for i in result.selected],
        "frequency": {ds[i].id: int(c) for i, c in enumerate(result.counts)},
        "fold_r2": result.fold_r2,
    }
    for sid in doc["selected_ids"]:
        print(sid)
    if args.output:
        harness.write_json(args.output, doc)


def cmd_train(args):
    ds = load_dataset(args.data_dir)
    subjects = ds.subjects
    if not args.no_selection:
        result = select_samples(subjects, _selection_config(args))
        subjects = [subjects[i] for i in sorted(result.selected)]
    model = train([(s.connectome, s.score(args.target)) for s in subjects], _train_config(args))
    out = args.output or "model.json"
    save_model(model, out)
    print(f"trained on {len(subjects)} subjects; checkpoint written to {out}")


def _write_timing(out, timing):
    harness.write_json(out / "timing.json", timing)


def cmd_evaluate(args):
    ds = load_dataset(args.data_dir)
    cfg = _experiment_config(args, [args.k])
    report = harness.run_experiment(ds, cfg)
    out = _out_dir(args, "evaluate-out")
    harness.write_json(out / "report.json", report.to_dict())
    harness.write_csv(out / "folds.csv", report.csv_rows(), harness.CSV_COLUMNS)
    _write_timing(out, report.timing)
    print(f"MAE {report.mae['mean']:.3f} +- {report.mae['std']:.3f}  "
          f"RMSE {report.rmse['mean']:.3f} +- {report.rmse['std']:.3f}")


def cmd_sweep(args):
    ds = load_dataset(args.data_dir)
    cfg = _experiment_config(args, args.k_range)
    sweep = harness.k_sweep(ds, cfg)
    out = _out_dir(args, "sweep-out")
    harness.write_json(out / "report.json", sweep.to_dict())
    harness.write_csv(out / "sweep.csv", sweep.summary_rows(), harness.SUMMARY_COLUMNS)
    rows = (row for r in sweep.reports for row in r.csv_rows())
    harness.write_csv(out / "folds.csv", rows, harness.CSV_COLUMNS)
    _write_timing(out, {str(r.k): r.timing for r in sweep.reports})
    s = sweep.summary()
    print(f"MAE {s['mae']['mean']:.3f} +- {s['mae']['std']:.3f} ({s['mae']['min']:.3f}, {s['mae']['max']:.3f})")
    print(f"RMSE {s['rmse']['mean']:.3f} +- {s['rmse']['std']:.3f} ({s['rmse']['min']:.3f}, {s['rmse']['max']:.3f})")


def cmd_explain(args):
    roi_names = None
    if args.model:
        weights = [load_model(p).fc for p in args.model]
        if args.data_dir:
            roi_names = load_dataset(args.data_dir).roi_names
    elif args.data_dir:
        ds = load_dataset(args.data_dir)
        roi_names = ds.roi_names
        if args.no_selection:
            reports = [harness.run_experiment(ds, _experiment_config(args, [args.k]))]
        else:
            reports = harness.k_sweep(ds, _experiment_config(args, args.k_range)).reports
        weights = [f.fc_weights for r in reports for f in r.folds]
    else:
        raise ValidationError("explain needs --data-dir or --model")
    ranked = harness.average_roi_importance(weights, args.top, roi_names)
    lines = ["rank,index,name,weight"]
    lines += [f"{r},{i},{name},{w!r}" for r, (i, name, w) in enumerate(ranked, 1)]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.output:
        Path(args.output).write_text(text)


HANDLERS = {
    "synth": cmd_synth, "select": cmd_select, "train": cmd_train,
    "evaluate": cmd_evaluate, "sweep": cmd_sweep, "explain": cmd_explain,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _apply_config_file(parser, argv, args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    t0 = time.perf_counter()
    try:
        HANDLERS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    log.info("%s finished in %.1fs", args.command, time.perf_counter() - t0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
