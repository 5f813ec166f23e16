"""Sweep k on a synthetic cohort and compare against training without selection.

    python3 scripts/run_synthetic_sweep.py --n 60 --d 16 --epochs 100 --out sweep-results
"""

import argparse
from dataclasses import replace
from pathlib import Path

import numpy as np

from connselect import ExperimentConfig, SynthSpec, TrainConfig, generate_synthetic, k_sweep, mae
from connselect.harness import CSV_COLUMNS, SUMMARY_COLUMNS, outer_folds, write_csv, write_json


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=60)
    ap.add_argument("--d", type=int, default=16)
    ap.add_argument("--noise", type=float, default=0.05)
    ap.add_argument("--outliers", type=int, default=0)
    ap.add_argument("--method", default="g")
    ap.add_argument("--k-min", type=int, default=2)
    ap.add_argument("--k-max", type=int, default=15)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    ds = generate_synthetic(SynthSpec(n=args.n, d=args.d, noise=args.noise,
                                      outliers=args.outliers, seed=args.seed))
    cfg = ExperimentConfig(
        k_values=tuple(range(args.k_min, args.k_max + 1)), method=args.method, seed=args.seed,
        train=TrainConfig(epochs=args.epochs),
    )
    scores = ds.scores(cfg.target)
    baseline = np.mean([
        mae(np.full(len(te), scores[tr].mean()), scores[te]) for tr, te in outer_folds(ds, cfg)
    ])
    sweep = k_sweep(ds, cfg)
    full = k_sweep(ds, replace(cfg, selection=False), k_values=[cfg.k_values[0]]).reports[0]

    print(f"mean predictor      MAE {baseline:7.3f}")
    print(f"no selection        MAE {full.mae['mean']:7.3f} +- {full.mae['std']:.3f}")
    for r in sweep.reports:
        print(f"k={r.k:<3d} ({args.method:>3s})       MAE {r.mae['mean']:7.3f} +- {r.mae['std']:.3f}")
    s = sweep.summary()["mae"]
    print(f"across k            MAE {s['mean']:7.3f} +- {s['std']:.3f} ({s['min']:.3f}, {s['max']:.3f})")

    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        write_json(args.out / "report.json", {"sweep": sweep.to_dict(), "no_selection": full.to_dict(),
                                              "mean_predictor_mae": baseline})
        write_csv(args.out / "sweep.csv", sweep.summary_rows(), SUMMARY_COLUMNS)
        write_csv(args.out / "folds.csv", (row for r in sweep.reports for row in r.csv_rows()), CSV_COLUMNS)


if __name__ == "__main__":
    main()
