"""Check whether final-layer weights point at the planted ROI subnetwork."""

import argparse

from connselect import ExperimentConfig, SynthSpec, generate_synthetic, k_sweep
from connselect.harness import average_roi_importance


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=60)
    ap.add_argument("--d", type=int, default=16)
    ap.add_argument("--top", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    ds = generate_synthetic(SynthSpec(n=args.n, d=args.d, seed=args.seed))
    sweep = k_sweep(ds, ExperimentConfig(seed=args.seed))
    weights = [f.fc_weights for r in sweep.reports for f in r.folds]
    ranked = average_roi_importance(weights, args.top)
    planted = set(ds.truth["planted_rois"])
    hits = sum(i in planted for i, _, _ in ranked)
    print(f"planted ROIs: {sorted(planted)}")
    for rank, (i, name, w) in enumerate(ranked, 1):
        print(f"{rank}. ROI {name:>3s}  weight {w:+.4f}{'  (planted)' if i in planted else ''}")
    print(f"{hits}/{len(ranked)} of the top ROIs are planted")


if __name__ == "__main__":
    main()
