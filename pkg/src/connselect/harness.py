"""Outer cross-validation, k sweeps and metric aggregation.

Per outer fold the test split is set aside, sample selection runs on the
training split only, RegGNN is trained on the selected subjects (in
ascending training order) and evaluated on the untouched test split.

Seeds are derived from ``(base seed, fold, k)`` with ``numpy.random.SeedSequence``
so results do not depend on execution order. Without selection the model is
trained on the whole training split, which uses the same seed as selection
with ``k`` equal to the split size.
"""

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .config import ExperimentConfig
from .data import worker_count
from .errors import ValidationError
from .reggnn import predict, rank_weights, train
from .selection import PairFeatures, kfold_indices, select_samples

log = logging.getLogger(__name__)

CSV_COLUMNS = ("method", "target", "k", "fold", "mae", "rmse", "selected_ids")
SUMMARY_COLUMNS = (
    "method", "target", "k",
    "mae_mean", "mae_std", "mae_min", "mae_max",
    "rmse_mean", "rmse_std", "rmse_min", "rmse_max",
)

_SELECT_STREAM = 1
_TRAIN_STREAM = 2


def mae(pred, true):
    pred, true = _pair(pred, true)
    return float(np.mean(np.abs(pred - true)))


def rmse(pred, true):
    pred, true = _pair(pred, true)
    return float(np.sqrt(np.mean((pred - true) ** 2)))


def _pair(pred, true):
    pred = np.asarray(pred, dtype=float)
    true = np.asarray(true, dtype=float)
    if pred.shape != true.shape or pred.ndim != 1 or pred.size == 0:
        raise ValidationError(f"length mismatch: {pred.shape} vs {true.shape}")
    return pred, true


def derive_seed(*keys):
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def summarize(values):
    v = np.asarray(values, dtype=float)
    return {"mean": float(v.mean()), "std": float(v.std()), "min": float(v.min()), "max": float(v.max())}


@dataclass
class FoldResult:
    fold: int
    k: int | None
    mae: float
    rmse: float
    selected_ids: list
    test_ids: list
    predictions: list
    fc_weights: list = field(repr=False)
    frequency: dict | None = field(default=None, repr=False)


@dataclass
class MetricsReport:
    method: str
    target: str
    k: int | None
    selection: bool
    folds: list
    timing: dict = field(default_factory=dict)

    @property
    def mae(self):
        return summarize([f.mae for f in self.folds])

    @property
    def rmse(self):
        return summarize([f.rmse for f in self.folds])

    def to_dict(self):
        return {
            "method": self.method,
            "target": self.target,
            "k": self.k,
            "selection": self.selection,
            "mae": self.mae,
            "rmse": self.rmse,
            "folds": [asdict(f) for f in self.folds],
        }

    def csv_rows(self):
        for f in self.folds:
            yield {
                "method": self.method if self.selection else "none",
                "target": self.target,
                "k": "" if self.k is None else self.k,
                "fold": f.fold,
                "mae": repr(f.mae),
                "rmse": repr(f.rmse),
                "selected_ids": " ".join(f.selected_ids),
            }


def _run_fold(dataset, cfg, k, fold, train_idx, test_idx, features=None):
    timing = {}
    target = cfg.target
    train_set = dataset.subset(train_idx)
    frequency = None
    t0 = time.perf_counter()
    if not cfg.selection or k >= len(train_idx):
        chosen = list(range(len(train_idx)))
        k_eff = len(train_idx)
    else:
        sel_cfg = cfg.selection_config(k, derive_seed(cfg.seed, fold, _SELECT_STREAM))
        result = select_samples(train_set.subjects, sel_cfg, features=features)
        chosen = sorted(result.selected)
        frequency = {train_set[i].id: int(c) for i, c in enumerate(result.counts)}
        k_eff = k
    timing["select"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    tcfg = replace(cfg.train, seed=derive_seed(cfg.seed, fold, k_eff, _TRAIN_STREAM))
    model = train([(train_set[i].connectome, train_set[i].score(target)) for i in chosen], tcfg)
    timing["train"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    test = dataset.subset(test_idx)
    pred = np.array([predict(model, s.connectome) for s in test.subjects])
    true = test.scores(target)
    timing["evaluate"] = time.perf_counter() - t0
    res = FoldResult(
        fold=fold,
        k=k if cfg.selection else None,
        mae=mae(pred, true),
        rmse=rmse(pred, true),
        selected_ids=[train_set[i].id for i in chosen],
        test_ids=test.ids,
        predictions=pred.tolist(),
        fc_weights=model.fc.tolist(),
        frequency=frequency,
    )
    return res, timing


def outer_folds(dataset, cfg):
    n = len(dataset)
    if n < 2 * cfg.outer_folds:
        raise ValidationError(f"need at least {2 * cfg.outer_folds} subjects, got {n}")
    folds = kfold_indices(n, cfg.outer_folds, cfg.seed)
    return [(np.setdiff1d(np.arange(n), test), test) for test in folds]


def _fold_features(dataset, cfg, splits):
    # one feature cache per training split, shared by every k of a sweep
    if not cfg.selection:
        return [None] * len(splits)
    return [
        PairFeatures([dataset[i].connectome for i in tr], cfg.method, cfg.train.mu)
        for tr, _ in splits
    ]


def _run_cells(dataset, cfg, k_values):
    splits = outer_folds(dataset, cfg)
    features = _fold_features(dataset, cfg, splits)
    cells = [(k, f) for k in k_values for f in range(len(splits))]

    def run(cell):
        k, f = cell
        tr, te = splits[f]
        return _run_fold(dataset, cfg, k, f, tr, te, features[f])

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        results = dict(zip(cells, pool.map(run, cells)))
    reports = []
    for k in k_values:
        folds = [results[(k, f)][0] for f in range(len(splits))]
        timing = {}
        for f in range(len(splits)):
            for stage, t in results[(k, f)][1].items():
                timing[stage] = timing.get(stage, 0.0) + t
        reports.append(
            MetricsReport(cfg.method, cfg.target, k if cfg.selection else None, cfg.selection, folds, timing)
        )
    return reports


def run_experiment(dataset, cfg=ExperimentConfig(), k=None):
    """Outer-CV evaluation for one ``k`` (default: the first of ``cfg.k_values``)."""
    k = cfg.k_values[0] if k is None else k
    return _run_cells(dataset, cfg, [k])[0]


@dataclass
class SweepReport:
    reports: list

    @property
    def k_values(self):
        return [r.k for r in self.reports]

    def summary(self):
        """Statistics over the per-k mean MAE / RMSE."""
        return {
            "mae": summarize([r.mae["mean"] for r in self.reports]),
            "rmse": summarize([r.rmse["mean"] for r in self.reports]),
        }

    def to_dict(self):
        return {"summary": self.summary(), "per_k": [r.to_dict() for r in self.reports]}

    def summary_rows(self):
        for r in self.reports:
            row = {"method": r.method, "target": r.target, "k": r.k}
            for name, stats in (("mae", r.mae), ("rmse", r.rmse)):
                for stat, value in stats.items():
                    row[f"{name}_{stat}"] = repr(value)
            yield row


def k_sweep(dataset, cfg=ExperimentConfig(), k_values=None):
    """Run the outer CV for every ``k``; folds and feature caches are shared."""
    k_values = list(cfg.k_values if k_values is None else k_values)
    if not k_values:
        raise ValidationError("empty k range")
    return SweepReport(_run_cells(dataset, cfg, k_values))


def average_roi_importance(weight_vectors, top_m=3, roi_names=None):
    """Average final-layer weight vectors and rank ROIs by magnitude.

    Returns ``(index, name, mean_weight)`` tuples; ties go to the lower index.
    """
    W = [np.asarray(w, dtype=float) for w in weight_vectors]
    if not W:
        raise ValidationError("no weight vectors to average")
    if len({w.shape for w in W}) != 1:
        raise ValidationError("weight vectors differ in dimension")
    mean = np.mean(W, axis=0)
    ranked = rank_weights(mean, min(top_m, len(mean)))
    names = roi_names or []
    return [(i, names[i] if i < len(names) else str(i), w) for i, w in ranked]


def write_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
