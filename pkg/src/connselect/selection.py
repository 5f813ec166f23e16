"""Learning-based sample selection over Log-Euclidean pairwise features.

The training set is split into ``N`` folds. Each fold in turn is the
holdout group and the rest the train-in group. A linear map from pairwise
features to absolute score differences is fitted on all train-in pairs,
then used to predict, for every holdout sample, its score difference to each
train-in sample. The ``k`` train-in samples with the smallest predictions
get one count each. After all folds, the ``k`` samples with the largest
counts are selected. Ties are always broken by ascending training index.
"""

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.linalg

from .config import SelectionConfig
from .data import worker_count
from .errors import NumericalError, ValidationError
from .features import CENTRALITY_METHODS, pair_feature
from .spd import DEFAULT_MU, LogCache

log = logging.getLogger(__name__)

SINGULAR_FALLBACK_RIDGE = 1e-8


def kfold_indices(n, n_folds, seed=0):
    """Split ``range(n)`` into ``n_folds`` disjoint, sorted folds.

    Indices are shuffled with ``seed``; the first ``n % n_folds`` folds get
    one extra element.
    """
    if n_folds < 2:
        raise ValidationError(f"need at least 2 folds, got {n_folds}")
    if n_folds > n:
        raise ValidationError(f"cannot split {n} samples into {n_folds} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(chunk) for chunk in np.array_split(perm, n_folds)]


@dataclass
class LinearModel:
    weights: np.ndarray
    intercept: float
    ridge: float = 0.0

    def predict(self, X):
        return np.asarray(X, dtype=float) @ self.weights + self.intercept

    def r_squared(self, X, y):
        y = np.asarray(y, dtype=float)
        resid = y - self.predict(X)
        total = np.sum((y - y.mean()) ** 2)
        if total == 0:
            return 1.0 if np.allclose(resid, 0) else 0.0
        return 1.0 - float(resid @ resid) / float(total)


def _ridge_solve(Xc, yc, lam):
    """Solve the centered ridge problem; raises LinAlgError when singular."""
    n, p = Xc.shape
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        if p <= n:
            G = Xc.T @ Xc + lam * np.eye(p)
            return scipy.linalg.solve(G, Xc.T @ yc, assume_a="pos")
        # wide design (tm features): same minimizer through the n x n Gram matrix
        K = Xc @ Xc.T + lam * np.eye(n)
        return Xc.T @ scipy.linalg.solve(K, yc, assume_a="pos")


def fit_linear(X, y, ridge=0.0):
    """Least squares with unpenalized intercept and optional ridge penalty.

    Minimizes ``||X w + b - y||^2 + ridge * ||w||^2`` through the normal
    equations. A singular system at ``ridge == 0`` is retried with
    ``ridge = 1e-8`` and a warning.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0] or X.shape[0] < 1:
        raise ValidationError(f"incompatible design shapes {X.shape} and {y.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValidationError("design matrix or targets contain non-finite values")
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    yc = y - y_mean
    # rank of the centered design is at most n - 1
    singular = ridge == 0 and X.shape[1] >= X.shape[0]
    if not singular:
        try:
            w = _ridge_solve(Xc, yc, ridge)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning):
            singular = True
    if singular:
        if ridge == 0:
            warnings.warn(
                f"singular least-squares system; retrying with ridge={SINGULAR_FALLBACK_RIDGE}",
                RuntimeWarning,
                stacklevel=2,
            )
            ridge = SINGULAR_FALLBACK_RIDGE
        # a positive ridge makes the system definite; ill-conditioning is accepted
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            try:
                w = _ridge_solve(Xc, yc, ridge)
            except np.linalg.LinAlgError as exc:
                raise NumericalError(f"ridge solve failed at ridge={ridge}: {exc}") from exc
    return LinearModel(w, float(y_mean - x_mean @ w), ridge)


class PairFeatures:
    """Pairwise features over one cohort, keyed by ordered index pairs.

    Feature ``(i, j)`` describes the tangent matrix from ``i`` to ``j``. Only
    the tm method depends on orientation (it flips sign), so each unordered
    pair is computed once and centrality results are memoized.
    """

    def __init__(self, connectomes, method, mu=DEFAULT_MU):
        self.method = method
        self.cache = LogCache(connectomes, mu)
        self._memo = {}

    def _compute(self, i, j):
        c = self.cache
        return pair_feature(c.spd[i], c.spd[j], c.tangent(i, j), self.method)

    def precompute(self, pairs):
        """Fill the memo for ``pairs`` concurrently (centrality methods only)."""
        if self.method not in CENTRALITY_METHODS + ("cnu", "cns"):
            return
        todo = sorted({(min(p), max(p)) for p in pairs} - self._memo.keys())
        if not todo:
            return
        with ThreadPoolExecutor(max_workers=worker_count()) as pool:
            results = list(pool.map(lambda p: self._compute(*p), todo))
        self._memo.update(zip(todo, results))

    def __call__(self, i, j):
        lo, hi = (i, j) if i < j else (j, i)
        v = self._memo.get((lo, hi))
        if v is None:
            v = self._compute(lo, hi)
            if self.method != "tm":
                self._memo[(lo, hi)] = v
        if self.method == "tm" and i > j:
            return -v
        return v

    def rows(self, pairs):
        return np.array([self(i, j) for i, j in pairs])


def _in_group_design(feats, train_in, scores):
    pairs = list(combinations(train_in, 2))
    X = feats.rows(pairs)
    y = np.array([abs(scores[j] - scores[i]) for i, j in pairs])
    return X, y, pairs


def build_in_group_design(train_in, method, target, mu=DEFAULT_MU):
    """Design matrix over all train-in pairs ``i < j`` (by position).

    Returns ``(X, y, pairs)`` where row ``r`` is the feature of the tangent
    matrix from ``pairs[r][0]`` to ``pairs[r][1]`` and ``y[r]`` the absolute
    difference of their target scores.
    """
    if len(train_in) < 2:
        raise ValidationError("need at least two train-in subjects")
    feats = PairFeatures([s.connectome for s in train_in], method, mu)
    scores = [s.score(target) for s in train_in]
    return _in_group_design(feats, list(range(len(train_in))), scores)


def _holdout_counts(model, feats, train_in, holdout, k, n_total):
    counts = np.zeros(n_total, dtype=np.int64)
    train_in = np.asarray(train_in)
    for l in holdout:
        pred = model.predict(feats.rows([(j, l) for j in train_in]))
        # stable sort on ascending train_in keeps lower indices first on ties
        best = train_in[np.argsort(pred, kind="stable")[:k]]
        counts[best] += 1
    return counts


def score_holdout(model, train_in, holdout, method, target, k, mu=DEFAULT_MU):
    """Count, per train-in subject, how often it is among the ``k`` closest
    (by predicted score difference) train-in subjects of a holdout subject.

    Returns an integer array aligned with ``train_in``.
    """
    if not 1 <= k <= len(train_in):
        raise ValidationError(f"k={k} must lie in [1, {len(train_in)}]")
    feats = PairFeatures([s.connectome for s in train_in + holdout], method, mu)
    n_in = len(train_in)
    counts = _holdout_counts(
        model, feats, range(n_in), range(n_in, n_in + len(holdout)), k, n_in + len(holdout)
    )
    return counts[:n_in]


@dataclass
class SelectionResult:
    selected: list
    counts: np.ndarray
    folds: list
    fold_r2: list = field(default_factory=list)
    models: list = field(default_factory=list, repr=False)

    def frequency_map(self):
        return {int(i): int(c) for i, c in enumerate(self.counts)}


def rank_by_counts(counts, m):
    """Indices of the ``m`` largest counts; ties by ascending index."""
    counts = np.asarray(counts)
    order = np.lexsort((np.arange(len(counts)), -counts))
    return [int(i) for i in order[:m]]


def select_samples(subjects, config=SelectionConfig(), folds=None, features=None):
    """Run the nested-fold selection on a training set of subjects.

    ``folds`` overrides the seeded split; ``features`` reuses a
    :class:`PairFeatures` built for the same subjects and method.
    """
    n = len(subjects)
    if n == 0:
        raise ValidationError("empty training set")
    if folds is None:
        folds = kfold_indices(n, config.inner_folds, config.seed)
    folds = [np.sort(np.asarray(f, dtype=int)) for f in folds]
    smallest_in = n - max(len(f) for f in folds)
    if config.k > smallest_in:
        raise ValidationError(
            f"k={config.k} exceeds the smallest train-in group ({smallest_in} samples)"
        )
    if config.n_select > n:
        raise ValidationError(f"cannot select {config.n_select} of {n} samples")
    if features is None:
        features = PairFeatures([s.connectome for s in subjects], config.method, config.mu)
    features.precompute(combinations(range(n), 2))
    scores = [s.score(config.target) for s in subjects]

    counts = np.zeros(n, dtype=np.int64)
    r2, models = [], []
    for holdout in folds:
        train_in = np.setdiff1d(np.arange(n), holdout)
        X, y, _ = _in_group_design(features, train_in.tolist(), scores)
        model = fit_linear(X, y, config.ridge)
        r2.append(model.r_squared(X, y))
        models.append(model)
        counts += _holdout_counts(model, features, train_in, holdout, config.k, n)
    selected = rank_by_counts(counts, config.n_select)
    log.debug("selected %s (fold R^2 %s)", selected, r2)
    return SelectionResult(selected, counts, folds, r2, models)
