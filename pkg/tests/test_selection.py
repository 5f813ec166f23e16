import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from connselect.config import SelectionConfig, SynthSpec
from connselect.data import Subject, generate_synthetic
from connselect.errors import ValidationError
from connselect.selection import (
    build_in_group_design, fit_linear, kfold_indices, rank_by_counts, score_holdout,
    select_samples,
)
from connselect.spd import le_distance, regularize
from oracles import random_spd, selection_oracle


def planted_cohort(n=30, d=8, seed=0):
    spec = SynthSpec(n=n, d=d, clusters=3, noise=0.0, normalize=False, seed=seed)
    return generate_synthetic(spec).subjects


def random_cohort(rng, n, d=4):
    return [
        Subject(f"s{i}", random_spd(rng, d, -1, 0.3), float(rng.normal(100, 15)), 0.0)
        for i in range(n)
    ]


# kfold_indices

def test_kfold_even_and_uneven():
    assert [len(f) for f in kfold_indices(6, 3, 0)] == [2, 2, 2]
    assert [len(f) for f in kfold_indices(7, 3, 0)] == [3, 2, 2]


def test_kfold_rejects_bad_counts():
    with pytest.raises(ValidationError):
        kfold_indices(3, 4)
    with pytest.raises(ValidationError):
        kfold_indices(5, 1)


@given(st.integers(2, 60), st.integers(2, 10), st.integers(0, 1000))
def test_kfold_partition(n, n_folds, seed):
    if n_folds > n:
        return
    folds = kfold_indices(n, n_folds, seed)
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1
    assert sorted(np.concatenate(folds).tolist()) == list(range(n))
    again = kfold_indices(n, n_folds, seed)
    assert all(np.array_equal(a, b) for a, b in zip(folds, again))


# fit_linear

def test_fit_line_through_origin():
    m = fit_linear(np.array([[1.0], [2.0], [3.0]]), np.array([2.0, 4.0, 6.0]))
    np.testing.assert_allclose(m.weights, [2.0], atol=1e-12)
    assert m.intercept == pytest.approx(0.0, abs=1e-12)


def test_fit_constant_target(rng):
    X = rng.standard_normal((20, 3))
    m = fit_linear(X, np.full(20, 7.5))
    np.testing.assert_allclose(m.weights, 0.0, atol=1e-12)
    assert m.intercept == pytest.approx(7.5)


def test_fit_minimizes_residual(rng):
    X = rng.standard_normal((40, 3))
    y = X @ [1.0, -2.0, 0.5] + 0.3 * rng.standard_normal(40)
    m = fit_linear(X, y)
    base = np.sum((m.predict(X) - y) ** 2)
    for idx in range(3):
        for delta in (-0.01, 0.01):
            w = m.weights.copy()
            w[idx] += delta
            assert np.sum((X @ w + m.intercept - y) ** 2) >= base


def test_fit_singular_falls_back_with_warning():
    X = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])  # collinear columns
    with pytest.warns(RuntimeWarning, match="singular"):
        m = fit_linear(X, np.array([1.0, 2.0, 3.0]))
    assert m.ridge == 1e-8
    np.testing.assert_allclose(m.predict(X), [1.0, 2.0, 3.0], atol=1e-6)


def test_fit_wide_design_uses_fallback(rng):
    X = rng.standard_normal((5, 12))
    y = rng.standard_normal(5)
    with pytest.warns(RuntimeWarning):
        m = fit_linear(X, y)
    np.testing.assert_allclose(m.predict(X), y, atol=1e-5)


def test_fit_ridge_wide_matches_primal(rng):
    X = rng.standard_normal((6, 9))
    y = rng.standard_normal(6)
    m = fit_linear(X, y, ridge=0.5)
    Xc, yc = X - X.mean(0), y - y.mean()
    w = np.linalg.solve(Xc.T @ Xc + 0.5 * np.eye(9), Xc.T @ yc)
    np.testing.assert_allclose(m.weights, w, atol=1e-10)


def test_fit_rejects_non_finite():
    with pytest.raises(ValidationError):
        fit_linear(np.array([[np.nan]]), np.array([1.0]))


# design and holdout scoring

def test_in_group_design_shape_and_g_rows(rng):
    subs = random_cohort(rng, 5)
    X, y, pairs = build_in_group_design(subs, "g", "fiq")
    assert X.shape == (10, 1) and len(pairs) == 10
    assert all(i < j for i, j in pairs)
    for row, (i, j) in zip(X, pairs):
        expected = le_distance(regularize(subs[i].connectome), regularize(subs[j].connectome))
        assert row[0] == pytest.approx(expected, rel=1e-12)
        assert y[pairs.index((i, j))] == abs(subs[j].fiq - subs[i].fiq)


def test_in_group_design_equal_scores_gives_zero(rng):
    subs = random_cohort(rng, 2)
    subs[1].fiq = subs[0].fiq
    _, y, _ = build_in_group_design(subs, "a", "fiq")
    assert y.tolist() == [0.0]


def test_score_holdout_all_selected(rng):
    subs = random_cohort(rng, 7)
    X, y, _ = build_in_group_design(subs[:5], "g", "fiq")
    m = fit_linear(X, y)
    counts = score_holdout(m, subs[:5], subs[5:], "g", "fiq", k=5)
    assert counts.tolist() == [2] * 5


def test_score_holdout_perfect_model_finds_nearest_scores():
    subs = planted_cohort()
    train_in, holdout = subs[:24], subs[24:]
    X, y, _ = build_in_group_design(train_in, "g", "fiq")
    m = fit_linear(X, y)
    assert m.r_squared(X, y) >= 0.999
    counts = score_holdout(m, train_in, holdout, "g", "fiq", k=4)
    expected = np.zeros(24, dtype=int)
    for h in holdout:
        near = sorted(range(24), key=lambda j: (abs(train_in[j].fiq - h.fiq), j))[:4]
        expected[near] += 1
    np.testing.assert_array_equal(counts, expected)
    assert counts.sum() == 6 * 4


def test_score_holdout_rejects_large_k(rng):
    subs = random_cohort(rng, 4)
    m = fit_linear(np.array([[0.0], [1.0]]), np.array([0.0, 1.0]))
    with pytest.raises(ValidationError):
        score_holdout(m, subs[:2], subs[2:], "g", "fiq", k=3)


# select_samples

def test_rank_by_counts_ties():
    assert rank_by_counts([1, 3, 3, 0, 1], 3) == [1, 2, 0]


def test_identical_subjects_select_lowest_indices(quiet):
    C = np.eye(4) * 0.5 + 0.5
    subs = [Subject(f"s{i}", C.copy(), 100.0, 100.0) for i in range(10)]
    res = select_samples(subs, SelectionConfig(k=3, inner_folds=5, method="g"))
    assert res.selected == [0, 1, 2]


def test_selection_matches_oracle_on_planted_cohort():
    subs = planted_cohort()
    cfg = SelectionConfig(k=5, inner_folds=5, method="g")
    res = select_samples(subs, cfg)
    selected, counts = selection_oracle([s.fiq for s in subs], res.folds, 5)
    assert res.selected == selected
    assert res.frequency_map() == dict(enumerate(counts))
    assert min(res.fold_r2) >= 0.999


@pytest.mark.parametrize("n_folds", [3, 5])
@pytest.mark.parametrize("k", [2, 5, 10])
def test_counting_invariant(n_folds, k):
    subs = planted_cohort(n=32, seed=3)
    res = select_samples(subs, SelectionConfig(k=k, inner_folds=n_folds, method="g"))
    assert res.counts.sum() == sum(len(f) * k for f in res.folds)


def test_select_count_knob():
    subs = planted_cohort()
    res = select_samples(subs, SelectionConfig(k=4, select_count=9, method="g"))
    assert len(res.selected) == 9


def test_select_rejects_k_above_train_in(rng):
    subs = random_cohort(rng, 10)
    with pytest.raises(ValidationError):
        select_samples(subs, SelectionConfig(k=9, inner_folds=5))
    with pytest.raises(ValidationError):
        select_samples([], SelectionConfig(k=1))


@pytest.mark.parametrize("method", ["a", "g", "dc"])
def test_selection_deterministic(rng, method):
    subs = random_cohort(rng, 12)
    cfg = SelectionConfig(k=3, inner_folds=3, method=method, seed=7)
    a, b = select_samples(subs, cfg), select_samples(subs, cfg)
    assert a.selected == b.selected
    assert a.frequency_map() == b.frequency_map()


def test_score_shift_leaves_selection_unchanged(rng):
    subs = random_cohort(rng, 12)
    shifted = [dataclasses.replace(s, fiq=s.fiq + 37.0) for s in subs]
    cfg = SelectionConfig(k=3, inner_folds=3, method="g", seed=1)
    a, b = select_samples(subs, cfg), select_samples(shifted, cfg)
    assert a.selected == b.selected
    np.testing.assert_array_equal(a.counts, b.counts)


def test_permutation_covariance():
    subs = planted_cohort(n=24, seed=5)
    cfg = SelectionConfig(k=4, inner_folds=4, method="g", seed=2)
    base = select_samples(subs, cfg)
    perm = np.random.default_rng(9).permutation(len(subs))
    inverse = np.argsort(perm)
    permuted = [subs[p] for p in perm]
    folds = [np.sort(inverse[f]) for f in base.folds]
    res = select_samples(permuted, cfg, folds=folds)
    by_id = {subs[i].id: int(c) for i, c in enumerate(base.counts)}
    assert {permuted[i].id: int(c) for i, c in enumerate(res.counts)} == by_id
    # selected ids agree whenever the count at the cut is not shared across it
    ranked = sorted(by_id.values(), reverse=True)
    if ranked[cfg.k - 1] != ranked[cfg.k]:
        assert {permuted[i].id for i in res.selected} == {subs[i].id for i in base.selected}
