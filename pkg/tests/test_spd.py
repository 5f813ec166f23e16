import numpy as np
import pytest
from hypothesis import given, strategies as st

from connselect.errors import NumericalError, ValidationError
from connselect.spd import (
    LogCache, clamp_negative, expm, geodesic_point, le_distance, logm, regularize,
    tangent_at_identity,
)
from oracles import random_spd

E = np.e


def spd_strategy(d):
    return st.integers(0, 2**32 - 1).map(lambda s: random_spd(np.random.default_rng(s), d, -3, 2))


# regularize

def test_regularize_identity():
    np.testing.assert_array_equal(regularize(np.eye(2), 1e-10), (1 + 1e-10) * np.eye(2))


def test_regularize_rank_one_is_positive_definite():
    P = regularize(np.ones((2, 2)), 1e-10)
    w = np.linalg.eigvalsh(P)
    np.testing.assert_allclose(w, [1e-10, 2 + 1e-10], rtol=0, atol=1e-15)
    assert np.all(w > 0)


@pytest.mark.parametrize("mu", [0.0, -1e-3])
def test_regularize_rejects_nonpositive_mu(mu):
    with pytest.raises(ValidationError):
        regularize(np.eye(3), mu)


def test_regularize_rejects_asymmetric():
    with pytest.raises(ValidationError):
        regularize(np.array([[1.0, 0.5], [0.2, 1.0]]))


@given(st.integers(0, 2**32 - 1), st.sampled_from([1e-10, 1e-6, 1e-2]))
def test_regularize_min_eigenvalue_at_least_mu(seed, mu):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((6, 3))
    C = X @ X.T  # PSD with rank 3
    lam = np.linalg.eigvalsh(regularize(C, mu))[0]
    assert lam >= mu - 1e-15 * max(1.0, np.abs(C).max())


# logm / expm

def test_logm_identity_is_zero():
    np.testing.assert_array_equal(logm(np.eye(3)), np.zeros((3, 3)))


def test_logm_diagonal():
    np.testing.assert_allclose(logm(np.diag([E, E**2])), np.diag([1.0, 2.0]), atol=1e-14)


def test_logm_two_by_two_closed_form():
    expected = np.log(3) / 2 * np.ones((2, 2))
    np.testing.assert_allclose(logm(np.array([[2.0, 1.0], [1.0, 2.0]])), expected, atol=1e-14)


def test_logm_rejects_non_positive_definite():
    with pytest.raises(NumericalError):
        logm(np.diag([1.0, -1.0]))
    with pytest.raises(NumericalError):
        logm(np.diag([1.0, 0.0]))


def test_expm_zero_and_diagonal():
    np.testing.assert_array_equal(expm(np.zeros((3, 3))), np.eye(3))
    np.testing.assert_allclose(expm(np.diag([1.0, 2.0])), np.diag([E, E**2]), rtol=1e-14)


@pytest.mark.parametrize("d", [4, 16])
def test_expm_logm_round_trip(rng, d):
    for _ in range(10):
        P = random_spd(rng, d)
        err = np.linalg.norm(expm(logm(P)) - P) / np.linalg.norm(P)
        assert err < 1e-8


@given(spd_strategy(5))
def test_logm_symmetric(P):
    L = logm(P)
    assert np.max(np.abs(L - L.T)) <= 1e-10


# distance, tangent, geodesic

def test_distance_zero_and_closed_form():
    P = random_spd(np.random.default_rng(0), 4)
    assert le_distance(P, P) == 0.0
    assert le_distance(np.eye(2), np.diag([E, E])) == pytest.approx(np.sqrt(2), abs=1e-14)


def test_distance_dimension_mismatch():
    with pytest.raises(ValidationError):
        le_distance(np.eye(2), np.eye(3))


@given(spd_strategy(4), spd_strategy(4), spd_strategy(4))
def test_distance_metric_axioms(P, Q, R):
    assert le_distance(P, Q) == le_distance(Q, P)
    assert le_distance(P, R) <= le_distance(P, Q) + le_distance(Q, R) + 1e-9


def test_tangent_examples():
    P = random_spd(np.random.default_rng(1), 3)
    np.testing.assert_array_equal(tangent_at_identity(P, P), np.zeros((3, 3)))
    np.testing.assert_allclose(
        tangent_at_identity(np.eye(2), np.diag([E, E**2])), np.diag([1.0, 2.0]), atol=1e-14
    )


@given(spd_strategy(5), spd_strategy(5))
def test_tangent_norm_is_distance_and_antisymmetric(P, Q):
    S = tangent_at_identity(P, Q)
    assert np.linalg.norm(S) == pytest.approx(le_distance(P, Q), rel=1e-12)
    assert np.max(np.abs(S + tangent_at_identity(Q, P))) <= 1e-12


def test_geodesic_endpoints_and_midpoint():
    rng = np.random.default_rng(2)
    P, Q = random_spd(rng, 3), random_spd(rng, 3)
    np.testing.assert_array_equal(geodesic_point(P, Q, 0.0), 0.5 * (P + P.T))
    np.testing.assert_array_equal(geodesic_point(P, Q, 1.0), 0.5 * (Q + Q.T))
    mid = geodesic_point(np.eye(2), np.diag([E**2, E**2]), 0.5)
    np.testing.assert_allclose(mid, np.diag([E, E]), rtol=1e-14)


@pytest.mark.parametrize("t", [-0.1, 1.5])
def test_geodesic_rejects_t_outside_unit_interval(t):
    with pytest.raises(ValidationError):
        geodesic_point(np.eye(2), np.eye(2), t)


@given(spd_strategy(4), spd_strategy(4), st.floats(0.0, 1.0))
def test_geodesic_homogeneity_and_reversal(P, Q, t):
    G = geodesic_point(P, Q, t)
    assert le_distance(P, G) == pytest.approx(t * le_distance(P, Q), abs=1e-8)
    np.testing.assert_allclose(G, geodesic_point(Q, P, 1.0 - t), atol=1e-9 * max(1, np.abs(G).max()))


# clamp_negative

def test_clamp_entries_noop_on_nonnegative():
    C = np.array([[1.0, 0.3], [0.3, 1.0]])
    np.testing.assert_array_equal(clamp_negative(C), C)


def test_clamp_entries_zeroes_negative_correlations():
    C = np.array([[1.0, -0.5], [-0.5, 1.0]])
    np.testing.assert_array_equal(clamp_negative(C, "entries"), np.eye(2))


def test_clamp_eigenvalues_keeps_positive_spectrum():
    C = np.array([[1.0, -0.5], [-0.5, 1.0]])
    np.testing.assert_allclose(clamp_negative(C, "eigenvalues"), C, atol=1e-15)


def test_clamp_eigenvalues_removes_negative_part():
    C = np.array([[0.0, 1.0], [1.0, 0.0]])  # eigenvalues +1, -1
    out = clamp_negative(C, "eigenvalues")
    np.testing.assert_allclose(out, 0.5 * np.ones((2, 2)), atol=1e-15)
    assert np.linalg.eigvalsh(out)[0] >= -1e-15


def test_clamp_unknown_mode():
    with pytest.raises(ValidationError):
        clamp_negative(np.eye(2), "rows")


def test_log_cache_matches_direct_computation(rng):
    Cs = [random_spd(rng, 4, -1, 0.5) for _ in range(3)]
    cache = LogCache(Cs, mu=1e-10)
    for i in range(3):
        for j in range(3):
            P, Q = regularize(Cs[i]), regularize(Cs[j])
            np.testing.assert_array_equal(cache.tangent(i, j), tangent_at_identity(P, Q))
            assert cache.distance(i, j) == le_distance(P, Q)
