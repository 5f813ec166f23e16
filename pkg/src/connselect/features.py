"""Topological features of tangent matrices and connectomes.

Centralities are defined on weighted undirected graphs given as dense
adjacency matrices with nonnegative weights and an empty diagonal. Tangent
matrices carry signed entries, so pairwise features use ``|S|`` with its
diagonal zeroed as the adjacency.
"""

import warnings

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import ConvergenceError, ValidationError
from .spd import check_symmetric

METHODS = ("a", "g", "tm", "dc", "ec", "cc", "cnu", "cns")
CENTRALITY_METHODS = ("dc", "ec", "cc")

EIG_MAX_ITER = 1000
EIG_TOL = 1e-10


def feature_length(method, d):
    """Length of the feature vector produced by ``method`` for ``d`` ROIs."""
    if method in ("a", "g"):
        return 1
    if method == "tm":
        return d * (d + 1) // 2
    if method in CENTRALITY_METHODS:
        return d
    if method in ("cnu", "cns"):
        return 3 * d
    raise ValidationError(f"unknown feature method {method!r}; expected one of {METHODS}")


def _check_adjacency(A):
    A = check_symmetric(A, name="adjacency")
    if np.any(A < 0):
        raise ValidationError("adjacency has negative weights")
    if np.any(np.diag(A) != 0):
        raise ValidationError("adjacency has a nonzero diagonal (self-loops)")
    return A


def degree_centrality(A):
    """Weighted degree: the sum of edge weights incident to each node."""
    A = _check_adjacency(A)
    return A.sum(axis=1)


def eigenvector_centrality(A, max_iter=EIG_MAX_ITER, tol=EIG_TOL):
    """Unit-norm, nonnegative Perron eigenvector of ``A`` by power iteration.

    Iterates on ``A + s*I`` with ``s`` half the mean weighted degree. The shift
    leaves the eigenvectors unchanged and keeps bipartite graphs (whose
    spectrum is symmetric about 0) from oscillating.
    """
    A = _check_adjacency(A)
    n = A.shape[0]
    if not np.any(A):
        raise ValidationError("eigenvector centrality is undefined for an edgeless graph")
    shift = 0.5 * A.sum() / n
    M = A + shift * np.eye(n)
    x = np.full(n, 1.0 / np.sqrt(n))
    for it in range(1, max_iter + 1):
        y = M @ x
        y /= np.linalg.norm(y)
        if np.linalg.norm(y - x) < tol:
            return y
        x = y
    raise ConvergenceError("eigenvector centrality power iteration did not converge", max_iter)


def closeness_centrality(A):
    """Closeness ``(n - 1) / sum_w l_vw`` with edge length ``1 / A[v, w]``.

    Zero-weight edges are absent. On a disconnected graph each node's value
    uses only the nodes it can reach (``n`` becomes the reachable count,
    itself included) and a ``RuntimeWarning`` is emitted; isolated nodes get 0.
    """
    A = _check_adjacency(A)
    n = A.shape[0]
    lengths = np.zeros_like(A)
    edges = A > 0
    lengths[edges] = 1.0 / A[edges]
    dist = dijkstra(csr_matrix(lengths), directed=False)
    reach = np.isfinite(dist)
    counts = reach.sum(axis=1)
    totals = np.where(reach, dist, 0.0).sum(axis=1)
    if np.any(counts < n):
        warnings.warn(
            "graph is disconnected; closeness restricted to reachable nodes",
            RuntimeWarning,
            stacklevel=2,
        )
    out = np.zeros(n)
    ok = totals > 0
    out[ok] = (counts[ok] - 1) / totals[ok]
    return out


def minmax_scale(v):
    """Map ``v`` affinely onto [0, 1]; constant vectors map to all zeros."""
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise ValidationError("cannot scale an empty vector")
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def upper_triangle(S, include_diagonal=True):
    """Row-major upper triangle of a square matrix."""
    S = np.asarray(S, dtype=float)
    rows, cols = np.triu_indices(S.shape[0], k=0 if include_diagonal else 1)
    return S[rows, cols]


def tangent_graph(S):
    """Adjacency built from a tangent matrix: ``|S|`` with zero diagonal."""
    W = np.abs(np.asarray(S, dtype=float))
    np.fill_diagonal(W, 0.0)
    return W


def _centralities(W, which):
    if not np.any(W):
        # identical endpoints give an edgeless tangent graph; no node is central
        return [np.zeros(W.shape[0]) for _ in which]
    funcs = {"dc": degree_centrality, "ec": eigenvector_centrality, "cc": closeness_centrality}
    return [funcs[m](W) for m in which]


def pair_feature(Pi, Pj, S_ij, method):
    """Feature vector describing the difference between two SPD matrices.

    ``S_ij`` is the tangent matrix ``logm(Pj) - logm(Pi)``; for ``g`` its
    Frobenius norm is the Log-Euclidean distance. ``a`` compares the raw
    upper triangles and ignores the geometry.
    """
    if method == "a":
        diff = upper_triangle(Pi) - upper_triangle(Pj)
        return np.array([np.linalg.norm(diff)])
    if method == "g":
        return np.array([np.linalg.norm(S_ij, "fro")])
    if method == "tm":
        return upper_triangle(S_ij)
    W = tangent_graph(S_ij)
    if method in CENTRALITY_METHODS:
        return _centralities(W, (method,))[0]
    if method == "cnu":
        return np.concatenate(_centralities(W, CENTRALITY_METHODS))
    if method == "cns":
        return np.concatenate([minmax_scale(c) for c in _centralities(W, CENTRALITY_METHODS)])
    raise ValidationError(f"unknown feature method {method!r}; expected one of {METHODS}")
