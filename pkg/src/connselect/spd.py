"""Log-Euclidean geometry on symmetric positive definite matrices.

Matrices are plain ``numpy.ndarray`` objects. Every routine symmetrizes its
input as ``(M + M.T) / 2`` before an eigendecomposition, which absorbs the
1e-15-scale asymmetry left by floating point products.

Under the Log-Euclidean metric the matrix logarithm is a global isometry
onto the flat space of symmetric matrices, so distances, geodesics and
parallel transport all become Euclidean operations on ``logm`` values.
"""

import numpy as np

from .errors import NumericalError, ValidationError

SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-8
DEFAULT_MU = 1e-10

CLAMP_MODES = ("entries", "eigenvalues")


def _square(M, name="matrix"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValidationError(f"{name} contains non-finite values")
    return M


def check_symmetric(M, tol=SYMMETRY_TOL, name="matrix"):
    """Return ``M`` as a float array, raising if it is not symmetric within ``tol``.

    The tolerance is relative to the largest entry for matrices with entries
    above 1 in magnitude.
    """
    M = _square(M, name)
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    asym = float(np.max(np.abs(M - M.T))) if M.size else 0.0
    if asym > tol * scale:
        raise ValidationError(f"{name} is not symmetric (max |M - M^T| = {asym:.3g})")
    return M


def symmetrize(M):
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def _eigh(M):
    try:
        w, V = np.linalg.eigh(symmetrize(M))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"symmetric eigendecomposition failed: {exc}") from exc
    return w, V


def _spectral_map(w, V, f):
    return symmetrize((V * f(w)) @ V.T)


def regularize(C, mu=DEFAULT_MU):
    """Shift a PSD connectome into the SPD cone: ``C + mu * I``."""
    if not mu > 0:
        raise ValidationError(f"mu must be positive, got {mu}")
    C = check_symmetric(C, name="connectome")
    return C + mu * np.eye(C.shape[0])


def logm(P):
    """Matrix logarithm of an SPD matrix via its eigendecomposition."""
    P = _square(P, "SPD matrix")
    w, V = _eigh(P)
    if w.size and w[0] <= 0:
        raise NumericalError(
            f"matrix is not positive definite (smallest eigenvalue {w[0]:.3g})"
        )
    return _spectral_map(w, V, np.log)


def expm(S):
    """Matrix exponential of a symmetric matrix; the result is SPD."""
    S = _square(S, "tangent matrix")
    w, V = _eigh(S)
    return _spectral_map(w, V, np.exp)


def _same_dim(P, Q):
    if np.shape(P) != np.shape(Q):
        raise ValidationError(f"dimension mismatch: {np.shape(P)} vs {np.shape(Q)}")


def le_distance(P, Q):
    """Log-Euclidean distance ``||logm(P) - logm(Q)||_F``."""
    _same_dim(P, Q)
    return log_distance(logm(P), logm(Q))


def log_distance(logP, logQ):
    """Distance between two points given by their (cached) matrix logarithms."""
    return float(np.linalg.norm(logP - logQ, "fro"))


def tangent_at_identity(P, Q):
    """Tangent matrix of the geodesic P -> Q, parallel translated to ``T_I``.

    With the Log-Euclidean metric the translation is path independent and
    equals ``logm(Q) - logm(P)``.
    """
    _same_dim(P, Q)
    return logm(Q) - logm(P)


def geodesic_point(P, Q, t):
    """Point at parameter ``t`` on the geodesic from ``P`` (t=0) to ``Q`` (t=1)."""
    if not 0.0 <= t <= 1.0:
        raise ValidationError(f"t must lie in [0, 1], got {t}")
    _same_dim(P, Q)
    if t == 0.0:
        return symmetrize(P)
    if t == 1.0:
        return symmetrize(Q)
    return expm((1.0 - t) * logm(P) + t * logm(Q))


def clamp_negative(C, mode="entries"):
    """Zero out negative structure of a connectome.

    ``mode="entries"`` replaces negative off-diagonal correlations by 0.
    ``mode="eigenvalues"`` replaces negative eigenvalues by 0 and reassembles
    the matrix.
    """
    C = check_symmetric(C, name="connectome")
    if mode == "entries":
        out = C.copy()
        off = ~np.eye(C.shape[0], dtype=bool)
        out[off & (out < 0)] = 0.0
        return out
    if mode == "eigenvalues":
        w, V = _eigh(C)
        if w.size == 0 or w[0] >= 0:
            return C.copy()
        return _spectral_map(w, V, lambda x: np.maximum(x, 0.0))
    raise ValidationError(f"unknown clamp mode {mode!r}; expected one of {CLAMP_MODES}")


class LogCache:
    """Matrix logarithms of a cohort's regularized connectomes, computed once.

    ``cache[i]`` is ``logm(regularize(connectomes[i], mu))``; pairwise tangent
    matrices and distances are then differences of cached entries.
    """

    def __init__(self, connectomes, mu=DEFAULT_MU):
        self.mu = mu
        self.spd = [regularize(C, mu) for C in connectomes]
        self.logs = [logm(P) for P in self.spd]

    def __len__(self):
        return len(self.logs)

    def __getitem__(self, i):
        return self.logs[i]

    def tangent(self, i, j):
        return self.logs[j] - self.logs[i]

    def distance(self, i, j):
        return log_distance(self.logs[i], self.logs[j])
