"""Dense matrix primitives: orthogonal projections, PSD tests and
simultaneous diagonalization of commuting symmetric matrices or of
SVD-compatible matrix pairs.

Matrices are plain 2-D ``numpy`` arrays.  Every routine treats its inputs
as read-only and returns fresh arrays.
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    IncompatibleError,
    NotCommutingError,
    NotOrthonormalError,
    NotSymmetricError,
    RankDeficientError,
    ShapeError,
)


@dataclass(frozen=True)
class ToleranceConfig:
    abs_tol: float = 1e-9
    rel_tol: float = 1e-6
    psd_eig_tol: float = 1e-9

    def __post_init__(self):
        for name in ("abs_tol", "rel_tol", "psd_eig_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


DEFAULT_TOL = ToleranceConfig()


def as_matrix(M, name="matrix"):
    M = np.array(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def _square(M, name="matrix"):
    M = as_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {M.shape}")
    return M


def canonical_signs(P, *others, eps=1e-10):
    """Flip columns of ``P`` so the first entry with ``|x| > eps`` is positive.

    The same flips are applied to the columns of every array in ``others``.
    Returns the flipped copies ``(P, *others)``.
    """
    P = np.array(P, dtype=float)
    others = [np.array(o, dtype=float) for o in others]
    for j in range(P.shape[1]):
        nz = np.flatnonzero(np.abs(P[:, j]) > eps)
        if nz.size and P[nz[0], j] < 0:
            P[:, j] = -P[:, j]
            for o in others:
                o[:, j] = -o[:, j]
    return (P, *others) if others else P


def orthonormalize(cols, tol=1e-10):
    """Gram-Schmidt (with one re-orthogonalization pass) on the columns of ``cols``.

    Raises RankDeficientError naming the first column whose residual after
    projection is below ``tol`` relative to its original norm.
    """
    A = as_matrix(cols, "cols")
    Q = np.zeros_like(A)
    for j in range(A.shape[1]):
        v = A[:, j].copy()
        norm0 = np.linalg.norm(v)
        for _ in range(2):
            v -= Q[:, :j] @ (Q[:, :j].T @ v)
        norm = np.linalg.norm(v)
        if norm0 == 0 or norm <= tol * norm0:
            raise RankDeficientError(j)
        Q[:, j] = v / norm
    return Q


@dataclass(frozen=True, eq=False)
class Projection:
    """Orthogonal projection ``P P^T`` onto the span of orthonormal columns ``P``."""

    basis: np.ndarray

    @property
    def dim(self):
        return self.basis.shape[0]

    @property
    def rank(self):
        return self.basis.shape[1]

    @property
    def matrix(self):
        return self.basis @ self.basis.T

    def __call__(self, v):
        return self.basis @ (self.basis.T @ v)


def make_projection(P, tol=DEFAULT_TOL.abs_tol):
    P = as_matrix(P, "P")
    k = P.shape[1]
    residual = float(np.linalg.norm(P.T @ P - np.eye(k)))
    if residual > tol:
        raise NotOrthonormalError(residual)
    return Projection(P)


def projection_residuals(pi):
    """Return ``(||pi^2 - pi||_F, ||pi - pi^T||_F)`` for a square matrix."""
    pi = np.asarray(pi, dtype=float)
    return float(np.linalg.norm(pi @ pi - pi)), float(np.linalg.norm(pi - pi.T))


def _proj_matrix(p):
    return p.matrix if isinstance(p, Projection) else _square(p, "projection")


def projections_commute(a, b, tol=DEFAULT_TOL.abs_tol):
    A, B = _proj_matrix(a), _proj_matrix(b)
    if A.shape != B.shape:
        raise ShapeError(f"projection dims differ: {A.shape[0]} vs {B.shape[0]}")
    return bool(np.linalg.norm(A @ B - B @ A) <= tol)


def sym_antisym_split(M):
    M = _square(M)
    return 0.5 * (M + M.T), 0.5 * (M - M.T)


def is_psd(M, tol=DEFAULT_TOL.psd_eig_tol):
    """True iff the symmetric part of ``M`` has no eigenvalue below ``-tol``.

    The antisymmetric part never contributes to ``w^T M w``.
    """
    sym, _ = sym_antisym_split(M)
    return bool(np.linalg.eigvalsh(sym).min() >= -tol)


def _commutator_scale(A, B):
    return max(1.0, np.linalg.norm(A) * np.linalg.norm(B))


def simultaneous_diagonalize_symmetric(mats, tol=DEFAULT_TOL.abs_tol, seed=0, retries=5):
    """Find an orthogonal ``P`` with ``P^T A_i P`` diagonal for every ``A_i``.

    Parameters
    ----------
    mats : sequence of (D, D) symmetric arrays
    tol : float
        Tolerance for symmetry, commutators and off-diagonal residuals.  It is
        scaled by ``max(1, ||A_i|| ||A_j||)`` (commutators) or
        ``max(1, ||A_i||)`` (everything else) so that large Gram matrices are
        handled on the same footing as unit-scale ones.
    seed : int
        Seed for the positive combination weights.

    Returns
    -------
    P : (D, D) array
        Orthogonal, columns ordered by the diagonal of the first matrix
        (descending, ties broken by the later matrices), first nonzero entry
        of every column positive.
    diags : (N, D) array
        ``diags[i]`` is the diagonal of ``P^T A_i P``.
    """
    mats = [_square(A, f"mats[{i}]") for i, A in enumerate(mats)]
    if not mats:
        raise ValueError("need at least one matrix")
    D = mats[0].shape[0]
    for i, A in enumerate(mats):
        if A.shape != (D, D):
            raise ShapeError(f"mats[{i}] has shape {A.shape}, expected {(D, D)}")
        if np.linalg.norm(A - A.T) > tol * max(1.0, np.linalg.norm(A)):
            raise NotSymmetricError(f"mats[{i}] is not symmetric")
    mats = [0.5 * (A + A.T) for A in mats]
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            res = np.linalg.norm(mats[i] @ mats[j] - mats[j] @ mats[i])
            if res > tol * _commutator_scale(mats[i], mats[j]):
                raise NotCommutingError((i, j), float(res))

    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(retries):
        weights = rng.uniform(0.5, 1.5, size=len(mats))
        scales = [max(np.linalg.norm(A), 1e-300) for A in mats]
        combo = sum(w * A / s for w, A, s in zip(weights, mats, scales))
        _, P = np.linalg.eigh(combo)
        cores = [P.T @ A @ P for A in mats]
        off = max(
            np.linalg.norm(C - np.diag(np.diag(C))) / max(1.0, np.linalg.norm(A))
            for C, A in zip(cores, mats)
        )
        if off <= tol:
            diags = np.array([np.diag(C) for C in cores])
            order = np.lexsort(tuple(-diags[::-1]))
            P, diags = P[:, order], diags[:, order]
            return canonical_signs(P), diags
        worst = min(worst, off)
    raise NotCommutingError((0, len(mats) - 1), float(worst))


def check_svd_compatibility(A, B, tol=DEFAULT_TOL.abs_tol):
    """Necessary condition for a shared SVD: ``A^T B`` and ``A B^T`` symmetric."""
    A, B = as_matrix(A, "A"), as_matrix(B, "B")
    if A.shape != B.shape:
        raise ShapeError(f"shape mismatch: {A.shape} vs {B.shape}")
    scale = _commutator_scale(A, B)
    left, right = A.T @ B, A @ B.T
    return bool(
        np.linalg.norm(left - left.T) <= tol * scale
        and np.linalg.norm(right - right.T) <= tol * scale
    )


class SVDPair(NamedTuple):
    """``A = P diag(D) Q^T`` and ``B = P diag(E) Q^T`` (rectangular diagonals)."""

    P: np.ndarray
    D: np.ndarray
    Q: np.ndarray
    E: np.ndarray


def rect_diag(d, shape):
    out = np.zeros(shape)
    k = len(d)
    out[np.arange(k), np.arange(k)] = d
    return out


def _clusters(values, gap):
    """Split indices of a descending sequence into runs closer than ``gap``."""
    groups, start = [], 0
    for i in range(1, len(values) + 1):
        if i == len(values) or values[i - 1] - values[i] > gap:
            groups.append(np.arange(start, i))
            start = i
    return groups


def simultaneous_svd_pair(A, B, tol=DEFAULT_TOL.abs_tol):
    """Shared singular bases for a pair of SVD-compatible matrices.

    Takes the SVD of ``A`` and resolves each block of (numerically) equal
    singular values by diagonalizing ``B`` restricted to it.  The null block
    of ``A`` is resolved with an SVD of the restricted ``B``.  The result is
    verified; failure raises IncompatibleError.
    """
    A, B = as_matrix(A, "A"), as_matrix(B, "B")
    if A.shape != B.shape:
        raise ShapeError(f"shape mismatch: {A.shape} vs {B.shape}")
    if not check_svd_compatibility(A, B, tol):
        raise IncompatibleError("A^T B or A B^T is not symmetric; no shared SVD exists")
    m, n = A.shape
    k = min(m, n)
    U, s, Vt = np.linalg.svd(A)
    V = Vt.T
    scale = max(1.0, s[0] if s.size else 0.0)
    gap = 1e-8 * scale
    positive = int(np.sum(s > gap))

    for block in _clusters(s[:positive], gap):
        if block.size == 1:
            continue
        C = U[:, block].T @ B @ V[:, block]
        _, W = np.linalg.eigh(0.5 * (C + C.T))
        U[:, block] = U[:, block] @ W
        V[:, block] = V[:, block] @ W
    if positive < max(m, n):
        C = U[:, positive:].T @ B @ V[:, positive:]
        if C.size:
            Y, _, Zt = np.linalg.svd(C)
            U[:, positive:] = U[:, positive:] @ Y
            V[:, positive:] = V[:, positive:] @ Zt.T

    F = U.T @ B @ V
    d = np.diag(U.T @ A @ V)[:k].copy()
    e = np.diag(F)[:k].copy()
    # singular values of A stay nonnegative; signs live in E
    flip = d < 0
    U[:, :k][:, flip] *= -1
    d[flip] *= -1
    e[flip] *= -1

    for j in range(max(m, n)):
        col = U[:, j] if j < m else None
        if col is None:
            continue
        nz = np.flatnonzero(np.abs(col) > 1e-10)
        if nz.size and col[nz[0]] < 0:
            U[:, j] = -col
            if j < n:
                V[:, j] = -V[:, j]

    d = np.diag(U.T @ A @ V)[:k].copy()
    e = np.diag(U.T @ B @ V)[:k].copy()
    res_a = np.linalg.norm(A - U @ rect_diag(d, A.shape) @ V.T)
    res_b = np.linalg.norm(B - U @ rect_diag(e, B.shape) @ V.T)
    limit = tol * max(1.0, np.linalg.norm(A), np.linalg.norm(B))
    if res_a > limit or res_b > limit:
        raise IncompatibleError(
            f"could not align shared singular subspaces (residuals {res_a:.3e}, {res_b:.3e})"
        )
    return SVDPair(U, d, V, e)
