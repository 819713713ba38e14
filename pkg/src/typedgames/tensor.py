"""Dense order-N tensors: n-mode products, matricization, HOSVD and
orthogonal (diagonal-core) tensor decompositions.

Tensors are ``numpy`` arrays in C order (last index fastest).  Modes are
numbered from 0.
"""
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import DegenerateSpectrumError, ShapeError, TensorStructureError
from .linalg import canonical_signs


def _tensor(T):
    T = np.asarray(T, dtype=float)
    if T.ndim < 1:
        raise ShapeError("tensor must have at least one mode")
    if not np.all(np.isfinite(T)):
        raise ValueError("tensor has non-finite entries")
    return T


def _mode(T, n):
    if not -T.ndim <= n < T.ndim:
        raise ShapeError(f"mode {n} out of range for an order-{T.ndim} tensor")
    return n % T.ndim


def n_mode_product(T, M, n):
    """``T x_n M``: contract mode ``n`` of ``T`` against the columns of ``M``."""
    T = _tensor(T)
    n = _mode(T, n)
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] != T.shape[n]:
        raise ShapeError(f"matrix has {M.shape[1]} columns, mode {n} has size {T.shape[n]}")
    return np.moveaxis(np.tensordot(M, T, axes=(1, n)), 0, n)


def cyclic_modes(order, n):
    """Modes ``n+1, ..., N-1, 0, ..., n-1``: the column order of an unfolding."""
    return [(n + k) % order for k in range(1, order)]


def matricize(T, n):
    """Mode-``n`` unfolding with cyclic column ordering.

    Column index runs over modes ``n+1, ..., N-1, 0, ..., n-1`` with the
    last of these varying fastest.
    """
    T = _tensor(T)
    n = _mode(T, n)
    return np.transpose(T, [n] + cyclic_modes(T.ndim, n)).reshape(T.shape[n], -1)


def fold(M, n, shape):
    """Inverse of :func:`matricize`."""
    order = len(shape)
    axes = [n] + cyclic_modes(order, n)
    full = np.asarray(M, dtype=float).reshape([shape[a] for a in axes])
    return np.transpose(full, np.argsort(axes))


def _check_actions(T, actions, modes):
    actions = [np.asarray(a, dtype=float).ravel() for a in actions]
    if len(actions) != len(modes):
        raise ShapeError(f"expected {len(modes)} vectors, got {len(actions)}")
    for a, m in zip(actions, modes):
        if a.size != T.shape[m]:
            raise ShapeError(f"vector for mode {m} has length {a.size}, expected {T.shape[m]}")
    return actions


def multilinear_eval(T, actions):
    """Full contraction ``sum T[a_1..a_N] w_1[a_1] ... w_N[a_N]``."""
    T = _tensor(T)
    actions = _check_actions(T, actions, range(T.ndim))
    out = T
    for w in reversed(actions):
        out = out @ w
    return float(out)


def partial_contract(T, actions, n):
    """Contract every mode except ``n``; ``actions`` lists the other N-1 vectors in mode order."""
    T = _tensor(T)
    n = _mode(T, n)
    others = [m for m in range(T.ndim) if m != n]
    actions = _check_actions(T, actions, others)
    out = np.moveaxis(T, n, -1)
    for w in reversed(actions):
        out = np.tensordot(out, w, axes=(-2, 0))
    return np.asarray(out, dtype=float).reshape(T.shape[n])


def kron_actions(actions, n):
    """``vec(w_1 x ... x w_N)`` without ``w_n``, in the unfolding column order."""
    order = len(actions)
    return reduce(np.kron, [np.asarray(actions[m], dtype=float) for m in cyclic_modes(order, n)],
                  np.ones(1))


@dataclass(frozen=True, eq=False)
class HOSVDResult:
    core: np.ndarray
    factors: list
    singular_values: list

    def reconstruct(self):
        return reduce(lambda acc, nm: n_mode_product(acc, nm[1], nm[0]),
                      enumerate(self.factors), self.core)


def hosvd(T):
    """Higher-order SVD ``T = S x_1 U^1 ... x_N U^N``.

    ``U^n`` are the (full, square) left singular vectors of the mode-n
    unfoldings with columns sign-normalized; the n-mode singular values are
    the Frobenius norms of the core slices ``S[..., i_n = k, ...]``.
    """
    T = _tensor(T)
    factors = []
    for n in range(T.ndim):
        U, _, _ = np.linalg.svd(matricize(T, n), full_matrices=True)
        factors.append(canonical_signs(U))
    core = T
    for n, U in enumerate(factors):
        core = n_mode_product(core, U.T, n)
    sigmas = [np.linalg.norm(matricize(core, n), axis=1) for n in range(T.ndim)]
    return HOSVDResult(core, factors, sigmas)


def all_orthogonality_residual(core):
    """Largest ``|<S_{i_n=a}, S_{i_n=b}>|`` over all modes and ``a != b``."""
    worst = 0.0
    for n in range(core.ndim):
        G = matricize(core, n) @ matricize(core, n).T
        worst = max(worst, float(np.abs(G - np.diag(np.diag(G))).max(initial=0.0)))
    return worst


@dataclass(frozen=True, eq=False)
class TensorSVDFactors:
    """``T = sum_l d_l u_l^1 x ... x u_l^N`` with orthonormal columns in every ``U^n``."""

    factors: list
    d: np.ndarray

    @property
    def rank(self):
        return len(self.d)

    @property
    def shape(self):
        return tuple(U.shape[0] for U in self.factors)

    def orthonormality_residual(self):
        L = self.rank
        return max((float(np.linalg.norm(U.T @ U - np.eye(L))) for U in self.factors),
                   default=0.0)


def _factor_shapes_ok(f):
    L = f.rank
    return all(np.ndim(U) == 2 and U.shape[1] == L for U in f.factors)


def compose_tensor_svd(f, tol=1e-9):
    """Sum of weighted outer products of the factor columns."""
    if not f.factors:
        raise ShapeError("need at least one factor matrix")
    if not _factor_shapes_ok(f):
        raise ShapeError("every factor must have rank(d) columns")
    if f.rank > min(f.shape):
        raise TensorStructureError(f"rank {f.rank} exceeds the smallest mode size {min(f.shape)}")
    if f.orthonormality_residual() > tol:
        raise TensorStructureError("factor columns are not orthonormal")
    out = np.zeros(f.shape)
    for l, dl in enumerate(f.d):
        out += dl * reduce(np.multiply.outer, [U[:, l] for U in f.factors])
    return out


def verify_tensor_svd(T, f, tol=1e-9):
    T = _tensor(T)
    if not _factor_shapes_ok(f) or f.shape != T.shape:
        raise ShapeError(f"factor shapes {f.shape} do not match tensor shape {T.shape}")
    if f.rank > min(f.shape) or f.orthonormality_residual() > tol:
        return False
    return bool(np.linalg.norm(T - compose_tensor_svd(f, tol)) <= tol * max(1.0, np.linalg.norm(T)))


def recover_symmetric_tensor_svd(T, L, tol=1e-8, gap_tol=None, verify=True):
    """Recover identical-factor decomposition ``T = sum_r d_r p_r x ... x p_r``.

    The mode-0 unfolding equals ``P diag(d) K^T`` with ``K`` having
    orthonormal columns, so its top-``L`` left singular vectors are the
    ``p_r`` and its singular values are ``|d_r|``.  Signs of ``d_r`` come from
    the full contraction ``T(p_r, ..., p_r)``.

    Raises DegenerateSpectrumError when two of the top ``L`` singular values
    are within ``gap_tol`` (default ``1e-6 * max(1, sigma_max)``), and
    TensorStructureError when ``verify`` is set and the result does not
    reproduce ``T``.
    """
    T = _tensor(T)
    if len(set(T.shape)) != 1:
        raise ShapeError(f"symmetric recovery needs equal mode sizes, got {T.shape}")
    D, order = T.shape[0], T.ndim
    if not 0 <= L <= D:
        raise ValueError(f"rank {L} out of range for mode size {D}")
    U, s, _ = np.linalg.svd(matricize(T, 0), full_matrices=False)
    s = s[:L]
    if gap_tol is None:
        gap_tol = 1e-6 * max(1.0, s[0] if L else 0.0)
    if L > 1:
        gaps = np.abs(np.diff(s))
        if gaps.min() <= gap_tol:
            i = int(np.argmin(gaps))
            raise DegenerateSpectrumError(
                f"singular values {i} and {i + 1} coincide ({s[i]:.6g} vs {s[i + 1]:.6g}); "
                "factors are not identifiable"
            )
    P = canonical_signs(U[:, :L])
    d = np.array([multilinear_eval(T, [P[:, r]] * order) for r in range(L)])
    f = TensorSVDFactors([P] * order, d)
    if verify and not verify_tensor_svd(T, f, tol):
        raise TensorStructureError("tensor does not admit a symmetric tensor-SVD of the given rank")
    return f
