"""Safety of gradient play and sufficient-condition certificates.

``empirical_safety`` samples the pairwise inner products
``<pi_m grad l_m, grad l_n>``; the ``certify_*`` functions check the
structural (strong-typing) conditions that guarantee those inner products
are nonnegative everywhere.  Certificates are verification-first: a failed
search returns ``Inconclusive``, which says nothing about unsafety.
"""
import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import IncompatibleError, NotCommutingError, NotSymmetricError, ShapeError
from .game import Ball, Game, LossSpec, Quadratic, Unconstrained, gradient
from .linalg import (
    DEFAULT_TOL,
    as_matrix,
    is_psd,
    projections_commute,
    simultaneous_diagonalize_symmetric,
    simultaneous_svd_pair,
)
from .tensor import (
    TensorSVDFactors,
    compose_tensor_svd,
    hosvd,
    n_mode_product,
    partial_contract,
    verify_tensor_svd,
)


class Verdict(str, enum.Enum):
    SAFE = "safe"
    VIOLATION = "violation_found"
    CERTIFIED = "certified"
    REFUTED = "refuted"
    INCONCLUSIVE = "inconclusive"


# -- empirical safety -------------------------------------------------------

@dataclass(frozen=True)
class SamplerConfig:
    count: int = 1000
    seed: int = 0
    region: Optional[object] = None


@dataclass(frozen=True, eq=False)
class SafetyReport:
    n_samples: int
    pair_min: np.ndarray
    worst_point: np.ndarray
    worst_pair: tuple
    worst_value: float
    seed: int
    verdict: Verdict

    @property
    def is_safe(self):
        return self.verdict is Verdict.SAFE


def pairwise_safety_at(game, w, direction=None):
    """Matrix with entry ``(m, n) = <pi_rho(m) xi_m, grad l_n(w)>``.

    ``xi_m`` is the gradient of ``l_m`` unless ``direction(game, m, w)``
    supplies another update direction (Newton, natural gradient, ...).
    """
    w = np.asarray(w, dtype=float)
    grads = np.array([gradient(game, n, w) for n in range(game.n_players)])
    xis = grads if direction is None else np.array(
        [direction(game, m, w) for m in range(game.n_players)])
    proj = np.array([game.player_projection(m)(xis[m]) for m in range(game.n_players)])
    return proj @ grads.T


def pairwise_safety_batch(game, W, direction=None):
    """``pairwise_safety_at`` for every row of ``W``; shape ``(k, N, N)``."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if direction is not None:
        return np.array([pairwise_safety_at(game, w, direction) for w in W])
    grads = np.stack([loss.gradient_batch(W) for loss in game.losses], axis=1)
    if not np.all(np.isfinite(grads)):
        raise ValueError("non-finite gradient encountered while sampling")
    proj = np.stack([grads[:, m] @ game.player_matrix(m) for m in range(game.n_players)], axis=1)
    return np.einsum("kmd,knd->kmn", proj, grads)


def sample_region(game, sampler):
    region = sampler.region or game.feasible
    if isinstance(region, Unconstrained):
        region = Ball(np.zeros(game.dim), 1.0)
    rng = np.random.default_rng(sampler.seed)
    return region.sample(rng, sampler.count)


def empirical_safety(game, sampler=None, direction=None, tol=DEFAULT_TOL.abs_tol):
    """Evaluate pairwise safety on seeded samples of the feasible set.

    Unconstrained games are sampled on the unit ball around the origin unless
    ``sampler.region`` says otherwise.
    """
    sampler = sampler or SamplerConfig()
    points = sample_region(game, sampler)
    values = pairwise_safety_batch(game, points, direction)
    pair_min = values.min(axis=0)
    flat = values.reshape(len(points), -1)
    k, idx = np.unravel_index(np.argmin(flat), flat.shape)
    worst_pair = tuple(int(i) for i in np.unravel_index(idx, pair_min.shape))
    worst = float(flat[k, idx])
    verdict = Verdict.VIOLATION if worst < -tol else Verdict.SAFE
    return SafetyReport(len(points), pair_min, points[k].copy(), worst_pair, worst,
                        sampler.seed, verdict)


# -- certificates -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CertificateResult:
    verdict: Verdict
    reason: str = ""
    witness: dict = field(default_factory=dict)
    violation: Optional[tuple] = None
    empirical: bool = False

    @property
    def certified(self):
        return self.verdict is Verdict.CERTIFIED


def _refuted(reason, violation=None, **witness):
    return CertificateResult(Verdict.REFUTED, reason, witness, violation)


def sign_violation(diagonals, tol=DEFAULT_TOL.abs_tol):
    """First ``(m, n, l)`` with ``d[m, l] d[n, l] < -tol * scale``, else None."""
    d = np.atleast_2d(np.asarray(diagonals, dtype=float))
    scale = max(1.0, float(np.abs(d).max(initial=0.0)) ** 2)
    prod = d[:, None, :] * d[None, :, :]
    bad = np.argwhere(prod < -tol * scale)
    return tuple(int(i) for i in bad[0]) if len(bad) else None


def zero_coordinates(diagonals):
    """Latent coordinates where some player's coefficient is exactly zero."""
    d = np.atleast_2d(np.asarray(diagonals, dtype=float))
    return [int(l) for l in np.flatnonzero(np.any(d == 0.0, axis=0))]


def common_offset(mats, vecs, tol=DEFAULT_TOL.abs_tol):
    """Least-squares ``b`` with ``b^(n) = A^(n) b``; returns ``(b, ok, residual)``."""
    stack_a = np.vstack(mats)
    stack_b = np.concatenate([np.asarray(v, dtype=float).ravel() for v in vecs])
    b = np.linalg.lstsq(stack_a, stack_b, rcond=None)[0]
    residual = float(np.linalg.norm(stack_a @ b - stack_b))
    scale = max(1.0, np.linalg.norm(stack_a) * np.linalg.norm(b), np.linalg.norm(stack_b))
    return b, residual <= tol * scale, residual


# strong typing

class InnerMap:
    def __call__(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def values(self, X):
        return np.array([self(x) for x in X])

    def grad_batch(self, X):
        return np.array([self.grad(x) for x in X])


@dataclass(frozen=True, eq=False)
class AffineQuadraticMap(InnerMap):
    """``f(x) = r^T (x/2 - b) * r^T x``."""

    r: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r", np.atleast_1d(np.asarray(self.r, dtype=float)))
        object.__setattr__(self, "b", np.atleast_1d(np.asarray(self.b, dtype=float)))

    def __call__(self, x):
        return float(self.r @ (x / 2 - self.b) * (self.r @ x))

    def grad(self, x):
        return self.r * (self.r @ x - self.r @ self.b)

    def values(self, X):
        return (X @ self.r / 2 - self.r @ self.b) * (X @ self.r)

    def grad_batch(self, X):
        return np.outer(X @ self.r - self.r @ self.b, self.r)


@dataclass(frozen=True, eq=False)
class LinearMap(InnerMap):
    """``f(x) = r^T x``."""

    r: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r", np.atleast_1d(np.asarray(self.r, dtype=float)))

    def __call__(self, x):
        return float(self.r @ x)

    def grad(self, x):
        return self.r.copy()

    def values(self, X):
        return X @ self.r

    def grad_batch(self, X):
        return np.tile(self.r, (len(X), 1))


class ProductMap(InnerMap):
    """``f(x) = prod_n x_n``."""

    def __call__(self, x):
        return float(np.prod(x))

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        return np.array([np.prod(np.delete(x, n)) for n in range(x.size)])

    def values(self, X):
        return np.prod(X, axis=1)

    def grad_batch(self, X):
        return np.stack([np.prod(np.delete(X, n, axis=1), axis=1) for n in range(X.shape[1])], axis=1)


@dataclass(frozen=True, eq=False)
class CallableMap(InnerMap):
    fn: Callable
    step: float = 1e-6

    def __call__(self, x):
        return float(self.fn(np.asarray(x, dtype=float)))

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        g = np.empty_like(x)
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = self.step * max(1.0, abs(x[i]))
            g[i] = (self(x + e) - self(x - e)) / (2 * e[i])
        return g


@dataclass(frozen=True, eq=False)
class FactorizationSpec:
    """``l_n(w) = g_n(f_1(P_1^T w), ..., f_L(P_L^T w))``.

    ``outer`` is either an ``(N, L)`` coefficient array (linear ``g_n``) or a
    list of ``N`` callables taking the latent vector ``z``.
    """

    bases: Sequence[np.ndarray]
    inner: Sequence[InnerMap]
    outer: object

    def __post_init__(self):
        object.__setattr__(self, "bases", [as_matrix(P, "basis") for P in self.bases])
        if len(self.bases) != len(self.inner):
            raise ShapeError("need one inner map per latent basis")
        is_callables = isinstance(self.outer, (list, tuple)) and all(callable(g) for g in self.outer)
        if is_callables:
            object.__setattr__(self, "outer", list(self.outer))
        else:
            object.__setattr__(self, "outer", np.atleast_2d(np.asarray(self.outer, dtype=float)))

    @property
    def linear(self):
        return isinstance(self.outer, np.ndarray)

    @property
    def n_latent(self):
        return len(self.bases)

    def latents(self, w):
        return np.array([f(P.T @ w) for P, f in zip(self.bases, self.inner)])

    def outer_value(self, n, z):
        if self.linear:
            return float(self.outer[n] @ z)
        return float(self.outer[n](z))

    def outer_grad(self, n, z, step=1e-6):
        if self.linear:
            return self.outer[n].copy()
        g = np.empty_like(z)
        for l in range(z.size):
            e = np.zeros_like(z)
            e[l] = step * max(1.0, abs(z[l]))
            g[l] = (self.outer_value(n, z + e) - self.outer_value(n, z - e)) / (2 * e[l])
        return g


@dataclass(frozen=True, eq=False)
class FactorizedLoss(LossSpec):
    """Loss of player ``player`` defined directly by a factorization, with exact gradients."""

    spec: FactorizationSpec
    player: int

    def value(self, w):
        return self.spec.outer_value(self.player, self.spec.latents(np.asarray(w, dtype=float)))

    def gradient(self, w):
        w = np.asarray(w, dtype=float)
        z = self.spec.latents(w)
        dg = self.spec.outer_grad(self.player, z)
        return sum(dg[l] * (P @ f.grad(P.T @ w)) for l, (P, f) in enumerate(zip(self.spec.bases, self.spec.inner)))

    def gradient_batch(self, W):
        W = np.atleast_2d(np.asarray(W, dtype=float))
        if not self.spec.linear:
            return super().gradient_batch(W)
        d = self.spec.outer[self.player]
        return sum(d[l] * (f.grad_batch(W @ P) @ P.T) for l, (P, f) in enumerate(zip(self.spec.bases, self.spec.inner)))

    def check_dim(self, dim):
        if any(P.shape[0] != dim for P in self.spec.bases):
            raise ShapeError(f"factorization acts on a different dimension than {dim}")


def certify_strong_typing(game: Game, spec: FactorizationSpec, sampler=None, tol=DEFAULT_TOL):
    """Check the strong-typing conditions for a supplied factorization.

    (a) latent bases jointly orthonormal and spanning; (b) every latent
    projection commutes with every type projection; (c) the factorization
    reproduces every loss at sampled points; (d) the outer maps co-vary
    monotonically.  For black-box outer maps (d) is only sampled, and a
    pass is reported as ``Certified`` with ``empirical=True``.
    """
    sampler = sampler or SamplerConfig(count=200)
    D = game.dim
    if any(P.shape[0] != D for P in spec.bases):
        raise ShapeError(f"latent bases must have {D} rows")
    if spec.linear and spec.outer.shape != (game.n_players, spec.n_latent):
        raise ShapeError(f"linear outer coefficients must have shape {(game.n_players, spec.n_latent)}")
    if not spec.linear and len(spec.outer) != game.n_players:
        raise ShapeError("need one outer map per player")

    joint = np.hstack(spec.bases)
    gram_res = float(np.linalg.norm(joint.T @ joint - np.eye(joint.shape[1])))
    if joint.shape[1] != D or gram_res > tol.abs_tol:
        return _refuted(f"latent bases are not a joint orthonormal basis (Gram residual {gram_res:.3e}, "
                        f"{joint.shape[1]} columns for dimension {D})", gram_residual=gram_res)

    taus = [P @ P.T for P in spec.bases]
    for l, tau in enumerate(taus):
        for r in range(game.types.rank):
            if not projections_commute(tau, game.types.matrix(r), tol.abs_tol):
                return _refuted(f"latent projection {l} does not commute with type projection {r}",
                                violation=(l, r))

    points = sample_region(game, sampler)
    worst_rec = 0.0
    latents = []
    for w in points:
        z = spec.latents(w)
        latents.append(z)
        for n, loss in enumerate(game.losses):
            target = loss.value(w)
            err = abs(target - spec.outer_value(n, z))
            worst_rec = max(worst_rec, err / max(1.0, abs(target)))
    if worst_rec > tol.rel_tol:
        return _refuted(f"factorization does not reproduce the losses (relative error {worst_rec:.3e})",
                        reconstruction_error=worst_rec)

    if spec.linear:
        bad = sign_violation(spec.outer, tol.abs_tol)
        if bad is not None:
            m, n, l = bad
            return _refuted(f"outer maps of players {m} and {n} co-vary with opposite signs in latent {l}",
                            violation=bad, coefficients=spec.outer)
        return CertificateResult(Verdict.CERTIFIED, "strongly typed",
                                 dict(coefficients=spec.outer, reconstruction_error=worst_rec,
                                      zero_coordinates=zero_coordinates(spec.outer)))

    for z in latents:
        grads = np.array([spec.outer_grad(n, z) for n in range(game.n_players)])
        bad = sign_violation(grads, tol.rel_tol)
        if bad is not None:
            return CertificateResult(Verdict.REFUTED,
                                     f"sampled outer derivatives co-vary with opposite signs at latent {bad[2]}",
                                     dict(latent_point=z), bad, empirical=True)
    return CertificateResult(Verdict.CERTIFIED, "strongly typed on sampled latents",
                             dict(reconstruction_error=worst_rec), empirical=True)


# bilinear

def certify_bilinear(A, B, tol=DEFAULT_TOL):
    """Shared SVD with nonnegative paired diagonals, plus the PSD cross-check.

    The PSD test of ``A^T B`` and ``B A^T`` is reported independently in
    ``witness["psd_cross_check"]``.
    """
    A, B = as_matrix(A, "A"), as_matrix(B, "B")
    psd = is_psd(A.T @ B, tol.psd_eig_tol) and is_psd(B @ A.T, tol.psd_eig_tol)
    try:
        P, d, Q, e = simultaneous_svd_pair(A, B, tol.abs_tol)
    except IncompatibleError as exc:
        return CertificateResult(Verdict.INCONCLUSIVE, f"no shared SVD: {exc}",
                                 dict(psd_cross_check=psd))
    witness = dict(P=P, D=d, Q=Q, E=e, psd_cross_check=psd)
    bad = sign_violation(np.vstack([d, e]), tol.abs_tol)
    if bad is not None:
        l = bad[2]
        return CertificateResult(Verdict.REFUTED, f"D E is negative at coordinate {l}", witness, (l,))
    witness["zero_coordinates"] = zero_coordinates(np.vstack([d, e]))
    return CertificateResult(Verdict.CERTIFIED, "shared SVD with D E >= 0", witness)


# quadratic, open

def _symmetric_inputs(mats, vecs, tol):
    mats = [as_matrix(A, f"A[{n}]") for n, A in enumerate(mats)]
    for n, A in enumerate(mats):
        if A.shape[0] != A.shape[1] or np.linalg.norm(A - A.T) > tol * max(1.0, np.linalg.norm(A)):
            raise NotSymmetricError(f"A[{n}] is not symmetric")
    vecs = [np.asarray(v, dtype=float).ravel() for v in vecs]
    if len(vecs) != len(mats) or any(v.size != mats[0].shape[0] for v in vecs):
        raise ShapeError("need one linear term of matching length per matrix")
    return mats, vecs


def certify_quadratic_open(mats, vecs, tol=DEFAULT_TOL):
    """Common eigenbasis, same-sign eigenvalues and a common offset ``b``.

    ``witness["b"]`` solves ``b^(n) = A^(n) b``; the gradients are then
    ``A^(n) (w - center)`` with ``center = -b``.
    """
    mats, vecs = _symmetric_inputs(mats, vecs, tol.abs_tol)
    try:
        P, diags = simultaneous_diagonalize_symmetric(mats, tol.abs_tol)
    except NotCommutingError as exc:
        return _refuted(f"matrices are not simultaneously diagonalizable: {exc}", violation=exc.pair)
    residual = max(np.linalg.norm(A - P @ np.diag(d) @ P.T) / max(1.0, np.linalg.norm(A))
                   for A, d in zip(mats, diags))
    witness = dict(P=P, diagonals=diags, reconstruction_residual=float(residual),
                   zero_coordinates=zero_coordinates(diags))
    bad = sign_violation(diags, tol.abs_tol)
    if bad is not None:
        m, n, l = bad
        return CertificateResult(Verdict.REFUTED,
                                 f"D^({m}) D^({n}) is negative at latent coordinate {l}", witness, bad)
    b, ok, res = common_offset(mats, vecs, tol.abs_tol)
    witness.update(b=b, center=-b, offset_residual=res)
    if not ok:
        return CertificateResult(Verdict.REFUTED,
                                 f"no common b with b^(n) = A^(n) b (residual {res:.3e})", witness)
    return CertificateResult(Verdict.CERTIFIED, "simultaneously diagonalizable with same-sign spectra",
                             witness)


# quadratic, block

@dataclass(frozen=True, eq=False)
class BlockWitness:
    """``A^(n) = P R diag(diagonals[n]) R^T P^T`` and ``b^(n) = A^(n) b``."""

    P: np.ndarray
    R: np.ndarray
    diagonals: np.ndarray
    b: np.ndarray


def _block_slices(sizes):
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    return [slice(offsets[i], offsets[i + 1]) for i in range(len(sizes))]


def verify_block_witness(mats, vecs, sizes, witness, tol=DEFAULT_TOL):
    """Return ``(CertificateResult, residual)`` for a supplied block witness."""
    P, R = as_matrix(witness.P, "P"), as_matrix(witness.R, "R")
    diags = np.atleast_2d(np.asarray(witness.diagonals, dtype=float))
    b = np.asarray(witness.b, dtype=float).ravel()
    D = sum(sizes)
    info = dict(P=P, R=R, diagonals=diags, b=b)
    if P.shape != (D, D) or R.shape[0] != D or diags.shape != (len(mats), R.shape[1]):
        raise ShapeError("witness shapes do not match the game")
    if np.linalg.norm(P.T @ P - np.eye(D)) > tol.abs_tol:
        return _refuted("P is not orthogonal", **info)
    slices = _block_slices(sizes)
    for i, si in enumerate(slices):
        for j, sj in enumerate(slices):
            if i != j and np.abs(P[si, sj]).max(initial=0.0) > tol.abs_tol:
                return _refuted(f"P has a nonzero off-diagonal block ({i}, {j})", violation=(i, j), **info)
    for i, si in enumerate(slices):
        block = R[si]
        off = block.copy()
        k = min(block.shape)
        off[np.arange(k), np.arange(k)] = 0.0
        if np.abs(off).max(initial=0.0) > tol.abs_tol:
            return _refuted(f"row block {i} of R is not diagonal", violation=(i,), **info)
    bad = sign_violation(diags, tol.abs_tol)
    if bad is not None:
        m, n, l = bad
        return _refuted(f"D^({m}) D^({n}) is negative at latent coordinate {l}", violation=bad, **info)
    residual = 0.0
    for A, v, d in zip(mats, vecs, diags):
        rec = P @ R @ np.diag(d) @ R.T @ P.T
        residual = max(residual, np.linalg.norm(A - rec) / max(1.0, np.linalg.norm(A)),
                       np.linalg.norm(v - A @ b) / max(1.0, np.linalg.norm(A) * np.linalg.norm(b)))
    info.update(reconstruction_residual=float(residual), zero_coordinates=zero_coordinates(diags))
    if residual > tol.abs_tol:
        return CertificateResult(Verdict.REFUTED,
                                 f"witness does not reproduce the game (residual {residual:.3e})", info)
    return CertificateResult(Verdict.CERTIFIED, "block-structured shared factorization", info)


def search_block_witness(mats, sizes, tol=DEFAULT_TOL):
    """Constructive witness search, or ``(None, reason)``.

    Diagonal blocks ``A^(n)_mm`` commute and are jointly diagonalized by
    ``P_mm``.  In that basis each latent factor couples at most one
    coordinate per block; its couplings must be rank one, giving ``R`` and
    the diagonals.  Latents are ordered so every row block of ``R`` is
    diagonal, which needs the sets of latents seen by each block to be
    nested.
    """
    D = sum(sizes)
    slices = _block_slices(sizes)
    P = np.zeros((D, D))
    for i, sl in enumerate(slices):
        try:
            Pm, _ = simultaneous_diagonalize_symmetric([A[sl, sl] for A in mats], tol.abs_tol)
        except NotCommutingError as exc:
            return None, f"diagonal blocks {i} do not commute: {exc}"
        P[sl, sl] = Pm
    cores = [P.T @ A @ P for A in mats]
    scale = max(1.0, max(np.linalg.norm(A) for A in mats))
    linked = np.zeros((D, D), dtype=bool)
    for C in cores:
        linked |= np.abs(C) > tol.abs_tol * scale
    n_comp, labels = connected_components(linked, directed=False)
    block_of = np.concatenate([[i] * s for i, s in enumerate(sizes)])

    comps = []
    for c in range(n_comp):
        coords = np.flatnonzero(labels == c)
        if len(set(block_of[coords])) != len(coords):
            return None, "a latent factor couples two coordinates of the same block"
        sub = [C[np.ix_(coords, coords)] for C in cores]
        ref = max(sub, key=np.linalg.norm)
        vals, vecs_ = np.linalg.eigh(ref)
        if np.linalg.norm(ref) == 0:
            r = np.zeros(len(coords))
            r[0] = 1.0
        else:
            r = vecs_[:, np.argmax(np.abs(vals))]
        d = np.array([r @ K @ r for K in sub])
        if max(np.linalg.norm(K - dn * np.outer(r, r)) for K, dn in zip(sub, d)) > tol.abs_tol * scale:
            return None, "latent couplings are not rank one"
        comps.append((coords, r, d))

    comps.sort(key=lambda c: (-len(c[0]), int(c[0][0])))
    L = len(comps)
    R = np.zeros((D, L))
    P_new = np.zeros_like(P)
    diags = np.zeros((len(mats), L))
    for l, (coords, r, d) in enumerate(comps):
        diags[:, l] = d
        for coord, rv in zip(coords, r):
            blk = block_of[coord]
            if l >= sizes[blk]:
                return None, "the latent factors seen by the blocks are not nested"
            target = slices[blk].start + l
            P_new[:, target] = P[:, coord]
            R[target, l] = rv
    for i, sl in enumerate(slices):
        seen = {l for l, (coords, _, _) in enumerate(comps) if any(block_of[c] == i for c in coords)}
        if seen != set(range(sizes[i])):
            return None, "the latent factors seen by the blocks are not nested"
    return BlockWitness(P_new, R, diags, np.zeros(D)), ""


def certify_quadratic_block(mats, vecs, sizes, witness: Optional[BlockWitness] = None,
                            tol=DEFAULT_TOL):
    """Block-structured simultaneous factorization for block quadratic games.

    With ``witness`` the supplied factors are verified.  Without it a
    constructive search is attempted (see :func:`search_block_witness`);
    if it fails the verdict is ``Inconclusive``.
    """
    mats, vecs = _symmetric_inputs(mats, vecs, tol.abs_tol)
    sizes = tuple(int(s) for s in sizes)
    if sum(sizes) != mats[0].shape[0] or any(s < 1 for s in sizes):
        raise ShapeError(f"block sizes {sizes} do not partition dimension {mats[0].shape[0]}")
    if witness is None:
        found, reason = search_block_witness(mats, sizes, tol)
        if found is None:
            return CertificateResult(Verdict.INCONCLUSIVE, f"no witness found: {reason}")
        b, ok, res = common_offset(mats, vecs, tol.abs_tol)
        if not ok:
            return CertificateResult(Verdict.REFUTED,
                                     f"no common b with b^(n) = A^(n) b (residual {res:.3e})",
                                     dict(P=found.P, R=found.R, diagonals=found.diagonals))
        witness = BlockWitness(found.P, found.R, found.diagonals, b)
    return verify_block_witness(mats, vecs, sizes, witness, tol)


# multilinear

def certify_multilinear(tensors, factors, diagonals, tol=DEFAULT_TOL):
    """Shared tensor-SVD factors with coordinatewise same-sign diagonals."""
    tensors = [np.asarray(T, dtype=float) for T in tensors]
    diagonals = np.atleast_2d(np.asarray(diagonals, dtype=float))
    if any(T.shape != tensors[0].shape for T in tensors):
        raise ShapeError("all tensors must have the same shape")
    if len(diagonals) != len(tensors):
        raise ShapeError("need one diagonal per tensor")
    factors = [as_matrix(U, "factor") for U in factors]
    witness = dict(factors=factors, diagonals=diagonals, reconstruction_residual=0.0)
    for i, (T, d) in enumerate(zip(tensors, diagonals)):
        f = TensorSVDFactors(factors, d)
        if not verify_tensor_svd(T, f, tol.abs_tol):
            return _refuted(f"tensor {i} is not reproduced by the shared factors", violation=(i,), **witness)
        residual = float(np.linalg.norm(T - compose_tensor_svd(f)))
        witness["reconstruction_residual"] = max(witness["reconstruction_residual"], residual)
    bad = sign_violation(diagonals, tol.abs_tol)
    if bad is not None:
        m, n, l = bad
        return _refuted(f"diagonals {m} and {n} have opposite signs at coordinate {l}", violation=bad,
                        **witness)
    witness["zero_coordinates"] = zero_coordinates(diagonals)
    return CertificateResult(Verdict.CERTIFIED, "simultaneous tensor-SVD with same-sign diagonals", witness)


# -- potential games --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PotentialCheck:
    is_potential: bool
    weights: Optional[tuple] = None
    ratio: Optional[float] = None
    potential: Optional[Callable] = None


def _proportional(C1, C2, tol):
    n1, n2 = np.linalg.norm(C1), np.linalg.norm(C2)
    if n1 == 0 and n2 == 0:
        return 1.0
    if n1 == 0 or n2 == 0:
        return None
    c = float(np.sum(C1 * C2) / n1 ** 2)
    if c <= tol or np.linalg.norm(C2 - c * C1) > tol * max(1.0, n2):
        return None
    return c


def potential_check_bilinear(A, B, tol=DEFAULT_TOL.abs_tol):
    """Weighted-potential test for ``l_1 = x^T A y``, ``l_2 = x^T B y``.

    The game is a weighted potential game iff ``B = c A`` with ``c > 0``;
    then ``Phi = x^T A y`` with weights ``(1, c)``.
    """
    A, B = as_matrix(A, "A"), as_matrix(B, "B")
    if A.shape != B.shape:
        raise ShapeError(f"shape mismatch: {A.shape} vs {B.shape}")
    c = _proportional(A, B, tol)
    if c is None:
        return PotentialCheck(False)
    m = A.shape[0]
    return PotentialCheck(True, (1.0, c), c, lambda w: float(w[:m] @ A @ w[m:]))


def potential_check_quadratic(game, tol=DEFAULT_TOL.abs_tol):
    """Weighted-potential test for a two-player block game with quadratic losses.

    Own-block terms never obstruct a potential; the cross blocks must be
    positively proportional.  The returned potential is ``l_1`` plus the
    second player's own-block terms divided by the ratio.
    """
    if game.n_players != 2 or not game.is_block or not all(isinstance(l, Quadratic) for l in game.losses):
        raise ValueError("expected a two-player block game with quadratic losses")
    p = game.player_projection(0)
    if not np.allclose(p.basis, np.eye(game.dim)[:, :p.rank]):
        raise ValueError("expected player 0 to control the leading coordinates")
    m = p.rank
    (A1, b1), (A2, b2) = [(l.A, l.b) for l in game.losses]
    c = _proportional(A1[:m, m:], A2[:m, m:], tol)
    if c is None:
        return PotentialCheck(False)

    def potential(w):
        x, y = w[:m], w[m:]
        own2 = 0.5 * y @ A2[m:, m:] @ y + y @ b2[m:]
        return float(0.5 * x @ A1[:m, :m] @ x + x @ A1[:m, m:] @ y + x @ b1[:m] + own2 / c)

    return PotentialCheck(True, (1.0, c), c, potential)


# -- HOSVD is not enough ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class InsufficiencyWitness:
    A: np.ndarray
    B: np.ndarray
    point: list
    mode: int
    value: float
    trial: int


def _random_orthogonal(rng, n):
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def cross_safety(A, B, actions, n):
    """``<pi_n grad l_A, grad l_B>`` for a multilinear pair, via partial contractions."""
    others = actions[:n] + actions[n + 1:]
    return float(partial_contract(A, others, n) @ partial_contract(B, others, n))


def hosvd_insufficiency_search(dims=(2, 2, 2), seed=0, trials=10_000, kind="hosvd", points=1):
    """Randomized search for two tensors with shared factors whose game is unsafe.

    ``kind`` selects the cores: ``"hosvd"`` draws all-orthogonal cores (the
    HOSVD cores of random tensors, so both tensors share their HOSVD factor
    matrices), ``"tensor_svd"`` draws diagonal cores with same-sign
    diagonals and ``"zero"`` makes the second tensor vanish.  Actions are
    sampled from the product of simplices.  Returns the first violating
    pair or None.
    """
    dims = tuple(int(d) for d in dims)
    if any(d > 3 for d in dims):
        raise ValueError("the search is meant for mode sizes <= 3")
    rng = np.random.default_rng(seed)
    L = min(dims)
    for trial in range(trials):
        Us = [_random_orthogonal(rng, d) for d in dims]
        if kind == "hosvd":
            S = hosvd(rng.standard_normal(dims)).core
            T = hosvd(rng.standard_normal(dims)).core
        elif kind == "tensor_svd":
            signs = rng.choice([-1.0, 1.0], size=L)
            S = compose_tensor_svd(TensorSVDFactors([np.eye(d)[:, :L] for d in dims],
                                                    signs * rng.uniform(0.1, 2, L)))
            T = compose_tensor_svd(TensorSVDFactors([np.eye(d)[:, :L] for d in dims],
                                                    signs * rng.uniform(0.1, 2, L)))
        elif kind == "zero":
            S = hosvd(rng.standard_normal(dims)).core
            T = np.zeros(dims)
        else:
            raise ValueError(f"unknown core kind {kind!r}")
        A, B = S, T
        for n, U in enumerate(Us):
            A = n_mode_product(A, U, n)
            B = n_mode_product(B, U, n)
        for _ in range(points):
            actions = [rng.dirichlet(np.ones(d)) for d in dims]
            for n in range(len(dims)):
                for X, Y in ((A, B), (B, A)):
                    value = cross_safety(X, Y, actions, n)
                    if value < -1e-12:
                        return InsufficiencyWitness(A, B, actions, n, value, trial)
    return None


def shares_hosvd_factors(A, B, tol=1e-8):
    """True iff the HOSVD factor matrices of ``A`` and ``B`` agree up to column signs."""
    fa, fb = hosvd(A).factors, hosvd(B).factors
    return all(np.allclose(np.abs(Ua.T @ Ub), np.eye(Ua.shape[0]), atol=tol) for Ua, Ub in zip(fa, fb))
