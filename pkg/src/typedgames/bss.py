"""Blind source separation as a game.

Sources are mixed by a shared matrix; PCA on each batch is a quadratic
game and fourth-order cumulants of whitened data recover an orthogonal
mixing matrix through a symmetric tensor-SVD.
"""
import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dynamics import DynamicsConfig, nash_check, simulate
from .errors import ShapeError, WhiteningError
from .game import Ball, BlockBall, Quadratic, block_game, open_game
from .linalg import as_matrix
from .safety import SamplerConfig, certify_quadratic_block, certify_quadratic_open, empirical_safety
from .tensor import recover_symmetric_tensor_svd

DISTRIBUTIONS = ("uniform", "laplace", "two-point", "gaussian")
# excess kurtosis of the unit-variance versions
EXCESS_KURTOSIS = {"uniform": -1.2, "laplace": 3.0, "two-point": -2.0, "gaussian": 0.0}


@dataclass(frozen=True, eq=False)
class SignalBatch:
    """``D x T`` samples, one row per channel."""

    data: np.ndarray
    seed: Optional[int] = None
    dist: str = ""

    def __post_init__(self):
        X = as_matrix(self.data, "data")
        if X.shape[1] < 1:
            raise ShapeError("a batch needs at least one sample")
        object.__setattr__(self, "data", X)

    @property
    def channels(self):
        return self.data.shape[0]

    @property
    def samples(self):
        return self.data.shape[1]

    def to_csv(self, path):
        """Header line ``D,T,seed,dist`` (values), then one row per channel."""
        seed = "" if self.seed is None else str(self.seed)
        with open(path, "w", newline="") as fh:
            fh.write(f"{self.channels},{self.samples},{seed},{self.dist}\n")
            for row in self.data:
                fh.write(",".join("%.17g" % v for v in row) + "\n")

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            D, T, seed, dist = fh.readline().rstrip("\n").split(",", 3)
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        if data.shape != (int(D), int(T)):
            raise ShapeError(f"header says {D}x{T}, body is {data.shape[0]}x{data.shape[1]}")
        return cls(data, int(seed) if seed else None, dist)


def _draw(rng, dist, T):
    if dist == "uniform":
        return rng.uniform(-np.sqrt(3), np.sqrt(3), T)
    if dist == "laplace":
        return rng.laplace(0.0, 1 / np.sqrt(2), T)
    if dist == "two-point":
        return rng.choice([-1.0, 1.0], T)
    if dist == "gaussian":
        return rng.standard_normal(T)
    raise ValueError(f"unsupported distribution {dist!r}; choose from {DISTRIBUTIONS}")


def generate_sources(L, T, dist="uniform", seed=0, decorrelate=False):
    """Independent zero-mean unit-variance rows.

    ``dist`` names one distribution or lists one per row.  With
    ``decorrelate`` the rows are centered and whitened so that
    ``S S^T / T`` is exactly the identity (needs ``T > L``).
    """
    dists = [dist] * L if isinstance(dist, str) else list(dist)
    if len(dists) != L:
        raise ShapeError(f"need {L} distributions, got {len(dists)}")
    rng = np.random.default_rng(seed)
    S = np.vstack([_draw(rng, d, T) for d in dists]) if L else np.zeros((0, T))
    if decorrelate:
        S = S - S.mean(axis=1, keepdims=True)
        vals, vecs = np.linalg.eigh(S @ S.T / T)
        if vals.min() <= 1e-12 * max(1.0, vals.max()):
            raise WhiteningError("sources are linearly dependent")
        S = vecs @ np.diag(vals ** -0.5) @ vecs.T @ S
    label = dist if isinstance(dist, str) else "+".join(dists)
    return SignalBatch(S, seed, label)


def random_orthogonal(rng, n):
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


@dataclass(frozen=True, eq=False)
class MixingModel:
    """``X = M S + noise * N``; ``structure`` is checked on construction.

    ``blocks`` holds ``(P_nn, R_n)`` pairs for the block-view structure,
    where view ``n`` is ``M_n = P_nn R_n`` with ``R_n`` diagonal.
    """

    M: np.ndarray
    structure: str = "general"
    blocks: Optional[tuple] = None
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        M = as_matrix(self.M, "M")
        object.__setattr__(self, "M", M)
        if self.noise < 0:
            raise ValueError("noise level must be nonnegative")
        if self.structure == "orthogonal":
            if np.linalg.norm(M.T @ M - np.eye(M.shape[1])) > 1e-9:
                raise ShapeError("orthogonal mixing needs orthonormal columns")
        elif self.structure == "block_view":
            if not self.blocks:
                raise ShapeError("block-view mixing needs its (P_nn, R_n) blocks")
            start = 0
            for P, R in self.blocks:
                P, R = as_matrix(P), as_matrix(R)
                k = P.shape[0]
                if np.linalg.norm(P.T @ P - np.eye(k)) > 1e-9:
                    raise ShapeError("view bases must be orthogonal")
                if np.abs(R - _rect_diag_part(R)).max(initial=0.0) > 0:
                    raise ShapeError("view scalings must be diagonal")
                if np.linalg.norm(M[start:start + k] - P @ R) > 1e-9 * max(1.0, np.linalg.norm(M)):
                    raise ShapeError("rows of M do not match the view blocks")
                start += k
            if start != M.shape[0]:
                raise ShapeError("view blocks do not cover the rows of M")
        elif self.structure != "general":
            raise ValueError(f"unknown mixing structure {self.structure!r}")

    @property
    def sizes(self):
        return tuple(np.asarray(P).shape[0] for P, _ in self.blocks) if self.blocks else (self.M.shape[0],)

    @classmethod
    def orthogonal(cls, D, seed=0, noise=0.0):
        return cls(random_orthogonal(np.random.default_rng(seed), D), "orthogonal", noise=noise, seed=seed)

    @classmethod
    def block_view(cls, sizes, L, seed=0, noise=0.0):
        """Random views ``M_n = P_nn R_n``; ``R_n`` has a diagonal in ``(0.5, 2)``."""
        if any(s > L for s in sizes):
            raise ShapeError("each view can see at most L latent signals")
        rng = np.random.default_rng(seed)
        blocks = []
        for s in sizes:
            R = np.zeros((s, L))
            R[np.arange(s), np.arange(s)] = rng.uniform(0.5, 2.0, s)
            blocks.append((random_orthogonal(rng, s), R))
        M = np.vstack([P @ R for P, R in blocks])
        return cls(M, "block_view", tuple(blocks), noise, seed)


def _rect_diag_part(R):
    out = np.zeros_like(R)
    k = min(R.shape)
    out[np.arange(k), np.arange(k)] = R[np.arange(k), np.arange(k)]
    return out


def mix(model, S, seed=None):
    S = S.data if isinstance(S, SignalBatch) else as_matrix(S, "S")
    if S.shape[0] != model.M.shape[1]:
        raise ShapeError(f"mixing expects {model.M.shape[1]} sources, got {S.shape[0]}")
    X = model.M @ S
    if model.noise > 0:
        rng = np.random.default_rng(model.seed if seed is None else seed)
        X = X + model.noise * rng.standard_normal(X.shape)
    return SignalBatch(X, seed, "mixed")


def covariance(X, normalized=False):
    """Gram matrix ``X X^T``, divided by ``T`` when ``normalized``."""
    X = X.data if isinstance(X, SignalBatch) else as_matrix(X, "X")
    C = X @ X.T
    return C / X.shape[1] if normalized else C


def fourth_cumulant_tensor(X):
    """Sample fourth-order cumulant tensor of centered data.

    Each entry is computed once per sorted index tuple and copied to all
    permutations, so the result is exactly symmetric.
    """
    X = X.data if isinstance(X, SignalBatch) else as_matrix(X, "X")
    X = X - X.mean(axis=1, keepdims=True)
    D, T = X.shape
    C = X @ X.T / T
    K = np.empty((D,) * 4)
    for idx in itertools.combinations_with_replacement(range(D), 4):
        i, j, k, l = idx
        m4 = float(np.mean(X[i] * X[j] * X[k] * X[l]))
        val = m4 - C[i, j] * C[k, l] - C[i, k] * C[j, l] - C[i, l] * C[j, k]
        for perm in set(itertools.permutations(idx)):
            K[perm] = val
    return K


def whiten(X):
    """Symmetric whitening ``Z = C^{-1/2} (X - mean)``; returns ``(Z, C^{1/2})``."""
    X = X.data if isinstance(X, SignalBatch) else as_matrix(X, "X")
    X = X - X.mean(axis=1, keepdims=True)
    C = X @ X.T / X.shape[1]
    vals, vecs = np.linalg.eigh(C)
    if vals.min() <= 1e-10 * max(1.0, vals.max()):
        raise WhiteningError(f"covariance is rank deficient (smallest eigenvalue {vals.min():.3e})")
    inv_sqrt = vecs @ np.diag(vals ** -0.5) @ vecs.T
    return inv_sqrt @ X, vecs @ np.diag(vals ** 0.5) @ vecs.T


# -- PCA games --------------------------------------------------------------

def pca_game(batches, normalized=False):
    """Open game with ``l_n(w) = -1/2 w^T X_n X_n^T w`` on the unit ball."""
    mats = [-covariance(X, normalized) for X in batches]
    if len({A.shape for A in mats}) != 1:
        raise ShapeError("all batches need the same number of channels")
    D = mats[0].shape[0]
    return open_game([Quadratic(A) for A in mats], D, Ball(np.zeros(D), 1.0))


def block_pca_game(batches, sizes, normalized=False):
    """Player ``n`` picks a unit vector for view ``n`` and scores it against batch ``n``."""
    mats = [-covariance(X, normalized) for X in batches]
    return block_game([Quadratic(A) for A in mats], sizes, BlockBall(sizes, 1.0))


def shared_mixing_batches(model, n_batches, T, dist="uniform", seed=0):
    """Batches ``M diag(s_n) S_n`` with exactly decorrelated sources and random scales ``s_n``."""
    rng = np.random.default_rng(seed)
    L = model.M.shape[1]
    out = []
    for n in range(n_batches):
        S = generate_sources(L, T, dist, int(rng.integers(2 ** 32)), decorrelate=True).data
        scales = rng.uniform(0.5, 2.0, L)
        out.append(SignalBatch(model.M @ (scales[:, None] * S), seed, "mixed"))
    return out


# -- cumulant recovery ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RecoveryResult:
    mixing: np.ndarray
    kurtosis: np.ndarray
    reliable: bool
    reason: str
    angles: Optional[np.ndarray] = None


def match_columns(estimate, truth):
    """Angles (degrees) between matched columns, up to permutation and sign."""
    E = estimate / np.linalg.norm(estimate, axis=0)
    Tm = truth / np.linalg.norm(truth, axis=0)
    cos = np.abs(Tm.T @ E)
    rows, cols = linear_sum_assignment(-cos)
    angles = np.degrees(np.arccos(np.clip(cos[rows, cols], -1.0, 1.0)))
    return angles, cols


def recover_mixing(X, L=None, truth=None):
    """Recover an orthogonal mixing matrix from fourth-order cumulants.

    The data are whitened, the cumulant tensor of the whitened data is
    decomposed by :func:`recover_symmetric_tensor_svd` and the factors are
    mapped back.  Near-Gaussian sources (some ``|kurtosis|`` below
    ``max(0.1, 30/sqrt(T))``) make the result unreliable; it is then
    returned with ``reliable=False`` instead of raising.  Raises
    DegenerateSpectrumError when reliable kurtoses have equal magnitudes.
    """
    X = X.data if isinstance(X, SignalBatch) else as_matrix(X, "X")
    D, T = X.shape
    L = D if L is None else L
    Z, sqrt_cov = whiten(X)
    K = fourth_cumulant_tensor(Z)
    f = recover_symmetric_tensor_svd(K, L, gap_tol=-1.0, verify=False)
    kurt = f.d
    floor = max(0.1, 30 / np.sqrt(T))
    reliable, reason = True, ""
    if np.abs(kurt).min() < floor:
        reliable, reason = False, f"a kurtosis estimate is below {floor:.3g} in magnitude; sources look Gaussian"
    else:
        # non-Gaussian spectrum: rerun with the identifiability check switched on
        f = recover_symmetric_tensor_svd(K, L, gap_tol=10 / np.sqrt(T), verify=False)
        rel_res = np.linalg.norm(K - _compose_sym(f)) / max(np.linalg.norm(K), 1e-300)
        if rel_res > 0.5:
            reliable, reason = False, f"cumulant tensor is far from diagonalizable (relative residual {rel_res:.2f})"
    mixing = sqrt_cov @ f.factors[0]
    mixing = mixing / np.linalg.norm(mixing, axis=0)
    angles = None
    if truth is not None:
        angles, _ = match_columns(mixing, as_matrix(truth))
    return RecoveryResult(mixing, f.d, reliable, reason, angles)


def _compose_sym(f):
    P = f.factors[0]
    return np.einsum("r,ir,jr,kr,lr->ijkl", f.d, P, P, P, P)


# -- block-view pipeline ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class BlockViewReport:
    certificate: object
    safety: object
    trajectory_rounds: int
    trajectory_reason: str
    nash: list


def block_view_demo(model, n_batches=None, T=2000, seed=0, samples=1000, rounds=2000):
    """Generate one batch per view, certify the block PCA game and simulate it."""
    sizes = model.sizes
    n_batches = len(sizes) if n_batches is None else n_batches
    if n_batches != len(sizes):
        raise ShapeError("need one batch per view")
    batches = shared_mixing_batches(model, n_batches, T, seed=seed)
    game = block_pca_game(batches, sizes, normalized=True)
    cert = certify_quadratic_block([l.A for l in game.losses], [l.b for l in game.losses], sizes)
    report = empirical_safety(game, SamplerConfig(samples, seed))
    rng = np.random.default_rng(seed)
    w0 = game.feasible.project(0.1 * rng.standard_normal(game.dim))
    traj = simulate(game, w0, DynamicsConfig(max_rounds=rounds, tol=1e-6))
    return BlockViewReport(cert, report, traj.rounds, traj.reason, nash_check(game, traj.final))


def certify_pca(batches, normalized=True):
    """Run the open quadratic certificate on the PCA game of ``batches``."""
    game = pca_game(batches, normalized)
    return certify_quadratic_open([l.A for l in game.losses], [l.b for l in game.losses])
