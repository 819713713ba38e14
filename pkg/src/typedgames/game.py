"""Games over a typed vector space.

A game bundles a type structure (mutually annihilating orthogonal
projections summing to the identity), an assignment of players to
projections, one loss per player and a feasible set.  Players and
projections are indexed from 0.
"""
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InfeasibleError, LossEvaluationError, ShapeError
from .linalg import DEFAULT_TOL, Projection, as_matrix, make_projection
from .tensor import multilinear_eval, partial_contract


# -- type structures --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TypeStructure:
    projections: tuple

    def __post_init__(self):
        projs = tuple(p if isinstance(p, Projection) else make_projection(p)
                      for p in self.projections)
        object.__setattr__(self, "projections", projs)
        if not projs:
            raise ValueError("a type needs at least one projection")
        D = projs[0].dim
        if any(p.dim != D for p in projs):
            raise ShapeError("projections act on spaces of different dimension")
        if sum(p.rank for p in projs) != D:
            raise ValueError(f"projection ranks sum to {sum(p.rank for p in projs)}, expected {D}")
        tol = DEFAULT_TOL.abs_tol
        total = sum(p.matrix for p in projs)
        if np.linalg.norm(total - np.eye(D)) > tol:
            raise ValueError("projections do not sum to the identity")
        for r, p in enumerate(projs):
            for s, q in enumerate(projs[r + 1:], r + 1):
                if np.linalg.norm(p.matrix @ q.matrix) > tol:
                    raise ValueError(f"projections {r} and {s} are not mutually orthogonal")

    @classmethod
    def block(cls, sizes):
        """One coordinate block per projection, in order."""
        D = int(sum(sizes))
        eye, start, projs = np.eye(D), 0, []
        for size in sizes:
            projs.append(eye[:, start:start + size])
            start += size
        return cls(tuple(projs))

    @classmethod
    def open(cls, dim):
        return cls((np.eye(dim),))

    @property
    def dim(self):
        return self.projections[0].dim

    @property
    def rank(self):
        return len(self.projections)

    def matrix(self, r):
        return self.projections[r].matrix


# -- feasible sets ----------------------------------------------------------

class FeasibleSet:
    """Closed convex set with Euclidean projection and uniform sampling."""

    def project(self, x):
        raise NotImplementedError

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        return bool(np.linalg.norm(self.project(x) - x) <= tol)

    def sample(self, rng, count):
        raise NotImplementedError

    @property
    def diameter(self):
        raise NotImplementedError

    def check_dim(self, dim):
        pass


@dataclass(frozen=True)
class Unconstrained(FeasibleSet):
    def project(self, x):
        return np.array(x, dtype=float)

    def contains(self, x, tol=1e-9):
        return True

    def sample(self, rng, count):
        raise ValueError("cannot sample an unconstrained set; pass an explicit region")

    @property
    def diameter(self):
        return np.inf


@dataclass(frozen=True, eq=False)
class Ball(FeasibleSet):
    center: np.ndarray
    radius: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).ravel())
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    def project(self, x):
        x = np.asarray(x, dtype=float)
        offset = x - self.center
        norm = np.linalg.norm(offset)
        if norm <= self.radius:
            return x.copy()
        return self.center + offset * (self.radius / norm)

    def sample(self, rng, count):
        D = self.center.size
        out = np.empty((count, D))
        filled = 0
        while filled < count:
            cand = rng.uniform(-1.0, 1.0, size=(2 * (count - filled) + 8, D))
            cand = cand[np.einsum("ij,ij->i", cand, cand) <= 1.0]
            take = min(len(cand), count - filled)
            out[filled:filled + take] = cand[:take]
            filled += take
        return self.center + self.radius * out

    @property
    def diameter(self):
        return 2.0 * self.radius

    def check_dim(self, dim):
        if self.center.size != dim:
            raise ShapeError(f"ball center has length {self.center.size}, expected {dim}")


@dataclass(frozen=True, eq=False)
class Box(FeasibleSet):
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).ravel()
        hi = np.asarray(self.hi, dtype=float).ravel()
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("box needs lo <= hi with matching lengths")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def project(self, x):
        return np.clip(np.asarray(x, dtype=float), self.lo, self.hi)

    def sample(self, rng, count):
        return rng.uniform(self.lo, self.hi, size=(count, self.lo.size))

    @property
    def diameter(self):
        return float(np.linalg.norm(self.hi - self.lo))

    def check_dim(self, dim):
        if self.lo.size != dim:
            raise ShapeError(f"box has {self.lo.size} coordinates, expected {dim}")


def project_simplex(v):
    """Euclidean projection of ``v`` onto the probability simplex (sort and threshold)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.flatnonzero(u - css / k > 0)[-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


@dataclass(frozen=True)
class BlockSimplex(FeasibleSet):
    """Product of probability simplices, one per consecutive coordinate block."""

    sizes: tuple

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if any(s < 1 for s in self.sizes):
            raise ValueError("simplex blocks must be nonempty")

    def _slices(self):
        start = 0
        for s in self.sizes:
            yield slice(start, start + s)
            start += s

    def project(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        for sl in self._slices():
            out[sl] = project_simplex(x[sl])
        return out

    def sample(self, rng, count):
        return np.hstack([rng.dirichlet(np.ones(s), size=count) for s in self.sizes])

    @property
    def diameter(self):
        return float(np.sqrt(2.0 * sum(1 for s in self.sizes if s > 1)))

    def check_dim(self, dim):
        if sum(self.sizes) != dim:
            raise ShapeError(f"simplex blocks cover {sum(self.sizes)} coordinates, expected {dim}")


@dataclass(frozen=True)
class BlockBall(FeasibleSet):
    """Product of centred balls, one per consecutive coordinate block."""

    sizes: tuple
    radius: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    def _balls(self):
        start = 0
        for s in self.sizes:
            yield slice(start, start + s), Ball(np.zeros(s), self.radius)
            start += s

    def project(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        for sl, ball in self._balls():
            out[sl] = ball.project(x[sl])
        return out

    def sample(self, rng, count):
        return np.hstack([ball.sample(rng, count) for _, ball in self._balls()])

    @property
    def diameter(self):
        return 2.0 * self.radius * np.sqrt(len(self.sizes))

    def check_dim(self, dim):
        if sum(self.sizes) != dim:
            raise ShapeError(f"ball blocks cover {sum(self.sizes)} coordinates, expected {dim}")


def project_feasible(H, x):
    return H.project(x)


# -- losses -----------------------------------------------------------------

class LossSpec:
    """A differentiable loss on the joint action space."""

    thread_safe = True

    def value(self, w):
        raise NotImplementedError

    def gradient(self, w):
        raise NotImplementedError

    def hessian(self, w):
        raise NotImplementedError

    def gradient_batch(self, W):
        return np.array([self.gradient(w) for w in W])

    def check_dim(self, dim):
        pass


@dataclass(frozen=True, eq=False)
class Quadratic(LossSpec):
    """``1/2 w^T A w + w^T b`` with ``A`` stored symmetrized."""

    A: np.ndarray
    b: np.ndarray = None

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        if A.shape[0] != A.shape[1]:
            raise ShapeError("quadratic loss needs a square matrix")
        b = np.zeros(A.shape[0]) if self.b is None else np.asarray(self.b, dtype=float).ravel()
        if b.size != A.shape[0]:
            raise ShapeError("linear term length does not match the matrix")
        object.__setattr__(self, "A", 0.5 * (A + A.T))
        object.__setattr__(self, "b", b)

    def value(self, w):
        return float(0.5 * w @ self.A @ w + w @ self.b)

    def gradient(self, w):
        return self.A @ w + self.b

    def gradient_batch(self, W):
        return W @ self.A + self.b

    def hessian(self, w):
        return self.A.copy()

    def check_dim(self, dim):
        if self.A.shape[0] != dim:
            raise ShapeError(f"quadratic loss has dimension {self.A.shape[0]}, expected {dim}")


@dataclass(frozen=True, eq=False)
class Bilinear(LossSpec):
    """``v^T A u`` where ``w = (v, u)`` with ``len(v) = A.shape[0]``."""

    A: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", as_matrix(self.A, "A"))

    def _split(self, w):
        m = self.A.shape[0]
        return w[..., :m], w[..., m:]

    def value(self, w):
        v, u = self._split(np.asarray(w, dtype=float))
        return float(v @ self.A @ u)

    def gradient(self, w):
        v, u = self._split(np.asarray(w, dtype=float))
        return np.concatenate([self.A @ u, self.A.T @ v])

    def gradient_batch(self, W):
        V, U = self._split(np.asarray(W, dtype=float))
        return np.hstack([U @ self.A.T, V @ self.A])

    def hessian(self, w):
        m, n = self.A.shape
        H = np.zeros((m + n, m + n))
        H[:m, m:] = self.A
        H[m:, :m] = self.A.T
        return H

    def check_dim(self, dim):
        if sum(self.A.shape) != dim:
            raise ShapeError(f"bilinear loss acts on {sum(self.A.shape)} coordinates, expected {dim}")


@dataclass(frozen=True, eq=False)
class Multilinear(LossSpec):
    """``T x_1 w_1 ... x_N w_N`` with ``w`` the concatenation of the ``w_n``."""

    tensor: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "tensor", np.asarray(self.tensor, dtype=float))

    @property
    def sizes(self):
        return self.tensor.shape

    def blocks(self, w):
        return np.split(np.asarray(w, dtype=float), np.cumsum(self.sizes)[:-1])

    def value(self, w):
        return multilinear_eval(self.tensor, self.blocks(w))

    def gradient(self, w):
        parts = self.blocks(w)
        return np.concatenate([
            partial_contract(self.tensor, parts[:n] + parts[n + 1:], n)
            for n in range(self.tensor.ndim)
        ])

    def gradient_batch(self, W):
        W = np.atleast_2d(np.asarray(W, dtype=float))
        N = self.tensor.ndim
        parts = np.split(W, np.cumsum(self.sizes)[:-1], axis=1)
        letters = "abcdefghijklmnopqrstuvwxy"[:N]
        out = []
        for n in range(N):
            others = [k for k in range(N) if k != n]
            spec = letters + "," + ",".join("z" + letters[k] for k in others) + "->z" + letters[n]
            out.append(np.einsum(spec, self.tensor, *[parts[k] for k in others], optimize=True))
        return np.hstack(out)

    def hessian(self, w):
        parts = self.blocks(w)
        N = self.tensor.ndim
        offsets = np.concatenate([[0], np.cumsum(self.sizes)])
        H = np.zeros((offsets[-1], offsets[-1]))
        for n in range(N):
            for m in range(n + 1, N):
                block = self.tensor
                for k in reversed(range(N)):
                    if k not in (n, m):
                        block = np.tensordot(block, parts[k], axes=(k, 0))
                H[offsets[n]:offsets[n + 1], offsets[m]:offsets[m + 1]] = block
                H[offsets[m]:offsets[m + 1], offsets[n]:offsets[n + 1]] = block.T
        return H

    def check_dim(self, dim):
        if sum(self.sizes) != dim:
            raise ShapeError(f"multilinear loss acts on {sum(self.sizes)} coordinates, expected {dim}")


def fd_step(w, rel):
    return rel * np.maximum(1.0, np.abs(w))


@dataclass(frozen=True, eq=False)
class BlackBox(LossSpec):
    """Arbitrary ``fn(w) -> float``; derivatives by central finite differences."""

    fn: Callable
    thread_safe: bool = True
    grad_step: float = 1e-5
    hess_step: float = 1e-4

    def value(self, w):
        try:
            out = float(self.fn(np.asarray(w, dtype=float)))
        except Exception as exc:  # noqa: BLE001 - surface any user failure uniformly
            raise LossEvaluationError(f"black-box loss failed: {exc}") from exc
        if not np.isfinite(out):
            raise LossEvaluationError(f"black-box loss returned {out}")
        return out

    def gradient(self, w):
        w = np.asarray(w, dtype=float)
        h = fd_step(w, self.grad_step)
        g = np.empty_like(w)
        for i in range(w.size):
            e = np.zeros_like(w)
            e[i] = h[i]
            g[i] = (self.value(w + e) - self.value(w - e)) / (2 * h[i])
        return g

    def hessian(self, w):
        w = np.asarray(w, dtype=float)
        h = fd_step(w, self.hess_step)
        D = w.size
        f0 = self.value(w)
        H = np.empty((D, D))
        for i in range(D):
            ei = np.zeros(D)
            ei[i] = h[i]
            H[i, i] = (self.value(w + ei) - 2 * f0 + self.value(w - ei)) / h[i] ** 2
            for j in range(i + 1, D):
                ej = np.zeros(D)
                ej[j] = h[j]
                H[i, j] = (self.value(w + ei + ej) - self.value(w + ei - ej)
                           - self.value(w - ei + ej) + self.value(w - ei - ej)) / (4 * h[i] * h[j])
                H[j, i] = H[i, j]
        return 0.5 * (H + H.T)


# -- games ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Game:
    types: TypeStructure
    assignment: tuple
    losses: tuple
    feasible: FeasibleSet = field(default_factory=Unconstrained)

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(int(r) for r in self.assignment))
        object.__setattr__(self, "losses", tuple(self.losses))
        if len(self.assignment) != len(self.losses):
            raise ShapeError(f"{len(self.assignment)} assignments for {len(self.losses)} losses")
        if any(not 0 <= r < self.types.rank for r in self.assignment):
            raise ValueError(f"assignment values must lie in [0, {self.types.rank})")
        for loss in self.losses:
            loss.check_dim(self.dim)
        self.feasible.check_dim(self.dim)

    @property
    def dim(self):
        return self.types.dim

    @property
    def n_players(self):
        return len(self.losses)

    def player_projection(self, n):
        return self.types.projections[self.assignment[n]]

    def player_matrix(self, n):
        return self.types.matrix(self.assignment[n])

    @property
    def is_block(self):
        return sorted(self.assignment) == list(range(self.types.rank))

    @property
    def thread_safe(self):
        return all(loss.thread_safe for loss in self.losses)


def block_game(losses: Sequence[LossSpec], sizes, feasible=None):
    """Player ``n`` controls the ``n``-th coordinate block."""
    return Game(TypeStructure.block(sizes), tuple(range(len(sizes))), tuple(losses),
                feasible or Unconstrained())


def open_game(losses: Sequence[LossSpec], dim, feasible=None):
    return Game(TypeStructure.open(dim), (0,) * len(losses), tuple(losses),
                feasible or Unconstrained())


def _check_point(game, w):
    w = np.asarray(w, dtype=float).ravel()
    if w.size != game.dim:
        raise ShapeError(f"joint action has length {w.size}, expected {game.dim}")
    return w


def loss_eval(game, n, w):
    return game.losses[n].value(_check_point(game, w))


def gradient(game, n, w):
    g = np.asarray(game.losses[n].gradient(_check_point(game, w)), dtype=float)
    if not np.all(np.isfinite(g)):
        raise LossEvaluationError(f"gradient of player {n} is not finite")
    return g


def projected_player_gradient(game, n, w):
    return game.player_projection(n)(gradient(game, n, w))


def is_decomposable(game, samples, tol=DEFAULT_TOL.abs_tol):
    """Check ``l_m(w) == l_m(pi_m w)`` at every sample point, for every player."""
    if not game.is_block:
        raise ValueError("decomposability is defined for block games only")
    for w in np.atleast_2d(samples):
        for m in range(game.n_players):
            pw = game.player_projection(m)(w)
            if abs(loss_eval(game, m, w) - loss_eval(game, m, pw)) > tol:
                return False
    return True


def feasible_point(game, w0, tol=1e-9):
    w0 = _check_point(game, w0)
    if not game.feasible.contains(w0, tol):
        raise InfeasibleError("starting point lies outside the feasible set")
    return w0
